"""Interacting fermions on a Poisson-cut line: chain decomposition, pair levels, greedy ground states."""
__version__ = "0.1.0"

from .chains import ChainDecomposition, ModelParams, decompose, model_params
from .disorder import PieceConfiguration, sample_pieces
from .errors import (CapacityError, InfeasibleError, InvalidArgument, NumericalFailure, PiecelabError)
from .optimizer import LevelPool, Occupation, build_level_pool, greedy_fill
from .spectra import AsymptoticFit, Potential, SolverConfig, fit_asymptotics

__all__ = [
    "AsymptoticFit", "CapacityError", "ChainDecomposition", "InfeasibleError", "InvalidArgument",
    "LevelPool", "ModelParams", "NumericalFailure", "Occupation", "PieceConfiguration", "PiecelabError",
    "Potential", "SolverConfig", "build_level_pool", "decompose", "fit_asymptotics", "greedy_fill",
    "model_params", "sample_pieces",
]
