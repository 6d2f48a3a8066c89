"""Small random instances shared by the unit and acceptance tests."""
import numpy as np

from piecelab.chains import ModelParams, decompose
from piecelab.densities import ComponentState, slater_wavefunction, wavefunction_densities
from piecelab.disorder import PieceConfiguration
from piecelab.spectra import Potential

# filled by the acceptance tests, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def params(l_min: float, M: float) -> ModelParams:
    return ModelParams(0.1, M, 2.0, l_min, (np.pi / 2.0) ** 2)


def random_instance(rng: np.random.Generator, p: int = 2):
    """(decomp, U, n) with <= 8 pieces, sum of caps <= 12 and a random n <= sum of caps."""
    while True:
        r = int(rng.integers(2, 9))
        lengths = rng.uniform(0.2, 3.6, size=r)
        M = float(rng.choice([0.0, 0.4, 1.0]))
        d = decompose(PieceConfiguration.from_lengths(lengths), params(1.0, M), p)
        total = int(d.caps.sum())
        if 1 <= total <= 12:
            break
    U = Potential.step(float(rng.uniform(0.5, 3.0)), M) if M > 0 else Potential.zero()
    return d, U, int(rng.integers(0, total + 1))


def random_orbitals(rng, grid, piece, q):
    """q random orthonormal functions supported on one interval of the grid."""
    sel = grid.piece == piece
    A = np.zeros((grid.size, q))
    A[sel] = rng.standard_normal((sel.sum(), q))
    s = np.sqrt(grid.weights)[:, None]
    Q, _ = np.linalg.qr(A * s)
    return (Q / s).T


def random_pair_state(rng, grid, piece):
    """Correlated (non-Slater) normalized two-particle state on one interval."""
    phi = random_orbitals(rng, grid, piece, 4)
    C = rng.standard_normal((4, 4))
    C = C - C.T
    psi = phi.T @ C @ phi
    w = np.outer(grid.weights, grid.weights)
    return psi / np.sqrt(np.sum(psi**2 * w))


def component(rng, grid, piece, kind):
    if kind == "pair":
        psi = random_pair_state(rng, grid, piece)
    else:
        psi = slater_wavefunction(random_orbitals(rng, grid, piece, kind))
    g1, g2 = wavefunction_densities(psi, grid)
    return psi, ComponentState(g1, g2, psi.ndim)
