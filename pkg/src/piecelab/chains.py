"""Length thresholds and the chain decomposition of a piece configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .disorder import PieceConfiguration
from .errors import DensityTooLargeError, InvalidArgument


@dataclass(frozen=True)
class ModelParams:
    density: float
    interaction_range: float
    fermi_length: float
    minimal_length: float
    fermi_energy: float

    @property
    def rho(self) -> float:
        return self.density

    @property
    def M(self) -> float:
        return self.interaction_range


def model_params(rho: float, M: float) -> ModelParams:
    if not rho > 0:
        raise InvalidArgument(f"density must be positive, got {rho}")
    if not M >= 0:
        raise InvalidArgument(f"interaction range must be non-negative, got {M}")
    l_rho = -np.log(rho / (1.0 + rho))
    l_min = l_rho - (4.0 * M + 6.0) * rho
    if l_min <= 0:
        raise DensityTooLargeError(f"l_rho,U = {l_min:.6g} <= 0 for rho={rho}, M={M}")
    return ModelParams(float(rho), float(M), float(l_rho), float(l_min), float((np.pi / l_rho) ** 2))


@dataclass(frozen=True)
class Chain:
    piece_indices: tuple[int, ...]
    lengths: tuple[float, ...]
    gaps: tuple[float, ...]
    caps: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.piece_indices)

    @property
    def cap(self) -> int:
        return sum(self.caps)

    @property
    def position(self) -> int:
        return self.piece_indices[0]

    def distance(self, j: int, k: int) -> float:
        """Facing distance between members j < k (sum of the gaps in between plus spanned members)."""
        j, k = min(j, k), max(j, k)
        return float(sum(self.gaps[j:k]) + sum(self.lengths[j + 1:k]))


@dataclass(frozen=True)
class ChainDecomposition:
    config: PieceConfiguration = field(repr=False)
    params: ModelParams
    chains: tuple[Chain, ...] = field(repr=False)
    p: int
    small_chains: tuple[int, ...] = field(repr=False)
    leftover: np.ndarray = field(repr=False)
    caps: np.ndarray = field(repr=False)

    @property
    def chain_of_piece(self) -> np.ndarray:
        out = np.full(self.config.piece_count, -1, dtype=np.int64)
        for c, ch in enumerate(self.chains):
            out[list(ch.piece_indices)] = c
        return out

    @property
    def in_small(self) -> np.ndarray:
        """Per-piece mask: piece belongs to a chain of P_p."""
        mask = np.zeros(self.config.piece_count, dtype=bool)
        for c in self.small_chains:
            mask[list(self.chains[c].piece_indices)] = True
        return mask

    def to_json(self) -> str:
        small = set(self.small_chains)
        doc = {
            "p": self.p,
            "rho": self.params.density,
            "M": self.params.interaction_range,
            "minimal_length": self.params.minimal_length,
            "chains": [
                {
                    "pieces": [{"index": int(i), "length": float(x)}
                               for i, x in zip(ch.piece_indices, ch.lengths)],
                    "gaps": [float(g) for g in ch.gaps],
                    "small": c in small,
                }
                for c, ch in enumerate(self.chains)
            ],
            "leftover": [int(i) for i in self.leftover],
        }
        return json.dumps(doc, sort_keys=True)


def interacts(distance: float, M: float) -> bool:
    # Facing distance 0 (shared endpoint) only couples for M > 0.
    return M > 0 and distance <= M


def decompose(cfg: PieceConfiguration, params: ModelParams, p: int = 2) -> ChainDecomposition:
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    lengths = cfg.lengths
    l_min = params.minimal_length
    caps = np.floor(lengths / l_min).astype(np.int64)
    long_idx = np.flatnonzero(lengths >= l_min)
    caps[lengths < l_min] = 0
    breaks = _kernels.chain_breaks(cfg.lefts, cfg.rights, long_idx, params.interaction_range)
    starts = np.concatenate([[0], np.flatnonzero(breaks) + 1]) if long_idx.size else np.zeros(0, int)
    stops = np.concatenate([starts[1:], [long_idx.size]]) if long_idx.size else np.zeros(0, int)
    chains = []
    small = []
    in_small = np.zeros(cfg.piece_count, dtype=bool)
    for a, b in zip(starts, stops):
        idx = long_idx[a:b]
        gaps = cfg.lefts[idx[1:]] - cfg.rights[idx[:-1]]
        ch = Chain(tuple(int(i) for i in idx), tuple(lengths[idx].tolist()),
                   tuple(gaps.tolist()), tuple(int(c) for c in caps[idx]))
        if ch.cap < p + 1:
            small.append(len(chains))
            in_small[idx] = True
        chains.append(ch)
    leftover = np.flatnonzero(~in_small)
    caps.setflags(write=False)
    leftover.setflags(write=False)
    return ChainDecomposition(cfg, params, tuple(chains), int(p), tuple(small), leftover, caps)


def isolation_probability(params: ModelParams, adjacency: str = "exact") -> float:
    """Probability that the nearest long piece on one side lies beyond the interaction range.

    ``"continuum"`` is the first-order factor 1 - M e^{-l}.  ``"exact"`` also counts
    a long neighbour sharing the endpoint; it is exact for M < l_{rho,U}.
    """
    q = np.exp(-params.minimal_length)
    M = params.interaction_range
    if adjacency == "continuum":
        w = M
    elif adjacency == "exact":
        w = M + (1.0 if M > 0 else 0.0)
    else:
        raise InvalidArgument(f"unknown adjacency mode {adjacency!r}")
    return float(max(0.0, 1.0 - w * q))


@dataclass(frozen=True)
class StatRow:
    kind: str
    window: tuple[float, ...]
    count: int
    predicted_continuum: float
    predicted_exact: float

    def zscore(self, which: str = "exact") -> float:
        e = self.predicted_exact if which == "exact" else self.predicted_continuum
        if e <= 0:
            return 0.0 if self.count == 0 else np.inf
        return float((self.count - e) / np.sqrt(e))


def chain_statistics(decomp: ChainDecomposition, length_bins: Sequence[Sequence[float]] = (),
                     pair_bins: Sequence[Sequence[float]] = ()) -> list[StatRow]:
    """Counts of size-1 chains per length window and size-2 chains per (left, right, gap) window.

    ``pair_bins`` rows are (a, b, c, d, f, g): left length in [a, b], right
    length in [c, d], facing distance in [f, g].  All windows are closed.
    """
    L = decomp.config.box_length
    M = decomp.params.interaction_range
    iso = {k: isolation_probability(decomp.params, k) ** 2 for k in ("continuum", "exact")}
    singles = np.array([ch.lengths[0] for ch in decomp.chains if ch.size == 1])
    pairs = np.array([(ch.lengths[0], ch.lengths[1], ch.gaps[0]) for ch in decomp.chains
                      if ch.size == 2]).reshape(-1, 3)
    rows = []
    for a, b in length_bins:
        if b < a:
            raise InvalidArgument("length bin with hi < lo")
        cnt = int(np.count_nonzero((singles >= a) & (singles <= b)))
        base = L * (np.exp(-a) - np.exp(-b))
        rows.append(StatRow("size1", (a, b), cnt, base * iso["continuum"], base * iso["exact"]))
    for a, b, c, d, f, g in pair_bins:
        if b < a or d < c or g < f:
            raise InvalidArgument("pair bin with hi < lo")
        sel = ((pairs[:, 0] >= a) & (pairs[:, 0] <= b) & (pairs[:, 1] >= c) & (pairs[:, 1] <= d)
               & (pairs[:, 2] >= f) & (pairs[:, 2] <= g))
        base = L * (np.exp(-a) - np.exp(-b)) * (np.exp(-c) - np.exp(-d))
        width = max(0.0, min(g, M) - f)
        atom = 1.0 if (f == 0.0 and M > 0) else 0.0
        rows.append(StatRow("size2", (a, b, c, d, f, g), int(np.count_nonzero(sel)),
                            base * width * iso["continuum"], base * (width + atom) * iso["exact"]))
    return rows
