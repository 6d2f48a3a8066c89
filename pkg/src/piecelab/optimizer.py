"""Level pool, greedy filling and its brute-force oracle."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .chains import ChainDecomposition
from .errors import InfeasibleError, InvalidArgument, NumericalFailure, TooLargeError
from .spectra import (DEFAULT_SOLVER, PI2, Potential, SolverConfig, bounded_compositions,
                      chain_energies, free_energy, split_energy)

TIE_RTOL = 1e-12


def lexical_order(values: np.ndarray, positions: np.ndarray, kappas: np.ndarray,
                  rtol: float = TIE_RTOL) -> np.ndarray:
    """Permutation sorting by value, then position, then kappa; near-equal values count as ties."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return np.zeros(0, dtype=np.int64)
    pre = np.argsort(values, kind="stable")
    v = values[pre]
    step = np.diff(v) > rtol * np.maximum(np.abs(v[1:]), np.finfo(float).tiny)
    cluster = np.empty(v.size, dtype=np.int64)
    cluster[0] = 0
    cluster[1:] = np.cumsum(step)
    sub = np.lexsort((np.asarray(kappas)[pre], np.asarray(positions)[pre], cluster))
    return pre[sub]


@dataclass(frozen=True)
class LevelPool:
    """Sorted levels f^U(I, kappa), kappa = 1..p, of the chains of P_p.

    Entries with kappa above the chain cap are kept (they belong to the level
    set) but flagged infeasible; greedy filling skips them.
    """
    chain_ids: np.ndarray
    kappas: np.ndarray
    values: np.ndarray
    positions: np.ndarray
    p: int
    feasible: np.ndarray | None = None
    splits: Mapping[int, tuple[tuple[int, ...], ...]] = field(default_factory=dict, repr=False)
    approximate: bool = False

    def __post_init__(self):
        if self.feasible is None:
            object.__setattr__(self, "feasible", np.ones(self.values.size, dtype=bool))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def feasible_indices(self) -> np.ndarray:
        return np.flatnonzero(self.feasible)

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.chain_ids.tolist(), self.kappas.tolist(), self.values.tolist()))

    def levels_by_chain(self, feasible_only: bool = True) -> dict[int, np.ndarray]:
        out: dict[int, list] = {}
        for c, k, v, ok in zip(self.chain_ids, self.kappas, self.values, self.feasible):
            if ok or not feasible_only:
                out.setdefault(int(c), []).append((k, v))
        return {c: np.array([v for _, v in sorted(kv)]) for c, kv in out.items()}

    @classmethod
    def from_entries(cls, chain_ids, kappas, values, positions=None, p: int = 2, splits=None,
                     feasible=None, approximate: bool = False):
        chain_ids = np.asarray(chain_ids, dtype=np.int64)
        kappas = np.asarray(kappas, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        positions = chain_ids if positions is None else np.asarray(positions, dtype=np.int64)
        feasible = np.ones(values.size, bool) if feasible is None else np.asarray(feasible, dtype=bool)
        o = lexical_order(values, positions, kappas)
        return cls(chain_ids[o], kappas[o], values[o], positions[o], p, feasible[o],
                   dict(splits or {}), approximate)


def build_level_pool(decomp: ChainDecomposition, U: Potential, p: int | None = None,
                     cfg: SolverConfig = DEFAULT_SOLVER, approximate: bool = False) -> LevelPool:
    p = decomp.p if p is None else p
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    ids, ks, vals, pos, ok = [], [], [], [], []
    splits = {}
    for c in decomp.small_chains:
        ch = decomp.chains[c]
        try:
            ce = chain_energies(ch, U, p, cfg, approximate, over_cap=True)
        except NumericalFailure as exc:
            raise NumericalFailure(f"chain {c}: {exc}") from exc
        splits[c] = ce.splits
        for k, f in enumerate(ce.levels, start=1):
            ids.append(c)
            ks.append(k)
            vals.append(f)
            pos.append(ch.position)
            ok.append(k <= ch.cap)
    return LevelPool.from_entries(ids, ks, vals, pos, p, splits, ok, approximate)


@dataclass(frozen=True)
class Occupation:
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def is_admissible(self, decomp: ChainDecomposition) -> bool:
        c = self.counts
        return bool(c.shape == decomp.caps.shape and np.all(c >= 0) and np.all(c <= decomp.caps))

    def chain_split(self, decomp: ChainDecomposition, c: int) -> tuple[int, ...]:
        return tuple(int(self.counts[i]) for i in decomp.chains[c].piece_indices)


@dataclass(frozen=True)
class GroundStateEstimate:
    occupation: Occupation
    energy_P: float
    energy_N: float  # free energy of the N_p occupants
    levels_used: np.ndarray = field(repr=False)  # pool indices, in placement order
    n_leftover: int
    mode: str

    @property
    def energy(self) -> float:
        return self.energy_P + self.energy_N

    def to_json(self, pool: LevelPool | None = None) -> str:
        doc = {
            "mode": self.mode,
            "n": self.occupation.total,
            "energy": self.energy,
            "energy_P": self.energy_P,
            "energy_N": self.energy_N,
            "n_leftover": self.n_leftover,
            "occupied_pieces": {str(i): int(q) for i, q in enumerate(self.occupation.counts) if q},
        }
        if pool is not None:
            doc["levels_used"] = [[int(pool.chain_ids[k]), int(pool.kappas[k]), float(pool.values[k])]
                                  for k in self.levels_used]
        return json.dumps(doc, sort_keys=True)


def _leftover_increments(decomp: ChainDecomposition):
    pieces, levels, vals = [], [], []
    ls = decomp.config.lengths
    for i in decomp.leftover:
        for k in range(1, int(decomp.caps[i]) + 1):
            pieces.append(int(i))
            levels.append(k)
            vals.append(PI2 * k * k / ls[i] ** 2)
    return (np.array(pieces, dtype=np.int64), np.array(levels, dtype=np.int64),
            np.array(vals, dtype=np.float64))


def _place(pool: LevelPool, taken: np.ndarray, decomp: ChainDecomposition, counts: np.ndarray):
    per_chain: dict[int, int] = {}
    for k in taken:
        c = int(pool.chain_ids[k])
        per_chain[c] = per_chain.get(c, 0) + 1
    for c, kap in per_chain.items():
        split = pool.splits[c][kap]
        for i, q in zip(decomp.chains[c].piece_indices, split):
            counts[i] += q


def greedy_fill(pool: LevelPool, n: int, decomp: ChainDecomposition,
                leftover: str = "overflow") -> GroundStateEstimate:
    """Take the n smallest levels.

    ``overflow``: pool first; N_p pieces (free levels, lowest first) only once
    the pool is exhausted.  ``merge``: N_p free increments compete with the
    pool levels in one sorted sequence, which minimizes
    sum_{P_p} F^U + sum_{N_p} E0 over admissible occupations.
    """
    if n < 0:
        raise InvalidArgument("n must be >= 0")
    if n > int(decomp.caps.sum()):
        raise InfeasibleError(f"n={n} exceeds total capacity {int(decomp.caps.sum())}")
    if leftover not in ("overflow", "merge"):
        raise InvalidArgument(f"unknown leftover mode {leftover!r}")
    lp, lk, lv = _leftover_increments(decomp)
    counts = np.zeros(decomp.config.piece_count, dtype=np.int64)
    fe = pool.feasible_indices
    if leftover == "overflow":
        taken = fe[:n]
        extra = n - taken.size
        o = lexical_order(lv, lp, lk)[:extra]
    else:
        vals = np.concatenate([pool.values[fe], lv])
        pos = np.concatenate([pool.positions[fe], lp])
        kap = np.concatenate([pool.kappas[fe], lk])
        order = lexical_order(vals, pos, kap)[:n]
        taken = fe[order[order < fe.size]]
        o = order[order >= fe.size] - fe.size
    _place(pool, taken, decomp, counts)
    np.add.at(counts, lp[o], 1)
    ls = decomp.config.lengths
    energy_P = float(np.sum(pool.values[taken]))
    energy_N = float(sum(free_energy(ls[i], int(counts[i])) for i in decomp.leftover if counts[i]))
    return GroundStateEstimate(Occupation(counts), energy_P, energy_N, taken, int(o.size), leftover)


def occupation_energy(decomp: ChainDecomposition, occ: Occupation, U: Potential,
                      cfg: SolverConfig = DEFAULT_SOLVER, approximate: bool = False) -> float:
    """sum over P_p chains of E^U(I, q_I) plus free energies of N_p pieces."""
    ls = decomp.config.lengths
    e = 0.0
    for c in decomp.small_chains:
        s = occ.chain_split(decomp, c)
        if any(s):
            e += split_energy(decomp.chains[c], s, U, cfg, approximate)
    for i in decomp.leftover:
        if occ.counts[i]:
            e += free_energy(ls[i], int(occ.counts[i]))
    return float(e)


def brute_force_ground(decomp: ChainDecomposition, U: Potential, n: int,
                       cfg: SolverConfig = DEFAULT_SOLVER) -> tuple[Occupation, float]:
    """Exhaustive minimum of the occupation energy over admissible Q with |Q| = n."""
    caps = [int(c) for c in decomp.caps]
    if sum(caps) > 12 or len(caps) > 8:
        raise TooLargeError(f"enumeration guard: sum caps={sum(caps)}, pieces={len(caps)}")
    if n > sum(caps) or n < 0:
        raise InfeasibleError(f"n={n} not in [0, {sum(caps)}]")
    ls = decomp.config.lengths
    memo: dict[tuple[int, tuple[int, ...]], float] = {}
    best, arg = np.inf, None
    for Q in bounded_compositions(n, caps):
        e = 0.0
        for c in decomp.small_chains:
            s = tuple(Q[i] for i in decomp.chains[c].piece_indices)
            if not any(s):
                continue
            key = (c, s)
            if key not in memo:
                memo[key] = split_energy(decomp.chains[c], s, U, cfg, approximate=True)
            e += memo[key]
        for i in decomp.leftover:
            if Q[i]:
                e += free_energy(ls[i], Q[i])
        if e < best:
            best, arg = e, Q
    return Occupation(np.array(arg, dtype=np.int64)), float(best)


@dataclass(frozen=True)
class ConvexityReport:
    violations: tuple[tuple[int, int], ...]  # (chain id, kappa) with f(kappa) <= f(kappa - 1)
    checked: int

    @property
    def passed(self) -> bool:
        return not self.violations


def convexity_check(levels: Mapping[int, Sequence[float]]) -> ConvexityReport:
    bad = []
    for c, f in levels.items():
        f = np.asarray(f, dtype=np.float64)
        for k in np.flatnonzero(np.diff(f) <= 0):
            bad.append((int(c), int(k) + 2))
    return ConvexityReport(tuple(bad), len(levels))


def degeneracy_count(pool: LevelPool | np.ndarray, tol: float) -> dict[float, int]:
    """Cluster values whose consecutive relative spacing is <= tol; map cluster minimum -> size."""
    if tol < 0:
        raise InvalidArgument("tol must be >= 0")
    v = np.sort(np.asarray(pool.values if isinstance(pool, LevelPool) else pool, dtype=np.float64))
    out: dict[float, int] = {}
    if v.size == 0:
        return out
    brk = np.flatnonzero(np.diff(v) > tol * np.maximum(np.abs(v[1:]), np.finfo(float).tiny)) + 1
    for seg in np.split(v, brk):
        out[float(seg[0])] = int(seg.size)
    return out


def stable_chains(pool: LevelPool, n: int, window: int,
                  decomp: ChainDecomposition | None = None) -> tuple[set[int], dict[int, int]]:
    """Chains whose occupation is constant along the pool greedy steps r = n - window .. n.

    Returns the stable chain ids (among chains occupied at step n) and, if a
    decomposition is given, the common per-piece counts of those chains.
    """
    if not 0 <= window <= n:
        raise InvalidArgument("need 0 <= window <= n")
    seq = pool.chain_ids[pool.feasible_indices]
    if n > seq.size:
        raise InvalidArgument("n exceeds the number of feasible pool entries")
    occupied = set(seq[:n].tolist())
    moving = set(seq[n - window:n].tolist())
    stable = occupied - moving
    counts: dict[int, int] = {}
    if decomp is not None:
        per_chain: dict[int, int] = {}
        for c in seq[:n]:
            per_chain[int(c)] = per_chain.get(int(c), 0) + 1
        for c in sorted(stable):
            for i, q in zip(decomp.chains[c].piece_indices, pool.splits[c][per_chain[c]]):
                if q:
                    counts[int(i)] = int(q)
    return stable, counts


def level_count(decomp: ChainDecomposition, p: int | None = None) -> int:
    """#Gamma_p without solving anything: p levels per chain of P_p."""
    p = decomp.p if p is None else p
    return p * len(decomp.small_chains)
