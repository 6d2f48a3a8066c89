"""Dirichlet levels, two-particle Galerkin solvers and the fitted corrections gamma, sigma(d).

Both solvers work in the sine eigenbasis.  Products of two sines are sums of
cosines, so every interaction matrix element reduces to a table

    C(m, n) = int U(u) int cos(m pi x / l1 + ...) cos(n pi y / l2 + ...) dx du,

with the inner integral over the overlap interval done in closed form and the
outer one by Gauss-Legendre in u = y - x, split where the integrand has kinks
(u = 0, the piece lengths, the potential's knots).  For piecewise-polynomial U
this is exact up to the u-quadrature order.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.sparse.linalg import lobpcg

from . import _kernels
from .chains import Chain
from .errors import CapacityError, InvalidArgument, NumericalFailure

PI2 = np.pi**2


# ---------------------------------------------------------------- potentials

@dataclass(frozen=True)
class Potential:
    """Even, non-negative, bounded pair potential vanishing for |x| > range.

    ``step``: U = magnitude on |x| <= range.  ``table``: piecewise linear
    through ``samples`` = ((x0, U0), (x1, U1), ...) with x0 = 0, zero beyond
    the last knot.
    """
    kind: str
    magnitude: float
    range: float
    samples: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("step", "table"):
            raise InvalidArgument(f"unknown potential kind {self.kind!r}")
        if self.magnitude < 0 or self.range < 0:
            raise InvalidArgument("potential must be non-negative with non-negative range")
        if self.kind == "table":
            xs, vs = self.table_arrays
            if xs[0] != 0 or np.any(np.diff(xs) <= 0) or np.any(vs < 0):
                raise InvalidArgument("table must start at x=0, increase strictly and be non-negative")

    @classmethod
    def step(cls, u0: float = 1.0, M: float = 1.0) -> "Potential":
        return cls("step", float(u0), float(M))

    @classmethod
    def zero(cls) -> "Potential":
        return cls("step", 0.0, 0.0)

    @classmethod
    def table(cls, xs: Sequence[float], values: Sequence[float]) -> "Potential":
        xs = [float(x) for x in xs]
        vs = [float(v) for v in values]
        if len(xs) != len(vs) or len(xs) < 2:
            raise InvalidArgument("table needs matching x and U columns with >= 2 rows")
        return cls("table", max(vs), xs[-1], tuple(zip(xs, vs)))

    @classmethod
    def from_spec(cls, spec: str) -> "Potential":
        """Parse ``step:<u0>:<M>``, ``table:<path>`` or ``zero``."""
        head, _, rest = spec.partition(":")
        try:
            if head == "zero" and not rest:
                return cls.zero()
            if head == "step":
                u0, M = rest.split(":")
                return cls.step(float(u0), float(M))
            if head == "table":
                data = np.loadtxt(rest, delimiter=None if rest.endswith(".txt") else ",", ndmin=2)
                return cls.table(data[:, 0], data[:, 1])
        except (ValueError, OSError) as exc:
            raise InvalidArgument(f"bad potential spec {spec!r}: {exc}") from exc
        raise InvalidArgument(f"bad potential spec {spec!r}; use step:<u0>:<M> or table:<path>")

    @property
    def table_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.asarray(self.samples, dtype=np.float64)
        return arr[:, 0], arr[:, 1]

    @property
    def is_zero(self) -> bool:
        if self.kind == "step":
            return self.magnitude == 0 or self.range == 0
        return not np.any(self.table_arrays[1] > 0)

    @property
    def knots(self) -> np.ndarray:
        if self.kind == "step":
            return np.array([self.range])
        return self.table_arrays[0]

    def __call__(self, x) -> np.ndarray:
        ax = np.abs(np.asarray(x, dtype=np.float64))
        if self.kind == "step":
            return np.where(ax <= self.range, self.magnitude, 0.0)
        xs, vs = self.table_arrays
        return np.where(ax <= xs[-1], np.interp(ax, xs, vs), 0.0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "magnitude": self.magnitude, "range": self.range}
        if self.samples is not None:
            d["samples"] = [list(s) for s in self.samples]
        return d


def free_levels(l: float, k_max: int) -> np.ndarray:
    if not l > 0 or k_max < 1:
        raise InvalidArgument("need l > 0 and k_max >= 1")
    k = np.arange(1, k_max + 1)
    return PI2 * k**2 / l**2


def free_energy(l: float, q: int) -> float:
    """E0(l, q): sum of the q lowest Dirichlet levels of a piece of length l."""
    return float(PI2 * q * (q + 1) * (2 * q + 1) / (6.0 * l**2)) if q > 0 else 0.0


# ---------------------------------------------------------------- geometry

@dataclass(frozen=True)
class SamePiece:
    length: float

    @property
    def free_ground(self) -> float:
        return 5 * PI2 / self.length**2


@dataclass(frozen=True)
class TwoPiece:
    """Left piece [-left_length, 0], right piece [gap, gap + right_length]."""
    left_length: float
    right_length: float
    gap: float

    @property
    def free_ground(self) -> float:
        return PI2 / self.left_length**2 + PI2 / self.right_length**2

    def swapped(self) -> "TwoPiece":
        return TwoPiece(self.right_length, self.left_length, self.gap)


@dataclass(frozen=True)
class SolverConfig:
    n_modes: int | None = None  # None: scale with l / M
    quad_nodes: int = 48
    dense_limit: int = 6000
    eig_tol: float = 1e-9

    def modes_same(self, l: float, M: float) -> int:
        if self.n_modes is not None:
            return int(self.n_modes)
        return int(np.clip(np.ceil(1.25 * l / max(M, 1e-12)), 16, 112))

    def modes_pair(self, l: float, M: float) -> int:
        if self.n_modes is not None:
            return int(self.n_modes)
        return int(np.clip(np.ceil(0.8 * l / max(M, 1e-12)), 12, 72))


DEFAULT_SOLVER = SolverConfig()


@lru_cache(maxsize=8)
def _leggauss(nq: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(nq)


def _gl_nodes(breaks: np.ndarray, U: Potential, nq: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _leggauss(nq)
    us, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a <= 1e-15:
            continue
        h = 0.5 * (b - a)
        u = a + h * (x + 1)
        us.append(u)
        ws.append(w * h * U(u))
    if not us:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(us), np.concatenate(ws)


def _same_nodes(l: float, U: Potential, nq: int):
    R = min(U.range, l)
    k = U.knots[(U.knots > 0) & (U.knots < R)]
    br = np.unique(np.concatenate([[-R, 0.0, R], k, -k]))
    return _gl_nodes(br, U, nq)


def _pair_nodes(g: TwoPiece, U: Potential, nq: int):
    hi = min(U.range, g.gap + g.left_length + g.right_length)
    if hi <= g.gap:
        return np.zeros(0), np.zeros(0)
    cand = np.concatenate([[g.gap, hi, g.gap + g.left_length, g.gap + g.right_length], U.knots])
    br = np.unique(cand[(cand >= g.gap) & (cand <= hi)])
    return _gl_nodes(br, U, nq)


def same_table(l: float, U: Potential, nmax: int, nq: int = 48) -> np.ndarray:
    us, ws = _same_nodes(l, U, nq)
    if us.size == 0:
        return np.zeros((nmax + 1, nmax + 1))
    return _kernels.same_table(float(l), us, ws, int(nmax))


def pair_table(g: TwoPiece, U: Potential, n1max: int, n2max: int, nq: int = 48) -> np.ndarray:
    us, ws = _pair_nodes(g, U, nq)
    if us.size == 0:
        return np.zeros((n1max + 1, n2max + 1))
    return _kernels.pair_table(float(g.left_length), float(g.right_length), float(g.gap),
                               us, ws, int(n1max), int(n2max))


def interaction_element(geometry: SamePiece | TwoPiece, U: Potential, p: int, q: int,
                        nq: int = 48) -> float:
    """Diagonal interaction element of the free state (p, q) in the given geometry.

    Same piece: <phi_p ^ phi_q | U | phi_p ^ phi_q>.  Two pieces:
    int int U(y - x) phi_p(x)^2 phi_q(y)^2 with phi_p on the left piece.
    """
    if p < 1 or q < 1:
        raise InvalidArgument("mode indices start at 1")
    if U.is_zero:
        return 0.0
    if isinstance(geometry, SamePiece):
        if p == q:
            return 0.0
        l = geometry.length
        C = same_table(l, U, 2 * max(p, q), nq)

        def V(p, q, r, s):
            return (C[abs(p - r), abs(q - s)] - C[abs(p - r), q + s]
                    - C[p + r, abs(q - s)] + C[p + r, q + s])

        return float((V(p, q, p, q) - V(p, q, q, p)) / l**2)
    g = geometry
    if g.gap >= U.range:
        return 0.0
    C = pair_table(g, U, 2 * p, 2 * q, nq)
    val = C[0, 0] - C[0, 2 * q] - C[2 * p, 0] + C[2 * p, 2 * q]
    return float(val / (g.left_length * g.right_length))


# ---------------------------------------------------------------- solvers

@dataclass(frozen=True)
class TwoParticleSolution:
    geometry: SamePiece | TwoPiece
    energy: float
    free_energy: float
    coefficients: np.ndarray = field(repr=False)
    basis_size: int
    residual: float

    @property
    def correction(self) -> float:
        return self.energy - self.free_energy


def _lowest(D: np.ndarray, W: np.ndarray, scale: float, cfg: SolverConfig) -> tuple[float, np.ndarray, float]:
    H = W * scale
    H[np.diag_indices_from(H)] += D * scale
    n = len(D)
    v = None
    if n > cfg.dense_limit:
        k = 3
        order = np.argsort(D)[:k]
        x0 = np.zeros((n, k))
        x0[order, np.arange(k)] = 1.0
        pre = sp.diags(1.0 / np.maximum(D * scale, 1.0))
        try:
            with warnings.catch_warnings():
                # non-convergence is detected below and falls back to dense
                warnings.simplefilter("ignore")
                vals, vecs = lobpcg(H, x0, M=pre, tol=cfg.eig_tol, maxiter=2000, largest=False)
            cand = vecs[:, int(np.argmin(vals))]
            cand = cand / np.linalg.norm(cand)
            lam = cand @ H @ cand
            if np.linalg.norm(H @ cand - lam * cand) <= 100 * cfg.eig_tol:
                v = cand
        except (np.linalg.LinAlgError, ValueError):
            v = None
    if v is None:
        try:
            _, vecs = sl.eigh(H, subset_by_index=[0, 0])
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"eigensolver failed: {exc}") from exc
        v = vecs[:, 0]
    v = v / np.linalg.norm(v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    Hv = H @ v
    lam = float(v @ Hv)
    res = float(np.linalg.norm(Hv - lam * v))
    return lam / scale, v, res / scale


def solve_same_piece_pair(l: float, U: Potential, n_modes: int | None = None,
                          cfg: SolverConfig = DEFAULT_SOLVER) -> TwoParticleSolution:
    """Ground state of two fermions on [0, l] with pair potential U."""
    if not l > 0:
        raise InvalidArgument("length must be positive")
    g = SamePiece(float(l))
    N = cfg.modes_same(l, U.range) if n_modes is None else int(n_modes)
    if N < 4:
        raise InvalidArgument("n_modes must be >= 4")
    E0 = g.free_ground
    coef = np.zeros((N, N))
    if U.is_zero:
        coef[0, 1] = 1.0
        return TwoParticleSolution(g, E0, E0, coef, N * (N - 1) // 2, 0.0)
    C = same_table(l, U, 2 * N, cfg.quad_nodes)
    W = _kernels.assemble_same(C, N, float(l))
    p, q = np.triu_indices(N, 1)
    D = PI2 * ((p + 1) ** 2 + (q + 1) ** 2) / l**2 - E0
    corr, v, res = _lowest(D, W, l**2, cfg)
    coef[p, q] = v
    return TwoParticleSolution(g, E0 + corr, E0, coef, len(D), res)


def solve_pair(g: TwoPiece, U: Potential, n_left: int | None = None, n_right: int | None = None,
               cfg: SolverConfig = DEFAULT_SOLVER) -> TwoParticleSolution:
    """Ground state of one fermion on each of two pieces coupled by U(y - x)."""
    l1, l2 = g.left_length, g.right_length
    if not (l1 > 0 and l2 > 0 and g.gap >= 0):
        raise InvalidArgument("need positive lengths and non-negative gap")
    N1 = cfg.modes_pair(l1, U.range) if n_left is None else int(n_left)
    N2 = cfg.modes_pair(l2, U.range) if n_right is None else int(n_right)
    if min(N1, N2) < 1:
        raise InvalidArgument("n_modes must be positive")
    E0 = g.free_ground
    coef = np.zeros((N1, N2))
    if U.is_zero or g.gap >= U.range:
        coef[0, 0] = 1.0
        return TwoParticleSolution(g, E0, E0, coef, N1 * N2, 0.0)
    C = pair_table(g, U, 2 * N1, 2 * N2, cfg.quad_nodes)
    W = _kernels.assemble_pair(C, N1, N2, float(l1), float(l2))
    p = np.repeat(np.arange(1, N1 + 1), N2)
    q = np.tile(np.arange(1, N2 + 1), N1)
    D = PI2 * (p**2 / l1**2 + q**2 / l2**2) - E0
    corr, v, res = _lowest(D, W, l1 * l2, cfg)
    return TwoParticleSolution(g, E0 + corr, E0, v.reshape(N1, N2), len(D), res)


def solve_two_piece_pair(l: float, a: float, d: float, U: Potential, n_modes: int | None = None,
                         cfg: SolverConfig = DEFAULT_SOLVER) -> TwoParticleSolution:
    """Pieces [-a l, 0] and [d, d + l]; ``n_modes`` modes on the right piece, ceil(a n_modes) on the left."""
    if a < 1:
        raise InvalidArgument("a must be >= 1")
    g = TwoPiece(float(a * l), float(l), float(d))
    if n_modes is None:
        return solve_pair(g, U, cfg=cfg)
    return solve_pair(g, U, int(np.ceil(a * n_modes - 1e-9)), int(n_modes), cfg)


@lru_cache(maxsize=1 << 16)
def _same_energy(l: float, U: Potential, cfg: SolverConfig) -> float:
    return solve_same_piece_pair(l, U, cfg=cfg).energy


@lru_cache(maxsize=1 << 16)
def _pair_energy(l1: float, l2: float, d: float, U: Potential, cfg: SolverConfig) -> float:
    return solve_pair(TwoPiece(l1, l2, d), U, cfg=cfg).energy


# ---------------------------------------------------------------- fits

@dataclass(frozen=True)
class FitRow:
    l: float
    d: float
    raw_energy: float
    scaled_correction: float
    fit_value: float
    residual: float


@dataclass(frozen=True)
class AsymptoticFit:
    """gamma and the table sigma(d), both in energy normalization.

    Same piece: E = 5 pi^2/l^2 + gamma/l^3.  Two pieces of lengths x, y:
    E = pi^2/x^2 + pi^2/y^2 + sigma(d)/(x^3 y^3).  The second-level threshold
    on the shorter length x then shifts by sigma(d)/(2 pi^2 y^3) (``d4_shift``);
    ``sigma_unit_pi2`` is sigma/pi^2, the normalization in which that shift
    reads sigma/(2 y^3).
    """
    gamma: float
    interaction_range: float
    sigma_d: tuple[float, ...] = ()
    sigma_values: tuple[float, ...] = ()
    fit_lengths: tuple[float, ...] = ()
    fit_residuals: tuple[float, ...] = ()
    rows: tuple[FitRow, ...] = field(default=(), repr=False)

    @classmethod
    def zero(cls) -> "AsymptoticFit":
        return cls(0.0, 0.0)

    @property
    def sigma_table(self) -> dict[float, float]:
        return dict(zip(self.sigma_d, self.sigma_values))

    def sigma(self, d):
        d = np.asarray(d, dtype=np.float64)
        M = self.interaction_range
        if not self.sigma_d or M <= 0:
            return np.zeros_like(d) if d.ndim else 0.0
        xs = np.asarray(self.sigma_d)
        ys = np.asarray(self.sigma_values)
        if xs[-1] < M:
            xs = np.append(xs, M)
            ys = np.append(ys, 0.0)
        out = np.where(d < M, np.interp(d, xs, ys), 0.0)
        return out if out.ndim else float(out)

    def sigma_unit_pi2(self, d):
        return self.sigma(d) / PI2

    def d4_shift(self, t, y):
        return self.sigma(t) / (2.0 * PI2 * np.asarray(y, dtype=np.float64) ** 3)

    def combine(self, other: "AsymptoticFit") -> "AsymptoticFit":
        """gamma from self, sigma table from other."""
        return AsymptoticFit(self.gamma, max(self.interaction_range, other.interaction_range),
                             other.sigma_d, other.sigma_values,
                             self.fit_lengths, self.fit_residuals + other.fit_residuals,
                             self.rows + other.rows)

    def to_json(self) -> str:
        return json.dumps({
            "gamma": self.gamma, "interaction_range": self.interaction_range,
            "sigma_d": list(self.sigma_d), "sigma_values": list(self.sigma_values),
            "fit_lengths": list(self.fit_lengths), "fit_residuals": list(self.fit_residuals),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AsymptoticFit":
        d = json.loads(text)
        return cls(d["gamma"], d["interaction_range"], tuple(d["sigma_d"]), tuple(d["sigma_values"]),
                   tuple(d["fit_lengths"]), tuple(d["fit_residuals"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l", "d", "raw_energy", "scaled_correction", "fit_value", "residual"])
        for r in self.rows:
            w.writerow([repr(r.l), repr(r.d), repr(r.raw_energy), repr(r.scaled_correction),
                        repr(r.fit_value), repr(r.residual)])
        return buf.getvalue()


def _check_grid(grid, name) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or g.size < 3 or np.any(np.diff(g) <= 0) or g[0] <= 0:
        raise InvalidArgument(f"{name} needs >= 3 increasing positive points")
    return g


def fit_gamma(U: Potential, l_grid, n_modes: int | None = None,
              cfg: SolverConfig = DEFAULT_SOLVER) -> AsymptoticFit:
    """Least-squares gamma from l^3 (E(l) - 5 pi^2/l^2) over the grid."""
    ls = _check_grid(l_grid, "l_grid")
    raw = np.array([solve_same_piece_pair(l, U, n_modes, cfg).energy for l in ls])
    scaled = (raw - 5 * PI2 / ls**2) * ls**3
    if not np.all(np.isfinite(scaled)):
        raise NumericalFailure("non-finite scaled corrections in gamma fit")
    gamma = float(scaled.mean())
    res = scaled - gamma
    rows = tuple(FitRow(float(l), float("nan"), float(e), float(s), gamma, float(r))
                 for l, e, s, r in zip(ls, raw, scaled, res))
    return AsymptoticFit(gamma, U.range, fit_lengths=tuple(ls.tolist()),
                         fit_residuals=tuple(res.tolist()), rows=rows)


def fit_sigma(U: Potential, d_grid, l_grid, a: float = 1.0, n_modes: int | None = None,
              cfg: SolverConfig = DEFAULT_SOLVER) -> AsymptoticFit:
    """Per-d mean of a^3 l^6 (E - pi^2/l^2 - pi^2/(a l)^2); exactly 0 for d >= M."""
    ls = _check_grid(l_grid, "l_grid")
    ds = np.asarray(d_grid, dtype=np.float64)
    if ds.ndim != 1 or ds.size < 1 or np.any(np.diff(ds) <= 0) or ds[0] < 0:
        raise InvalidArgument("d_grid must be increasing and non-negative")
    sig, rows, resid = [], [], []
    for d in ds:
        if d >= U.range or U.is_zero:
            sig.append(0.0)
            continue
        raw = np.array([solve_two_piece_pair(l, a, d, U, n_modes, cfg).energy for l in ls])
        scaled = (raw - PI2 / ls**2 - PI2 / (a * ls) ** 2) * a**3 * ls**6
        if not np.all(np.isfinite(scaled)):
            raise NumericalFailure(f"non-finite scaled corrections at d={d}")
        s = float(scaled.mean())
        sig.append(s)
        for l, e, c in zip(ls, raw, scaled):
            rows.append(FitRow(float(l), float(d), float(e), float(c), s, float(c - s)))
            resid.append(float(c - s))
    return AsymptoticFit(0.0, U.range, tuple(ds.tolist()), tuple(sig), tuple(ls.tolist()),
                         tuple(resid), tuple(rows))


def default_sigma_grid(M: float) -> tuple[float, ...]:
    return tuple(M * f for f in (0.0, 0.125, 0.25, 0.5, 0.75, 1.0, 1.5))


def fit_asymptotics(U: Potential, l_grid=(20.0, 40.0, 80.0), d_grid=None, a: float = 1.0,
                    n_modes: int | None = None, cfg: SolverConfig = DEFAULT_SOLVER) -> AsymptoticFit:
    """gamma and sigma(d) fitted on the same length grid; zero fit for U = 0."""
    if U.is_zero:
        return AsymptoticFit.zero()
    d_grid = default_sigma_grid(U.range) if d_grid is None else d_grid
    return fit_gamma(U, l_grid, n_modes, cfg).combine(fit_sigma(U, d_grid, l_grid, a, n_modes, cfg))


# ---------------------------------------------------------------- chain levels

def bounded_compositions(total: int, caps: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """All (q_1..q_r) with 0 <= q_i <= caps[i] and sum total, in lexicographic order."""
    if not caps:
        if total == 0:
            yield ()
        return
    rest = sum(caps[1:])
    for q in range(max(0, total - rest), min(caps[0], total) + 1):
        for tail in bounded_compositions(total - q, caps[1:]):
            yield (q,) + tail


def split_energy(chain: Chain, split: Sequence[int], U: Potential,
                 cfg: SolverConfig = DEFAULT_SOLVER, approximate: bool = False,
                 enforce_caps: bool = True) -> float:
    """E^U of the chain with ``split[i]`` particles on its i-th piece.

    Exact (pair solvers) for up to two particles.  More particles need
    ``approximate=True``: free energy plus first-order interaction of the free
    Slater state.
    """
    occ = [(i, int(s)) for i, s in enumerate(split) if s > 0]
    if enforce_caps and any(s > c for s, c in zip(split, chain.caps)):
        raise CapacityError(f"split {tuple(split)} exceeds caps {chain.caps}")
    total = sum(s for _, s in occ)
    ls = chain.lengths
    M = U.range
    if total == 0:
        return 0.0
    if total == 1:
        return PI2 / ls[occ[0][0]] ** 2
    if total == 2:
        if len(occ) == 1:
            return _same_energy(float(ls[occ[0][0]]), U, cfg)
        (j, _), (k, _) = occ
        d = chain.distance(j, k)
        if U.is_zero or d >= M:
            return PI2 / ls[j] ** 2 + PI2 / ls[k] ** 2
        return _pair_energy(float(ls[j]), float(ls[k]), float(d), U, cfg)
    if not approximate:
        raise CapacityError("more than two particles in a chain needs approximate=True")
    return first_order_energy(chain, split, U, cfg)


def first_order_energy(chain: Chain, split: Sequence[int], U: Potential,
                       cfg: SolverConfig = DEFAULT_SOLVER) -> float:
    """Free energy plus first-order interaction of the free Slater state with the given split."""
    occ = [(i, int(s)) for i, s in enumerate(split) if s > 0]
    ls = chain.lengths
    M = U.range
    e = sum(free_energy(ls[i], s) for i, s in occ)
    if U.is_zero:
        return e
    for i, s in occ:
        for p, q in itertools.combinations(range(1, s + 1), 2):
            e += interaction_element(SamePiece(ls[i]), U, p, q, cfg.quad_nodes)
    for (i, si), (j, sj) in itertools.combinations(occ, 2):
        g = TwoPiece(ls[i], ls[j], chain.distance(i, j))
        if g.gap >= M:
            continue
        for p in range(1, si + 1):
            for q in range(1, sj + 1):
                e += interaction_element(g, U, p, q, cfg.quad_nodes)
    return e


@dataclass(frozen=True)
class ChainEnergies:
    F: np.ndarray  # F[0..kappa_max]
    splits: tuple[tuple[int, ...], ...]  # minimizing split per kappa (index 0 is the empty split)
    approximate: bool

    @property
    def levels(self) -> np.ndarray:
        return np.diff(self.F)


def chain_energies(chain: Chain, U: Potential, kappa_max: int, cfg: SolverConfig = DEFAULT_SOLVER,
                   approximate: bool = False, over_cap: bool = False) -> ChainEnergies:
    """F^U(I, kappa) for kappa <= kappa_max, minimized over splits within the piece caps.

    With ``over_cap=True`` levels beyond the chain cap are also returned; they
    minimize over all splits (the caps are an a-priori bound on ground states,
    not a physical constraint).
    """
    if kappa_max > chain.cap and not over_cap:
        raise CapacityError(f"kappa_max={kappa_max} exceeds chain cap {chain.cap}")
    if kappa_max > 2 and not approximate:
        raise CapacityError("kappa_max > 2 needs approximate=True")
    F = [0.0]
    splits = [tuple(0 for _ in chain.caps)]
    for k in range(1, kappa_max + 1):
        capped = k <= chain.cap
        caps = chain.caps if capped else (k,) * chain.size
        best, arg = np.inf, None
        for s in bounded_compositions(k, caps):
            e = split_energy(chain, s, U, cfg, approximate, enforce_caps=capped)
            if e < best:
                best, arg = e, s
        F.append(best)
        splits.append(arg)
    return ChainEnergies(np.array(F), tuple(splits), kappa_max > 2)


def chain_levels(chain: Chain, U: Potential, kappa_max: int, cfg: SolverConfig = DEFAULT_SOLVER,
                 approximate: bool = False) -> np.ndarray:
    """f^U(I, kappa) = F^U(I, kappa) - F^U(I, kappa - 1) for kappa = 1..kappa_max."""
    return chain_energies(chain, U, kappa_max, cfg, approximate).levels
