"""Free IDS, the level counting function J, the Fermi level and the test occupation."""
from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

from .chains import ChainDecomposition, decompose, isolation_probability, model_params, ModelParams
from .disorder import sample_pieces
from .errors import InfeasibleError, InvalidArgument, NoRootError, NumericalFailure
from .optimizer import Occupation, LevelPool, build_level_pool, greedy_fill, lexical_order, occupation_energy
from .spectra import (DEFAULT_SOLVER, PI2, AsymptoticFit, Potential, SolverConfig, first_order_energy,
                      free_energy)

SPEC_VERSION = "1.0"
_QUAD = dict(epsabs=1e-14, epsrel=1e-11, limit=200)


# ---------------------------------------------------------------- free model

def ids_free(E):
    """N(E) = e^{-pi/sqrt E} / (1 - e^{-pi/sqrt E}), zero for E <= 0."""
    E = np.asarray(E, dtype=np.float64)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(E > 0, 1.0 / np.expm1(np.pi / np.sqrt(np.where(E > 0, E, 1.0))), 0.0)
    return out if out.ndim else float(out)


def fermi_energy(rho: float) -> float:
    if not rho > 0:
        raise InvalidArgument(f"density must be positive, got {rho}")
    return float((np.pi / -np.log(rho / (1.0 + rho))) ** 2)


def _ids_density(E: float) -> float:
    # dN/dE = pi / (2 E^{3/2}) * 1 / (4 sinh^2(x/2)), x = pi / sqrt(E)
    if E <= 0:
        return 0.0
    x = np.pi / np.sqrt(E)
    if x > 1400:
        return 0.0
    return np.pi / (2.0 * E**1.5) / (4.0 * np.sinh(0.5 * x) ** 2)


def free_energy_per_particle(rho: float) -> float:
    """E0(rho) = (1/rho) int_0^{E_rho} E dN(E)."""
    Er = fermi_energy(rho)
    val, err = integrate.quad(lambda E: E * _ids_density(E), 0.0, Er, epsabs=0.0, epsrel=1e-10, limit=200)
    if not np.isfinite(val) or err > 1e-8 * abs(val):
        raise NumericalFailure(f"free energy quadrature failed (err={err:.3g})")
    return float(val / rho)


# ---------------------------------------------------------------- J and weighted J

def _expmom(k: int, a: float, b: float) -> float:
    """int_a^b e^{-x} x^{-k} dx for k = 0..3, 0 < a."""
    if b <= a:
        return 0.0
    if k == 0:
        return np.exp(-a) - np.exp(-b)
    if k == 1:
        return special.exp1(a) - special.exp1(b)
    if k == 2:
        return np.exp(-a) / a - np.exp(-b) / b - _expmom(1, a, b)
    if k == 3:
        return 0.5 * (np.exp(-a) / a**2 - np.exp(-b) / b**2 - _expmom(2, a, b))
    raise ValueError(k)


def _expmom2(k: int, a: float, b: float) -> float:
    """int_a^b e^{-2x} x^{-k} dx."""
    return 2.0 ** (k - 1) * _expmom(k, 2 * a, 2 * b)


def _pair_weight(M: float, adjacency: str) -> tuple[float, bool]:
    """Measure of admissible facing distances: Lebesgue part on [0, M] and the atom at 0."""
    if adjacency == "continuum":
        return M, False
    if adjacency == "exact":
        return M, M > 0
    raise InvalidArgument(f"unknown adjacency mode {adjacency!r}")


def _j_parts(lam: float, params: ModelParams, fits: AsymptoticFit, weighted: bool,
             adjacency: str) -> np.ndarray:
    if not lam > 0:
        raise InvalidArgument("lambda must be positive")
    l = params.minimal_length
    M = params.interaction_range
    s = np.pi / np.sqrt(lam)
    g = fits.gamma
    out = np.zeros(4)
    # D1: single pieces, first level pi^2/u^2
    a, b = max(l, s), 3 * l
    out[0] = PI2 * _expmom(2, a, b) if weighted else _expmom(0, a, b)
    # D2: single pieces, second level 4 pi^2/u^2 + gamma/u^3
    a, b = max(2 * l, 2 * s + g / (8 * PI2)), 3 * l
    out[1] = (4 * PI2 * _expmom(2, a, b) + g * _expmom(3, a, b)) if weighted else _expmom(0, a, b)
    width, atom = _pair_weight(M, adjacency)
    tmass = width + (1.0 if atom else 0.0)
    if tmass == 0:
        return out
    # D3: pairs, first level pi^2/y^2 on the longer piece; t-independent
    A, B = max(l, s), 2 * l
    if A < B:
        if weighted:
            out[2] = 2 * PI2 * (np.exp(-l) * _expmom(2, A, B) - _expmom2(2, A, B))
        else:
            out[2] = 2 * np.exp(-l) * (np.exp(-A) - np.exp(-B)) - (np.exp(-2 * A) - np.exp(-2 * B))
        out[2] *= tmass

    # D4: pairs, second level pi^2/x^2 + sigma(t)/(x^3 y^3) on the shorter piece
    def inner(y, t):
        sig = fits.sigma(t)
        xlo = max(l, s + sig / (2 * PI2 * y**3))
        if xlo >= y:
            return 0.0
        if weighted:
            return 2 * np.exp(-y) * (PI2 * _expmom(2, xlo, y) + sig / y**3 * _expmom(3, xlo, y))
        return 2 * np.exp(-y) * (np.exp(-xlo) - np.exp(-y))

    def over_y(t):
        lo = max(l, s)
        if lo >= 2 * l:
            return 0.0
        val, _ = integrate.quad(inner, lo, 2 * l, args=(t,), **_QUAD)
        return val

    sig_knots = [d for d in fits.sigma_d if 0 < d < width]
    if width > 0:
        if fits.sigma_d and M > 0:
            val, _ = integrate.quad(over_y, 0.0, width, points=sig_knots or None, **_QUAD)
        else:
            val = width * over_y(0.0)
        out[3] += val
    if atom:
        out[3] += over_y(0.0)
    return out


def closed_form_J(lam: float, params: ModelParams, fits: AsymptoticFit, adjacency: str = "exact") -> float:
    """Asymptotic density (per unit length) of pool levels at or below lambda."""
    iso = isolation_probability(params, adjacency) ** 2
    return float(iso * _j_parts(lam, params, fits, False, adjacency).sum())


def weighted_J(lam: float, params: ModelParams, fits: AsymptoticFit, adjacency: str = "exact") -> float:
    """Same domains as J with each level weighted by its asymptotic energy."""
    iso = isolation_probability(params, adjacency) ** 2
    return float(iso * _j_parts(lam, params, fits, True, adjacency).sum())


@dataclass(frozen=True)
class CountingFunction:
    grid: np.ndarray
    empirical: np.ndarray | None
    closed_form: np.ndarray | None
    params: dict = field(default_factory=dict)

    @property
    def sup_gap(self) -> float:
        return float(np.max(np.abs(self.empirical - self.closed_form)))


def empirical_counting(pool: LevelPool, L: float, lam_grid, feasible_only: bool = True) -> CountingFunction:
    """(1/L) #{levels <= lambda}.  J only counts levels within the caps, hence the default."""
    grid = np.asarray(lam_grid, dtype=np.float64)
    vals = np.sort(pool.values[pool.feasible] if feasible_only else pool.values)
    emp = np.searchsorted(vals, grid, side="right") / L
    return CountingFunction(grid, emp, None)


def counting_comparison(pool: LevelPool, L: float, lam_grid, params: ModelParams, fits: AsymptoticFit,
                        adjacency: str = "exact") -> CountingFunction:
    emp = empirical_counting(pool, L, lam_grid)
    J = np.array([closed_form_J(x, params, fits, adjacency) for x in emp.grid])
    meta = {"rho": params.density, "M": params.interaction_range, "gamma": fits.gamma,
            "minimal_length": params.minimal_length, "adjacency": adjacency}
    return CountingFunction(emp.grid, emp.empirical, J, meta)


@dataclass(frozen=True)
class FermiSolution:
    lambda_rho: float
    delta_rho: float
    residual: float


def fermi_level(rho: float, params: ModelParams, fits: AsymptoticFit, adjacency: str = "exact",
                tol: float = 1e-10) -> FermiSolution:
    """Root of J(lambda) = rho."""
    l = params.minimal_length

    def f(lam):
        return closed_form_J(lam, params, fits, adjacency) - rho

    lo = (np.pi / (3 * l)) ** 2
    hi = max(params.fermi_energy, lo) * 2
    while f(hi) < 0:
        hi *= 4
        if hi > 1e6 * lo:
            raise NoRootError(f"rho={rho} exceeds the range of J (sup ~ {f(hi) + rho:.6g})")
    lam = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    res = abs(f(lam))
    if res > tol:
        raise NoRootError(f"root residual {res:.3g} above tolerance")
    return FermiSolution(float(lam), float(np.pi / np.sqrt(lam)), float(res))


# ---------------------------------------------------------------- occupations

def _free_increments(decomp: ChainDecomposition, pieces):
    ls = decomp.config.lengths
    ip, ik, iv = [], [], []
    for i in pieces:
        for k in range(1, int(decomp.caps[i]) + 1):
            ip.append(int(i))
            ik.append(k)
            iv.append(PI2 * k * k / ls[i] ** 2)
    return np.array(ip, dtype=np.int64), np.array(ik, dtype=np.int64), np.array(iv)


def free_occupation(decomp: ChainDecomposition, n: int) -> Occupation:
    """Free ground state: the n lowest Dirichlet levels over all pieces, under caps."""
    ip, ik, iv = _free_increments(decomp, range(decomp.config.piece_count))
    if n > ip.size:
        raise InfeasibleError(f"n={n} exceeds total capacity {ip.size}")
    counts = np.zeros(decomp.config.piece_count, dtype=np.int64)
    np.add.at(counts, ip[lexical_order(iv, ip, ik)[:n]], 1)
    return Occupation(counts)


@dataclass(frozen=True)
class ThresholdOccupation:
    occupation: Occupation
    from_rules: int
    trimmed: int
    completed: int


def build_test_occupation(decomp: ChainDecomposition, fermi: FermiSolution, fits: AsymptoticFit,
                          n: int) -> ThresholdOccupation:
    """Threshold rules on P_2 chains, then free completion on N_2 up to n particles.

    If the rules place more than n particles (finite L), the particles sitting
    on the highest asymptotic levels are removed first.
    """
    if decomp.p != 2:
        raise InvalidArgument("test occupation is defined for p = 2")
    delta = fermi.delta_rho
    g = fits.gamma
    counts = np.zeros(decomp.config.piece_count, dtype=np.int64)
    tops = []  # (-level, chain id) of the top particle in each occupied chain
    levels: dict[int, list[tuple[int, float]]] = {}
    for c in decomp.small_chains:
        ch = decomp.chains[c]
        if ch.size == 1:
            i, l = ch.piece_indices[0], ch.lengths[0]
            q = 0 if l < delta else (2 if (l >= 2 * delta + g / (8 * PI2) and ch.caps[0] >= 2) else 1)
            counts[i] = q
            levels[c] = [(i, PI2 / l**2), (i, 4 * PI2 / l**2 + g / l**3)][:q]
        elif ch.size == 2:
            (i, j), (li, lj) = ch.piece_indices, ch.lengths
            short, long_ = (i, j) if li <= lj else (j, i)
            ls, ll = min(li, lj), max(li, lj)
            d = ch.gaps[0]
            lev = [(long_, PI2 / ll**2)]
            if ll < delta:
                lev = []
            elif ls >= delta + float(fits.d4_shift(d, ll)):
                lev.append((short, PI2 / ls**2 + float(fits.sigma(d)) / (ls**3 * ll**3)))
            for p_, _ in lev:
                counts[p_] += 1
            levels[c] = lev
        else:
            raise InvalidArgument(f"chain {c} of size {ch.size} in P_2")
        if levels[c]:
            tops.append((-levels[c][-1][1], c))
    from_rules = int(counts.sum())
    trimmed = 0
    heapq.heapify(tops)
    while counts.sum() > n:
        _, c = heapq.heappop(tops)
        piece, _ = levels[c].pop()
        counts[piece] -= 1
        trimmed += 1
        if levels[c]:
            heapq.heappush(tops, (-levels[c][-1][1], c))
    need = n - int(counts.sum())
    ip, ik, iv = _free_increments(decomp, decomp.leftover)
    if need > ip.size:
        raise InfeasibleError(f"N_2 capacity {ip.size} cannot absorb {need} particles")
    if need > 0:
        np.add.at(counts, ip[lexical_order(iv, ip, ik)[:need]], 1)
    return ThresholdOccupation(Occupation(counts), from_rules, trimmed, max(need, 0))


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class LeftoverReport:
    fraction: float
    lower: float
    upper: float
    energy_free: float
    energy_first_order: float
    per_particle_free: float
    per_particle_bound: float

    @property
    def fraction_in_band(self) -> bool:
        return self.lower <= self.fraction <= self.upper

    @property
    def energy_ok(self) -> bool:
        return self.per_particle_free <= self.per_particle_bound


def leftover_checks(decomp: ChainDecomposition, occupation: Occupation, p: int, delta: float,
                    params: ModelParams, U: Potential | None = None,
                    cfg: SolverConfig = DEFAULT_SOLVER) -> LeftoverReport:
    """Share of particles in N_p against rho^{p +- delta} and the energy of those particles.

    The per-particle bound is pi^2 / l_{rho,U}^2: E0(l, q) <= pi^2 q^3 / l^2 and
    q <= l / l_{rho,U}.
    """
    n = occupation.total
    ls = decomp.config.lengths
    counts = occupation.counts
    left = np.asarray(decomp.leftover)
    nN = int(counts[left].sum()) if left.size else 0
    e_free = float(sum(free_energy(ls[i], int(counts[i])) for i in left if counts[i]))
    e_first = e_free
    if U is not None and not U.is_zero and nN:
        small = set(decomp.small_chains)
        e_first = 0.0
        for c, ch in enumerate(decomp.chains):
            if c in small:
                continue
            split = tuple(int(counts[i]) for i in ch.piece_indices)
            if any(split):
                e_first += first_order_energy(ch, split, U, cfg)
    rho = params.density
    return LeftoverReport(
        fraction=nN / n if n else 0.0,
        lower=rho ** (p + delta), upper=rho ** (p - delta),
        energy_free=e_free, energy_first_order=float(e_first),
        per_particle_free=e_free / nN if nN else 0.0,
        per_particle_bound=PI2 / params.minimal_length**2,
    )


# ---------------------------------------------------------------- experiments

@dataclass(frozen=True)
class SeedResult:
    rho: float
    L: float
    seed: int
    n: int
    E_greedy_per_n: float
    E_test_per_n: float | None
    J_lambda_over_rho: float
    lambda_rho: float
    delta_rho: float
    gaps: dict
    pool_size: int
    n_leftover: int
    test_status: str = "ok"

    def to_json(self) -> str:
        d = asdict(self)
        d["spec_version"] = SPEC_VERSION
        return json.dumps(d, sort_keys=True)


@dataclass(frozen=True)
class ExperimentReport:
    rho: float
    L: float
    runs: tuple[SeedResult, ...]

    def _stat(self, key):
        v = np.array([getattr(r, key) for r in self.runs if getattr(r, key) is not None], dtype=float)
        if v.size == 0:
            return float("nan"), float("nan")
        se = v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else 0.0
        return float(v.mean()), float(se)

    @property
    def greedy(self):
        return self._stat("E_greedy_per_n")

    @property
    def test(self):
        return self._stat("E_test_per_n")

    @property
    def gap_greedy_J(self):
        v = np.array([r.gaps["greedy_minus_J"] for r in self.runs])
        return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0


def fermi_data(rho: float, U: Potential, fits: AsymptoticFit, adjacency: str = "exact"):
    params = model_params(rho, U.range if not U.is_zero else 0.0)
    fermi = fermi_level(rho, params, fits, adjacency)
    JJ = weighted_J(fermi.lambda_rho, params, fits, adjacency)
    return params, fermi, JJ


def run_seed(rho: float, L: float, seed: int, U: Potential, fits: AsymptoticFit, p: int = 2,
             cfg: SolverConfig = DEFAULT_SOLVER, adjacency: str = "exact", cache=None) -> SeedResult:
    params, fermi, JJ = cache if cache is not None else fermi_data(rho, U, fits, adjacency)
    cfg_ = sample_pieces(L, seed)
    dec = decompose(cfg_, params, p)
    n = int(round(rho * L))
    pool = build_level_pool(dec, U, p, cfg)
    gs = greedy_fill(pool, n, dec, leftover="merge")
    e_g = gs.energy / n
    e_t = None
    status = "not computed"
    if p == 2:
        # at finite L the threshold rules can leave more particles than N_2 holds
        try:
            test = build_test_occupation(dec, fermi, fits, n)
        except InfeasibleError as exc:
            status = f"infeasible: {exc}"
        else:
            e_t = occupation_energy(dec, test.occupation, U, cfg) / n
            status = "ok"
    ref = JJ / rho
    gaps = {"greedy_minus_J": e_g - ref}
    if e_t is not None:
        gaps["test_minus_J"] = e_t - ref
        gaps["test_minus_greedy"] = e_t - e_g
    return SeedResult(rho, L, int(seed), n, e_g, e_t, ref, fermi.lambda_rho, fermi.delta_rho, gaps,
                      len(pool), gs.n_leftover, status)


def energy_per_particle_experiment(rho: float, L: float, seeds: Sequence[int], U: Potential,
                                   fits: AsymptoticFit | None = None, p: int = 2, delta: float = 0.5,
                                   cfg: SolverConfig = DEFAULT_SOLVER,
                                   adjacency: str = "exact") -> ExperimentReport:
    """Greedy and test energies per particle against (1/rho) weighted J at the Fermi level.

    ``delta`` only labels the expected error order rho^{2 - delta}; it does not
    change the computation.
    """
    if not 0 < delta < 1:
        raise InvalidArgument("delta must lie in (0, 1)")
    if L > 1e5:
        raise InvalidArgument("desk scale: L <= 1e5")
    if fits is None:
        if not U.is_zero:
            raise InvalidArgument("fits are required for a non-zero potential")
        fits = AsymptoticFit.zero()
    cache = fermi_data(rho, U, fits, adjacency)
    runs = tuple(run_seed(rho, L, s, U, fits, p, cfg, adjacency, cache) for s in seeds)
    return ExperimentReport(rho, L, runs)
