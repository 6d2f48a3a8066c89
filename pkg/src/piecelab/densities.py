"""Reduced densities of factorized fermion states and trace-norm distances.

Kernels are sampled on midpoint grids, one uniform grid per piece.  Sine modes
sin(k pi x / l) with k below the node count are exactly orthonormal under the
midpoint rule, so Galerkin states reconstructed on the grid keep their norm and
trace norms of grid kernels equal those of the underlying operators.

Normalization: gamma1 has trace n, gamma2 has trace n(n-1)/2, with
gamma2(x1, x2, y1, y2) = n(n-1)/2 int psi(x1, x2, Z) psi(y1, y2, Z) dZ.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chains import ChainDecomposition
from .errors import InvalidArgument, NumericalFailure
from .optimizer import Occupation
from .spectra import (DEFAULT_SOLVER, Potential, SamePiece, SolverConfig, TwoParticleSolution, TwoPiece,
                      solve_pair, solve_same_piece_pair)

NODES_PER_UNIT = 20


@dataclass(frozen=True)
class Grid:
    """Quadrature nodes on a union of disjoint intervals; ``piece`` labels the interval of each node."""
    nodes: np.ndarray
    weights: np.ndarray
    piece: np.ndarray
    bounds: tuple[tuple[float, float], ...]

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    def same_as(self, other: "Grid") -> bool:
        return self.size == other.size and bool(np.array_equal(self.nodes, other.nodes)
                                                and np.array_equal(self.weights, other.weights))


def piece_grid(bounds: Sequence[tuple[float, float]], per_unit: float = NODES_PER_UNIT,
               min_nodes: int | Sequence[int] = 1) -> Grid:
    """Midpoint grid with max(ceil(per_unit * length), min_nodes) nodes per interval."""
    bounds = tuple((float(a), float(b)) for a, b in bounds)
    if np.isscalar(min_nodes):
        min_nodes = [int(min_nodes)] * len(bounds)
    nodes, weights, piece = [], [], []
    for k, ((a, b), m0) in enumerate(zip(bounds, min_nodes)):
        if not b > a:
            raise InvalidArgument(f"empty interval [{a}, {b}]")
        m = max(int(np.ceil(per_unit * (b - a))), int(m0), 1)
        h = (b - a) / m
        nodes.append(a + h * (np.arange(m) + 0.5))
        weights.append(np.full(m, h))
        piece.append(np.full(m, k, dtype=np.int64))
    nodes = np.concatenate(nodes)
    if np.any(np.diff(nodes) <= 0):
        raise InvalidArgument("intervals must be disjoint and increasing")
    return Grid(nodes, np.concatenate(weights), np.concatenate(piece), bounds)


def sine_orbitals(grid: Grid, piece: int, modes: Sequence[int] | int) -> np.ndarray:
    """Dirichlet sine modes of interval ``piece`` sampled on the grid, zero elsewhere. Shape (k, m)."""
    modes = np.arange(1, modes + 1) if np.isscalar(modes) else np.asarray(modes)
    a, b = grid.bounds[piece]
    l = b - a
    out = np.zeros((modes.size, grid.size))
    sel = grid.piece == piece
    x = grid.nodes[sel] - a
    out[:, sel] = np.sqrt(2.0 / l) * np.sin(np.outer(modes, x) * np.pi / l)
    return out


@dataclass(frozen=True)
class DensityKernel:
    """Reduced density sampled on ``grid`` (order 1) or grid x grid (order 2).

    ``matrix`` holds sqrt(w_x) K(x, y) sqrt(w_y), the matrix of the operator in
    the orthonormal basis of normalized grid indicators; order-2 matrices are
    indexed by (x1, x2) row-major.
    """
    order: int
    grid: Grid = field(repr=False)
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.order not in (1, 2):
            raise InvalidArgument("order must be 1 or 2")
        m = self.grid.size ** self.order
        if self.matrix.shape != (m, m):
            raise InvalidArgument(f"matrix shape {self.matrix.shape} does not match grid ({m}, {m})")

    @classmethod
    def from_values(cls, order: int, grid: Grid, values: np.ndarray) -> "DensityKernel":
        s = np.sqrt(grid.weights)
        if order == 1:
            return cls(1, grid, values * np.outer(s, s))
        m = grid.size
        s2 = np.outer(s, s).ravel()
        return cls(2, grid, values.reshape(m * m, m * m) * np.outer(s2, s2))

    @property
    def values(self) -> np.ndarray:
        s = np.sqrt(self.grid.weights)
        if self.order == 1:
            return self.matrix / np.outer(s, s)
        m = self.grid.size
        s2 = np.outer(s, s).ravel()
        return (self.matrix / np.outer(s2, s2)).reshape(m, m, m, m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def hermitian_defect(self) -> float:
        return float(np.abs(self.matrix - self.matrix.T).max(initial=0.0))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0]) if self.matrix.size else 0.0

    def check(self, particles: int, tol: float = 1e-8) -> None:
        """Hermitian, positive semidefinite and correctly normalized, else NumericalFailure."""
        if self.hermitian_defect() > 1e-10:
            raise NumericalFailure(f"kernel not Hermitian: {self.hermitian_defect():.3g}")
        if self.min_eigenvalue() < -tol:
            raise NumericalFailure(f"kernel not positive: {self.min_eigenvalue():.3g}")
        want = particles if self.order == 1 else particles * (particles - 1) / 2
        if abs(self.trace - want) > tol * max(1.0, want):
            raise NumericalFailure(f"trace {self.trace} != {want}")

    def to_csv(self) -> str:
        """Rows (i, j, value) of the weighted matrix, nonzero entries only."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        for i, j in zip(*np.nonzero(self.matrix)):
            w.writerow([int(i), int(j), repr(float(self.matrix[i, j]))])
        return buf.getvalue()


def _check_orbitals(orbitals: np.ndarray, grid: Grid, tol: float) -> np.ndarray:
    phi = np.atleast_2d(np.asarray(orbitals, dtype=np.float64))
    if phi.shape[1] != grid.size:
        raise InvalidArgument("orbitals must be sampled on the grid")
    G = (phi * grid.weights) @ phi.T
    defect = float(np.abs(G - np.eye(len(phi))).max(initial=0.0))
    if defect > tol:
        raise InvalidArgument(f"orbitals not orthonormal on the grid (Gram defect {defect:.3g})")
    return phi


def _tensor(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # (A x B)(x1, x2, y1, y2) = A(x1, y1) B(x2, y2)
    return np.einsum("ac,bd->abcd", A, B)


def _tensor_tau(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # ((A x B) o tau)(x1, x2, y1, y2) = A(x1, y2) B(x2, y1)
    return np.einsum("ad,bc->abcd", A, B)


def slater_one_density(orbitals, grid: Grid, tol: float = 1e-8) -> DensityKernel:
    phi = _check_orbitals(orbitals, grid, tol)
    return DensityKernel.from_values(1, grid, phi.T @ phi)


def slater_two_density(orbitals, grid: Grid, tol: float = 1e-8) -> DensityKernel:
    phi = _check_orbitals(orbitals, grid, tol)
    G = phi.T @ phi
    return DensityKernel.from_values(2, grid, 0.5 * (_tensor(G, G) - _tensor_tau(G, G)))


# brute-force wavefunctions on grid^n, used as oracles for small systems

def antisymmetrize(psi: np.ndarray) -> np.ndarray:
    """(1/n!) sum_sigma sgn(sigma) psi(x_sigma)."""
    n = psi.ndim
    out = np.zeros_like(psi)
    for perm in itertools.permutations(range(n)):
        sign = np.linalg.det(np.eye(n)[list(perm)])
        out += sign * np.transpose(psi, perm)
    return out / math.factorial(n)


def slater_wavefunction(orbitals) -> np.ndarray:
    """Normalized Slater determinant of the rows of ``orbitals`` on grid^n."""
    phi = np.atleast_2d(orbitals)
    n = len(phi)
    prod = phi[0]
    for row in phi[1:]:
        prod = np.multiply.outer(prod, row)
    return antisymmetrize(prod) * np.sqrt(math.factorial(n))


def wedge(psi_a: np.ndarray, psi_b: np.ndarray) -> np.ndarray:
    """Normalized antisymmetric product of two normalized fermion states with disjoint supports."""
    ka, kb = psi_a.ndim, psi_b.ndim
    n = ka + kb
    return antisymmetrize(np.multiply.outer(psi_a, psi_b)) * np.sqrt(
        math.factorial(n) / (math.factorial(ka) * math.factorial(kb)))


def wavefunction_densities(psi: np.ndarray, grid: Grid) -> tuple[DensityKernel, DensityKernel | None]:
    """gamma1 and gamma2 of an n-particle wavefunction sampled on grid^n, by direct quadrature."""
    n = psi.ndim
    m = grid.size
    if psi.shape != (m,) * n:
        raise InvalidArgument("wavefunction must be sampled on grid^n")
    w = grid.weights
    wz = np.ones(1)
    for _ in range(n - 1):
        wz = np.multiply.outer(wz, w)
    P = psi.reshape(m, -1)
    g1 = n * (P * wz.ravel()) @ P.T
    k1 = DensityKernel.from_values(1, grid, g1)
    if n < 2:
        return k1, None
    wz2 = np.ones(1)
    for _ in range(n - 2):
        wz2 = np.multiply.outer(wz2, w)
    P2 = psi.reshape(m * m, -1)
    g2 = 0.5 * n * (n - 1) * (P2 * wz2.ravel()) @ P2.T
    return k1, DensityKernel.from_values(2, grid, g2.reshape(m, m, m, m))


@dataclass(frozen=True)
class ComponentState:
    """Densities of a q-particle state supported on one part of a partition."""
    gamma1: DensityKernel
    gamma2: DensityKernel | None
    particles: int


def _support(k: DensityKernel, tol: float = 1e-14) -> np.ndarray:
    return np.abs(k.matrix).max(axis=1) > tol


def factorized_densities(components: Sequence[ComponentState]) -> tuple[DensityKernel, DensityKernel]:
    """Densities of the antisymmetric product of states with pairwise disjoint supports.

    gamma1 = sum_i gamma1_i and
    gamma2 = sum_i [gamma2_i - 1/2 g1_i x g1_i + 1/2 (g1_i x g1_i) o tau] + 1/2 G x G - 1/2 (G x G) o tau
    with G the total gamma1.
    """
    if not components:
        raise InvalidArgument("need at least one component")
    grid = components[0].gamma1.grid
    m = grid.size
    seen = np.zeros(m, dtype=bool)
    for c in components:
        if not c.gamma1.grid.same_as(grid) or (c.gamma2 is not None and not c.gamma2.grid.same_as(grid)):
            raise InvalidArgument("components must share one grid")
        s = _support(c.gamma1)
        if np.any(seen & s):
            raise InvalidArgument("component supports overlap")
        seen |= s
    G = sum(c.gamma1.values for c in components)
    g2 = 0.5 * (_tensor(G, G) - _tensor_tau(G, G))
    for c in components:
        g = c.gamma1.values
        if c.gamma2 is not None:
            g2 = g2 + c.gamma2.values
        g2 = g2 - 0.5 * _tensor(g, g) + 0.5 * _tensor_tau(g, g)
    return DensityKernel.from_values(1, grid, G), DensityKernel.from_values(2, grid, g2)


# two-particle Galerkin states

def _mode_gamma1(solution: TwoParticleSolution) -> list[np.ndarray]:
    """gamma1 in the sine-mode basis of each piece of the geometry."""
    c = solution.coefficients
    if isinstance(solution.geometry, SamePiece):
        A = (c - c.T) / np.sqrt(2.0)
        return [2.0 * A @ A.T]
    return [c @ c.T, c.T @ c]


def geometry_bounds(geometry: SamePiece | TwoPiece) -> tuple[tuple[float, float], ...]:
    if isinstance(geometry, SamePiece):
        return ((0.0, geometry.length),)
    g = geometry
    return ((-g.left_length, 0.0), (g.gap, g.gap + g.right_length))


def pair_state_densities(solution: TwoParticleSolution, grid: Grid | None = None,
                         per_unit: float = NODES_PER_UNIT,
                         order2: bool = False) -> tuple[DensityKernel, DensityKernel | None]:
    """gamma1 (and optionally gamma2) of a two-particle Galerkin ground state."""
    blocks = _mode_gamma1(solution)
    if grid is None:
        grid = piece_grid(geometry_bounds(solution.geometry), per_unit,
                          [b.shape[0] + 1 for b in blocks])
    phis = [sine_orbitals(grid, k, b.shape[0]) for k, b in enumerate(blocks)]
    g1 = sum(phi.T @ b @ phi for phi, b in zip(phis, blocks))
    k1 = DensityKernel.from_values(1, grid, g1)
    if not order2:
        return k1, None
    c = solution.coefficients
    if isinstance(solution.geometry, SamePiece):
        A = (c - c.T) / np.sqrt(2.0)
        psi = phis[0].T @ A @ phis[0]
    else:
        f = phis[0].T @ c @ phis[1]
        psi = (f - f.T) / np.sqrt(2.0)
    m = grid.size
    return k1, DensityKernel.from_values(2, grid, np.multiply.outer(psi, psi).reshape(m, m, m, m))


def trace_norm_distance(k1: DensityKernel, k2: DensityKernel) -> float:
    """Sum of singular values of the difference; eigenvalues suffice since both are Hermitian."""
    if k1.order != k2.order or not k1.grid.same_as(k2.grid):
        raise InvalidArgument("kernels must share order and grid")
    D = k1.matrix - k2.matrix
    if not D.size:
        return 0.0
    return float(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T))).sum())


# blockwise comparison of two factorized states of a full configuration

def _block_gamma1(decomp: ChainDecomposition, pieces: tuple[int, ...], split: tuple[int, ...],
                  U: Potential, cfg: SolverConfig) -> list[np.ndarray]:
    """gamma1 of the block state in the sine-mode basis of each piece (square, variable size)."""
    ls = decomp.config.lengths
    out = [np.zeros((1, 1)) for _ in pieces]
    total = sum(split)
    if total == 2 and len(pieces) > 1 and max(split) == 1:
        j, k = [i for i, s in enumerate(split) if s]
        ch = decomp.chains[decomp.chain_of_piece[pieces[0]]]
        d = ch.distance(j, k)
        if not U.is_zero and d < U.range:
            sol = solve_pair(TwoPiece(float(ls[pieces[j]]), float(ls[pieces[k]]), float(d)), U, cfg=cfg)
            out[j], out[k] = _mode_gamma1(sol)
            return out
    if total == 2 and max(split) == 2 and not U.is_zero:
        j = split.index(2)
        out[j] = _mode_gamma1(solve_same_piece_pair(float(ls[pieces[j]]), U, cfg=cfg))[0]
        return out
    # free Slater determinant on every piece: interaction-free or product cases
    for i, s in enumerate(split):
        if s:
            out[i] = np.eye(s)
    return out


@dataclass(frozen=True)
class DensityComparison:
    n: int
    common_particles: int
    differing_blocks: int
    gamma1_distance: float
    gamma2_lower: float
    gamma2_upper: float
    block_distances: tuple[tuple[tuple[int, ...], float], ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {"n": self.n, "common_particles": self.common_particles,
                "differing_blocks": self.differing_blocks,
                "gamma1_distance": self.gamma1_distance,
                "gamma2_lower": self.gamma2_lower, "gamma2_upper": self.gamma2_upper}


def density_comparison(decomp: ChainDecomposition, occ_a: Occupation, occ_b: Occupation, U: Potential,
                       cfg: SolverConfig = DEFAULT_SOLVER,
                       per_unit: float = NODES_PER_UNIT) -> DensityComparison:
    """Trace-norm distances between the factorized states of two occupations.

    Blocks are the chains of P_p (ground state of the chain at the given split)
    and the single pieces of N_p (free Slater states).  Blocks with equal
    occupation carry identical states and form the common factor Phi; the rest
    is Omega.  gamma1: exact, summed over blocks.  gamma2: the trace norm equals
    ||D gamma2_Omega|| + n_Phi ||D gamma1_Omega|| exactly; the first term lies
    in [0, C(n_a,Omega, 2) + C(n_b,Omega, 2)], which gives the two bounds.
    """
    if occ_a.total != occ_b.total:
        raise InvalidArgument("occupations must have the same particle number")
    blocks = [decomp.chains[c].piece_indices for c in decomp.small_chains]
    blocks += [(int(i),) for i in decomp.leftover]
    ls = decomp.config.lengths
    d1 = 0.0
    n_common = 0
    n_omega_a = n_omega_b = 0
    rows = []
    for pieces in blocks:
        sa = tuple(int(occ_a.counts[i]) for i in pieces)
        sb = tuple(int(occ_b.counts[i]) for i in pieces)
        if sa == sb:
            n_common += sum(sa)
            continue
        n_omega_a += sum(sa)
        n_omega_b += sum(sb)
        ga = _block_gamma1(decomp, pieces, sa, U, cfg)
        gb = _block_gamma1(decomp, pieces, sb, U, cfg)
        sizes = [max(x.shape[0], y.shape[0]) for x, y in zip(ga, gb)]
        grid = piece_grid([(0.0, float(ls[i])) if k == 0 else (float(k) * 1e6, float(k) * 1e6 + ls[i])
                           for k, i in enumerate(pieces)], per_unit, [s + 1 for s in sizes])
        mats = []
        for g in (ga, gb):
            M = np.zeros((grid.size, grid.size))
            for k, x in enumerate(g):
                phi = sine_orbitals(grid, k, x.shape[0]) * np.sqrt(grid.weights)
                M += phi.T @ x @ phi
            mats.append(DensityKernel(1, grid, M))
        dist = trace_norm_distance(*mats)
        rows.append((tuple(int(i) for i in pieces), dist))
        d1 += dist
    lower = n_common * d1
    upper = lower + math.comb(n_omega_a, 2) + math.comb(n_omega_b, 2)
    return DensityComparison(occ_a.total, n_common, len(rows), d1, lower, upper, tuple(rows))
