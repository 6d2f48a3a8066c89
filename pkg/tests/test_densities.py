import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import component, params, random_orbitals
from piecelab.chains import decompose
from piecelab.disorder import PieceConfiguration
from piecelab.errors import InvalidArgument, NumericalFailure
from piecelab.densities import (DensityKernel, density_comparison, factorized_densities,
                                pair_state_densities, piece_grid, sine_orbitals, slater_one_density,
                                slater_two_density, slater_wavefunction, trace_norm_distance,
                                wavefunction_densities, wedge)
from piecelab.optimizer import Occupation
from piecelab.spectra import Potential, solve_pair, solve_same_piece_pair, TwoPiece

TOL = 1e-8


# ---------------------------------------------------------------- Slater states

def test_slater_one_orbital_projector():
    grid = piece_grid([(0.0, 2.0)], per_unit=10)
    k = slater_one_density(sine_orbitals(grid, 0, [1]), grid)
    ev = np.linalg.eigvalsh(k.matrix)
    assert k.trace == pytest.approx(1.0, abs=1e-12)
    assert ev[-1] == pytest.approx(1.0) and np.allclose(ev[:-1], 0, atol=1e-12)


def test_slater_sine_modes_projector():
    grid = piece_grid([(0.0, 3.0)], per_unit=10)
    k = slater_one_density(sine_orbitals(grid, 0, 5), grid)
    ev = np.linalg.eigvalsh(k.matrix)
    assert k.trace == pytest.approx(5.0, abs=1e-12)
    assert np.allclose(ev[-5:], 1.0, atol=1e-12) and np.allclose(ev[:-5], 0.0, atol=1e-12)
    k.check(5)


def test_slater_matches_brute_force_on_40_points():
    grid = piece_grid([(0.0, 2.0)], per_unit=20)
    assert grid.size == 40
    phi = random_orbitals(np.random.default_rng(0), grid, 0, 2)
    b1, b2 = wavefunction_densities(slater_wavefunction(phi), grid)
    k1, k2 = slater_one_density(phi, grid), slater_two_density(phi, grid)
    assert np.abs(b1.values - k1.values).max() <= TOL
    assert np.abs(b2.values - k2.values).max() <= TOL
    assert k2.trace == pytest.approx(1.0)


def test_slater_rejects_non_orthonormal():
    grid = piece_grid([(0.0, 1.0)], per_unit=20)
    phi = sine_orbitals(grid, 0, 2)
    phi[1] += 0.1 * phi[0]
    with pytest.raises(InvalidArgument, match="Gram defect"):
        slater_one_density(phi, grid)


def test_kernel_validation_and_csv():
    grid = piece_grid([(0.0, 1.0)], per_unit=4)
    with pytest.raises(InvalidArgument):
        DensityKernel(3, grid, np.eye(4))
    with pytest.raises(InvalidArgument):
        DensityKernel(1, grid, np.eye(3))
    k = slater_one_density(sine_orbitals(grid, 0, [1]), grid)
    rows = list(csv.reader(io.StringIO(k.to_csv())))
    assert rows[0] == ["i", "j", "value"] and len(rows) == 1 + np.count_nonzero(k.matrix)
    with pytest.raises(NumericalFailure):
        k.check(2)


def test_grid_validation():
    with pytest.raises(InvalidArgument):
        piece_grid([(1.0, 1.0)])
    with pytest.raises(InvalidArgument):
        piece_grid([(0.0, 2.0), (1.0, 3.0)])


# ---------------------------------------------------------------- factorization

@given(st.integers(0, 2**32 - 1), st.lists(st.sampled_from([1, 2, "pair"]), min_size=2, max_size=3))
def test_factorized_densities_match_brute_force(seed, kinds):
    # at most 4 particles: the brute-force state lives on grid^n
    if sum(2 if k == "pair" else k for k in kinds) > 4:
        kinds = kinds[:2]
    rng = np.random.default_rng(seed)
    grid = piece_grid([(0.0, 1.0), (2.0, 3.0), (4.0, 5.0)][:len(kinds)], per_unit=4)
    psis, comps = zip(*(component(rng, grid, k, kind) for k, kind in enumerate(kinds)))
    psi = psis[0]
    for other in psis[1:]:
        psi = wedge(psi, other)
    b1, b2 = wavefunction_densities(psi, grid)
    f1, f2 = factorized_densities(comps)
    n = psi.ndim
    assert np.abs(f1.values - b1.values).max() <= TOL
    assert np.abs(f2.values - b2.values).max() <= TOL
    assert f1.trace == pytest.approx(n, abs=TOL)
    assert f2.trace == pytest.approx(n * (n - 1) / 2, abs=TOL)
    f1.check(n)
    f2.check(n)


def test_factorized_single_component_is_identity():
    rng = np.random.default_rng(3)
    grid = piece_grid([(0.0, 1.0)], per_unit=5)
    _, c = component(rng, grid, 0, "pair")
    f1, f2 = factorized_densities([c])
    assert np.abs(f1.matrix - c.gamma1.matrix).max() <= 1e-14
    assert np.abs(f2.matrix - c.gamma2.matrix).max() <= 1e-14


def test_factorized_rejects_overlap():
    rng = np.random.default_rng(1)
    grid = piece_grid([(0.0, 1.0), (2.0, 3.0)], per_unit=4)
    _, a = component(rng, grid, 0, 1)
    _, b = component(rng, grid, 0, 1)
    with pytest.raises(InvalidArgument, match="overlap"):
        factorized_densities([a, b])
    with pytest.raises(InvalidArgument):
        factorized_densities([])


# ---------------------------------------------------------------- trace norm

def random_kernel(rng, grid):
    A = rng.standard_normal((grid.size, grid.size))
    return DensityKernel(1, grid, A + A.T)


@given(st.integers(0, 2**32 - 1))
def test_trace_norm_is_metric(seed):
    rng = np.random.default_rng(seed)
    grid = piece_grid([(0.0, 1.0)], per_unit=8)
    a, b, c = (random_kernel(rng, grid) for _ in range(3))
    assert trace_norm_distance(a, a) == 0.0
    assert trace_norm_distance(a, b) == pytest.approx(trace_norm_distance(b, a), rel=1e-12)
    assert trace_norm_distance(a, c) <= trace_norm_distance(a, b) + trace_norm_distance(b, c) + 1e-9


def test_trace_norm_orthogonal_projectors():
    grid = piece_grid([(0.0, 1.0)], per_unit=10)
    p1 = slater_one_density(sine_orbitals(grid, 0, [1]), grid)
    p2 = slater_one_density(sine_orbitals(grid, 0, [2]), grid)
    assert trace_norm_distance(p1, p2) == pytest.approx(2.0, abs=1e-12)


def test_trace_norm_grid_mismatch():
    g1 = piece_grid([(0.0, 1.0)], per_unit=10)
    g2 = piece_grid([(0.0, 1.0)], per_unit=11)
    with pytest.raises(InvalidArgument):
        trace_norm_distance(slater_one_density(sine_orbitals(g1, 0, 1), g1),
                            slater_one_density(sine_orbitals(g2, 0, 1), g2))


# ---------------------------------------------------------------- two-particle states

def test_pair_state_free_same_piece_is_slater():
    sol = solve_same_piece_pair(5.0, Potential.zero(), 8)
    k1, k2 = pair_state_densities(sol, order2=True)
    phi = sine_orbitals(k1.grid, 0, 2)
    assert np.abs(k1.values - slater_one_density(phi, k1.grid).values).max() <= TOL
    assert np.abs(k2.values - slater_two_density(phi, k1.grid).values).max() <= TOL


def test_pair_state_far_pieces_is_product():
    sol = solve_pair(TwoPiece(3.0, 4.0, 1.5), Potential.step(1.0, 1.0), 6, 6)
    k1, _ = pair_state_densities(sol)
    phi = np.vstack([sine_orbitals(k1.grid, 0, [1]), sine_orbitals(k1.grid, 1, [1])])
    assert np.abs(k1.values - slater_one_density(phi, k1.grid).values).max() <= TOL


def test_pair_state_normalization(step_U):
    sol = solve_same_piece_pair(20.0, step_U)
    k1, _ = pair_state_densities(sol)
    k1.check(2)
    small = solve_same_piece_pair(3.0, step_U, 8)
    k1, k2 = pair_state_densities(small, per_unit=4, order2=True)
    k2.check(2)
    sol2 = solve_pair(TwoPiece(3.0, 2.5, 0.2), step_U, 8, 8)
    k1, k2 = pair_state_densities(sol2, per_unit=3, order2=True)
    k1.check(2)
    k2.check(2)


def test_pair_state_gamma2_matches_brute_force(step_U):
    sol = solve_pair(TwoPiece(1.5, 1.0, 0.2), step_U, 4, 4)
    k1, k2 = pair_state_densities(sol, per_unit=6, order2=True)
    grid = k1.grid
    c = sol.coefficients
    f = sine_orbitals(grid, 0, 4).T @ c @ sine_orbitals(grid, 1, 4)
    b1, b2 = wavefunction_densities((f - f.T) / np.sqrt(2.0), grid)
    assert np.abs(b1.values - k1.values).max() <= TOL
    assert np.abs(b2.values - k2.values).max() <= TOL


# ---------------------------------------------------------------- full comparisons

def six_piece_instance():
    # long pieces (l_min = 1): chains [2.2, 1.8] (adjacent, N_2), [2.5], [1.5]; short fillers of 0.6 > M
    lengths = [0.6, 2.2, 1.8, 0.6, 2.5, 0.6, 1.5]
    return decompose(PieceConfiguration.from_lengths(lengths), params(1.0, 0.5), p=2)


def test_density_comparison_identical_is_zero(step_U):
    d = six_piece_instance()
    occ = Occupation(np.array([0, 1, 1, 0, 2, 0, 1]))
    r = density_comparison(d, occ, occ, step_U)
    assert r.gamma1_distance == 0.0 and r.gamma2_upper == 0.0 and r.differing_blocks == 0
    assert r.common_particles == 5


def test_density_comparison_bounded_by_moved_particles(step_U):
    d = six_piece_instance()
    a = Occupation(np.array([0, 1, 1, 0, 2, 0, 1]))
    b = Occupation(np.array([0, 2, 0, 0, 2, 0, 1]))
    assert b.is_admissible(d)
    r = density_comparison(d, a, b, step_U)
    outside = a.total - r.common_particles
    # the adjacent pair has cap sum 3, so it is in N_2 and its pieces are separate free blocks
    assert r.common_particles == 3 and r.differing_blocks == 2
    assert 0 < r.gamma1_distance <= 2 * outside
    assert r.gamma2_lower <= r.gamma2_upper
    with pytest.raises(InvalidArgument):
        density_comparison(d, a, Occupation(np.array([0, 1, 0, 0, 2, 0, 1])), step_U)
