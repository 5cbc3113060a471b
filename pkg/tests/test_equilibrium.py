import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionchain.equilibrium import (
    CoincidentIonsError,
    ConvergenceError,
    default_guess,
    gradient,
    hessian,
    potential,
    solve_equilibrium,
)
from ionchain.units import reference_config


def chain3d(z):
    z = np.asarray(z, dtype=float)
    return np.concatenate([np.zeros(2 * len(z)), z])


def test_potential_values():
    assert potential(np.zeros(3)) == 0.0
    d = 2 ** (1 / 3)
    x = chain3d([-d / 2, d / 2])
    assert potential(x) == pytest.approx(3 * 2 ** (-1 / 3) / 2, rel=1e-14)


def test_translation_penalty():
    rng = np.random.default_rng(1)
    z = np.sort(rng.normal(size=4)) * 3
    x = chain3d(z)
    dz = 0.37
    shifted = chain3d(z + dz)
    expected = 4 * dz**2 / 2 + dz * z.sum()
    assert potential(shifted) - potential(x) == pytest.approx(expected, rel=1e-12)


def test_coincident_ions():
    with pytest.raises(CoincidentIonsError):
        potential(chain3d([0.0, 0.0]))
    with pytest.raises(CoincidentIonsError):
        solve_equilibrium(reference_config().with_ions(2), initial_guess=[1.0, 1.0])


def _random_positions(seed, n):
    rng = np.random.default_rng(seed)
    return rng.normal(size=3 * n) * 1.5


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    x = _random_positions(seed, 4)
    betas = (3.0, 2.0, 1.0)
    g = gradient(x, betas)
    h = 1e-6
    fd = np.array([(potential(x + h * e, betas) - potential(x - h * e, betas)) / (2 * h)
                   for e in np.eye(len(x))])
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-6 * np.abs(g).max())


@pytest.mark.parametrize("seed", range(5))
def test_hessian_matches_finite_differences(seed):
    x = _random_positions(seed, 4)
    betas = (3.0, 2.0, 1.0)
    hs = hessian(x, betas)
    assert np.array_equal(hs, hs.T)
    h = 1e-6
    fd = np.column_stack([(gradient(x + h * e, betas) - gradient(x - h * e, betas)) / (2 * h)
                          for e in np.eye(len(x))])
    assert np.allclose(hs, fd, rtol=1e-6, atol=1e-6 * np.abs(hs).max())


def test_single_ion_hessian():
    assert np.array_equal(hessian(np.zeros(3), (10.0, 7.0, 1.0)), np.diag([100.0, 49.0, 1.0]))


def test_analytic_equilibria():
    c = reference_config()
    z2 = solve_equilibrium(c.with_ions(2)).z_positions
    assert np.allclose(z2, [-(2 ** (-2 / 3)), 2 ** (-2 / 3)], atol=1e-12, rtol=0)
    z3 = solve_equilibrium(c.with_ions(3)).z_positions
    assert np.allclose(z3, [-(1.25 ** (1 / 3)), 0.0, 1.25 ** (1 / 3)], atol=1e-12, rtol=0)
    one = solve_equilibrium(c.with_ions(1))
    assert one.z_positions.tolist() == [0.0] and one.iterations == 0


def test_n2_axial_hessian_eigenvalues():
    chain = solve_equilibrium(reference_config().with_ions(2))
    h = hessian(chain.positions3d(), (10.0, 10.0, 1.0))
    assert np.allclose(np.linalg.eigvalsh(h[4:, 4:]), [1.0, 3.0], atol=1e-12)


@pytest.mark.parametrize("n", [2, 5, 11, 24])
def test_chain_invariants(n):
    chain = solve_equilibrium(reference_config().with_ions(n))
    z = chain.z_positions
    assert np.all(np.diff(z) > 0)
    assert np.allclose(z, -z[::-1], atol=1e-9)
    assert abs(z.sum()) < 1e-9
    assert chain.residual_force_norm < 1e-12
    assert np.max(np.abs(gradient(chain.positions3d(), (10.0, 10.0, 1.0)))) < 1e-11


@pytest.mark.parametrize("n", range(2, 25))
def test_spacing_smallest_in_centre(n):
    gaps = np.diff(solve_equilibrium(reference_config().with_ions(n)).z_positions)
    half = gaps[: (len(gaps) + 1) // 2]
    assert np.all(np.diff(half) < 1e-12)  # shrinking from edge to centre


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_solution_independent_of_guess(n, seed):
    rng = np.random.default_rng(seed)
    guess = np.sort(rng.uniform(-3 * n, 3 * n, n))
    if np.min(np.diff(guess)) < 1e-3:
        return
    ref = solve_equilibrium(reference_config().with_ions(n)).z_positions
    got = solve_equilibrium(reference_config().with_ions(n), initial_guess=guess).z_positions
    assert np.allclose(got, ref, atol=1e-9)


def test_default_guess_extent():
    g = default_guess(24)
    assert g[-1] == pytest.approx(0.48 * 24**0.56) and g[0] == -g[-1]


def test_iteration_cap_reports_diagnostics():
    with pytest.raises(ConvergenceError) as info:
        solve_equilibrium(reference_config().with_ions(10), max_iter=1)
    assert info.value.positions is not None and info.value.iterations == 1
