import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionchain.equilibrium import hessian, solve_equilibrium
from ionchain.modes import check_stability, fix_sign, jacobi_eigh, mode_name, modes_from_chain, sign_changes
from ionchain.units import TrapConfig, reference_config


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_jacobi_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    a = a + a.T
    evals, evecs = jacobi_eigh(a)
    assert np.allclose(np.sort(evals), np.linalg.eigvalsh(a), atol=1e-12 * max(1, np.abs(a).max()))
    assert np.allclose(evecs.T @ evecs, np.eye(n), atol=1e-12)
    assert np.allclose(a @ evecs, evecs * evals, atol=1e-11 * max(1, np.abs(a).max()))


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh([[1.0, 2.0], [0.0, 1.0]])


def test_sign_convention():
    assert np.array_equal(fix_sign(np.array([0.1, -0.9, 0.3])), [-0.1, 0.9, -0.3])
    # tie between +-0.5: lowest index decides
    assert np.array_equal(fix_sign(np.array([-0.5, 0.5])), [0.5, -0.5])
    assert sign_changes(np.array([1.0, -1.0, 1.0])) == 2
    assert mode_name(0, 5) == "center-of-mass" and mode_name(1, 5) == "tilt"
    assert mode_name(4, 5) == "zigzag" and mode_name(2, 5) == ""


def test_n2_frequencies(small):
    m = small[2].modes
    assert np.allclose(m.branch_frequencies("x"), [np.sqrt(99.0), 10.0], atol=1e-12)
    assert np.allclose(m.branch_frequencies("z"), [1.0, np.sqrt(3.0)], atol=1e-12)


def test_single_ion():
    cfg = TrapConfig(170.936, 1, 5e5, 10.0, 7.0, 1)
    m = modes_from_chain(solve_equilibrium(cfg), cfg)
    assert np.allclose(m.frequencies, [10.0, 7.0, 1.0])


@pytest.mark.parametrize("n", [2, 3, 4, 24])
def test_mode_invariants(n, small, yb24):
    pipe = yb24 if n == 24 else small[n]
    m = pipe.modes
    v = m.vectors
    assert np.allclose(v.T @ v, np.eye(3 * n), atol=1e-10)
    # block purity
    for k, branch in enumerate("xyz"):
        s = m.branch_slice(branch)
        outside = np.delete(v[:, s], np.arange(s.start, s.stop), axis=0)
        assert np.all(outside == 0.0)
    # reconstruction of the Hessian
    h = hessian(pipe.chain.positions3d(), m.betas)
    assert np.allclose((v * m.squared) @ v.T, h, atol=1e-9)
    # centre-of-mass modes
    for branch, beta in zip("xyz", m.betas):
        a = m.cm_index(branch)
        assert m.frequencies[a] == pytest.approx(beta, abs=1e-10)
        assert np.allclose(m.vectors[m.branch_slice(branch), a], 1 / np.sqrt(n), atol=1e-10)
        w = m.branch_frequencies(branch)
        others = np.delete(w, a - m.branch_slice(branch).start)
        if branch == "z":
            assert np.all(others > 1.0)
        else:
            assert np.all(others < beta)
    # x and y are identical for beta_x = beta_y
    assert np.allclose(m.branch_frequencies("x"), m.branch_frequencies("y"), atol=1e-10)
    assert np.allclose(m.branch_vectors("x"), m.branch_vectors("y"), atol=1e-10)
    # ascending within each branch
    for branch in "xyz":
        assert np.all(np.diff(m.branch_frequencies(branch)) >= 0)


def test_names_at_24(yb24):
    m = yb24.modes
    names = m.mode_names[m.branch_slice("x")]
    assert names[0] == "zigzag" and names[-1] == "center-of-mass" and names[-2] == "tilt"
    z = m.mode_names[m.branch_slice("z")]
    assert z[0] == "center-of-mass" and z[1] == "tilt"


def test_zigzag_boundary():
    cfg = reference_config()
    assert check_stability(cfg).stable
    rep = check_stability(cfg.with_ions(25))
    assert not rep.stable
    assert rep.min_squared_frequency < 0
    assert rep.soft_branch == "x" and rep.soft_mode_name == "zigzag"
    m = modes_from_chain(solve_equilibrium(cfg.with_ions(25)), cfg.with_ions(25))
    assert set(m.unstable_branches) == {"x", "y"}
    assert np.isnan(m.frequencies[0])


@pytest.mark.parametrize("beta", [1.5, 3.0, 10.0])
def test_two_ions_always_stable(beta):
    cfg = TrapConfig(170.936, 1, 5e5, beta, beta, 2)
    assert check_stability(cfg).stable


def test_determinism(small):
    cfg = small[4].config
    a = modes_from_chain(solve_equilibrium(cfg), cfg)
    b = modes_from_chain(solve_equilibrium(cfg), cfg)
    assert np.array_equal(a.vectors, b.vectors) and np.array_equal(a.squared, b.squared)
