import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from soapool.errors import (ConfigError, DegenerateTraceError, DimensionMismatchError,
                            EigenConvergenceError, NotPSDError)
from soapool.symmat import (NsConfig, is_psd, ns_sqrt, relative_frobenius, sqrt_eig, sym_eig,
                            tri_len, unflatten_upper, upper_tri_vec)

from conftest import spd_with_condition, wishart_spd


def test_upper_tri_vec_is_row_major():
    assert upper_tri_vec(np.array([[1.0, 2.0], [2.0, 3.0]])).tolist() == [1.0, 2.0, 3.0]
    m = np.arange(9.0).reshape(3, 3)
    assert upper_tri_vec(m).tolist() == [0, 1, 2, 4, 5, 8]


@pytest.mark.parametrize("dim,length", [(1, 1), (16, 136), (128, 8256), (256, 32896)])
def test_tri_len(dim, length):
    assert tri_len(dim) == length
    assert upper_tri_vec(np.eye(dim)).size == length


@given(hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e6, 1e6)))
def test_unflatten_needs_triangular_length_and_round_trips(v):
    n = v.size
    dim = int((np.sqrt(8 * n + 1) - 1) / 2)
    if tri_len(dim) != n:
        with pytest.raises(DimensionMismatchError):
            unflatten_upper(v)
        return
    m = unflatten_upper(v)
    assert np.array_equal(m, m.T)
    assert np.array_equal(upper_tri_vec(m), v)


def test_sym_eig_identity_and_diagonal():
    w, _ = sym_eig(np.eye(3))
    assert w.tolist() == [1.0, 1.0, 1.0]
    w, u = sym_eig(np.diag([1.0, 4.0]))
    assert w.tolist() == [4.0, 1.0]
    assert np.allclose(np.abs(u), [[0, 1], [1, 0]])


@pytest.mark.parametrize("seed", range(5))
def test_sym_eig_reconstructs(seed):
    m = wishart_spd(np.random.default_rng(seed), 8)
    w, u = sym_eig(m)
    assert np.all(np.diff(w) <= 0)
    assert np.max(np.abs(u @ np.diag(w) @ u.T - m)) < 1e-10
    assert np.max(np.abs(u.T @ u - np.eye(8))) < 1e-12


def test_sym_eig_reports_non_convergence():
    a = np.random.default_rng(0).standard_normal((12, 12))
    with pytest.raises(EigenConvergenceError):
        sym_eig(a + a.T, max_sweeps=1)


def test_sym_eig_rejects_non_square():
    with pytest.raises(DimensionMismatchError):
        sym_eig(np.zeros((2, 3)))


def test_sqrt_eig_examples():
    assert np.allclose(sqrt_eig(np.eye(4)), np.eye(4), atol=1e-15)
    assert np.allclose(sqrt_eig(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_sqrt_eig_squares_back(seed):
    m = wishart_spd(np.random.default_rng(seed), 6)
    r = sqrt_eig(m)
    assert np.max(np.abs(r @ r - m)) < 1e-8
    assert np.array_equal(r, r.T) and is_psd(r)


def test_sqrt_eig_rejects_indefinite():
    with pytest.raises(NotPSDError):
        sqrt_eig(np.diag([1.0, -1e-3]))
    # tiny negative round-off is clamped
    assert sqrt_eig(np.diag([1.0, -1e-12]))[1, 1] == 0.0


def test_ns_zero_matrix_stays_finite():
    r = ns_sqrt(np.zeros((2, 2)), NsConfig(5))
    assert np.all(np.isfinite(r)) and np.max(np.abs(r)) < 1e-5


def test_ns_degenerate_trace():
    with pytest.raises(DegenerateTraceError):
        ns_sqrt(-np.eye(2))


@pytest.mark.parametrize("iters", [0, 101])
def test_ns_config_bounds(iters):
    with pytest.raises(ConfigError):
        NsConfig(iters)


@pytest.mark.xfail(strict=True, reason="trace normalization maps I to I/3; five steps leave ~1e-8 error")
def test_ns_identity3_five_steps_to_1e10():
    assert np.max(np.abs(ns_sqrt(np.eye(3), NsConfig(5)) - np.eye(3))) <= 1e-10


def test_ns_identity3_converges_with_one_more_step():
    assert np.max(np.abs(ns_sqrt(np.eye(3), NsConfig(5)) - np.eye(3))) < 1e-7
    assert np.max(np.abs(ns_sqrt(np.eye(3), NsConfig(6)) - np.eye(3))) <= 1e-10


@pytest.mark.xfail(strict=True, reason="at d=32 the normalized spectrum starts near 1/32; seven steps are too few")
def test_ns_spd32_seven_steps_within_1e4():
    rng = np.random.default_rng(7)
    m = spd_with_condition(rng, 32, 1e3)
    assert relative_frobenius(ns_sqrt(m, NsConfig(7)), sqrt_eig(m)) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_ns_matches_eig_oracle_given_enough_steps(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 65))
    m = spd_with_condition(rng, dim, float(rng.uniform(1, 1e3)))
    assert relative_frobenius(ns_sqrt(m, NsConfig(20)), sqrt_eig(m)) <= 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_ns_error_non_increasing_in_steps(seed):
    rng = np.random.default_rng(1000 + seed)
    m = spd_with_condition(rng, int(rng.integers(2, 33)), float(rng.uniform(1, 1e3)))
    ref = sqrt_eig(m)
    errs = [relative_frobenius(ns_sqrt(m, NsConfig(t)), ref) for t in range(1, 11)]
    assert all(b <= a for a, b in zip(errs, errs[1:])), errs


def test_ns_output_symmetric():
    m = wishart_spd(np.random.default_rng(3), 9)
    r = ns_sqrt(m)
    assert np.array_equal(r, r.T)


def test_relative_frobenius_zero_reference():
    assert relative_frobenius(np.ones(2), np.zeros(2)) == pytest.approx(np.sqrt(2))
