import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from hdtlab import theory as T

dims = st.sampled_from([2, 4, 8, 16])


# first-order frame potential


def test_f1_hdt_examples():
    assert T.f1_hdt(4, 4, 1) == Fraction(8, 17)
    assert T.f1_hdt(4, 4, math.inf) == Fraction(4, 13)
    assert T.f1_hdt(4, 4, 0) == 1
    for d_A in (2, 4, 8):
        for t in (0, 1, 5, math.inf):
            assert T.f1_hdt(d_A, 1, t) == 1


def test_f1_hdt_float_inputs():
    assert T.f1_hdt(4.0, 4.0, 1) == pytest.approx(8 / 17)
    assert isinstance(T.f1_hdt(4.0, 4, 3), float)
    with pytest.raises(ValueError):
        T.f1_hdt(4, 4, -1)


@given(dims, dims)
def test_f1_hdt_t1_is_dt_exactly(d_A, d_B):
    assert T.f1_hdt(d_A, d_B, 1) == T.f1_dt(d_A, d_B)


def test_f1_dt_examples():
    assert T.f1_dt(4, 4) == Fraction(8, 17)
    assert T.f1_dt(8, 1) == 1


@given(dims, dims, st.integers(0, 32))
def test_transfer_matrix_matches_closed_form(d_A, d_B, t):
    assert T.f1_hdt_transfer(d_A, d_B, t) == pytest.approx(float(T.f1_hdt(d_A, d_B, t)), rel=1e-10)


@given(dims, dims)
def test_f1_hdt_monotone_geometric(d_A, d_B):
    vals = [float(T.f1_hdt(d_A, d_B, t)) for t in range(0, 33)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    inf = float(T.f1_hdt(d_A, d_B, math.inf))
    rate = T.f1_hdt_decay_rate(d_A, d_B)
    for t in (1, 2, 5):
        assert (vals[t + 1] - inf) == pytest.approx(rate * (vals[t] - inf), rel=1e-9, abs=1e-15)
    assert rate == pytest.approx(1 / d_B, rel=2 / d_A**2 + 1 / d_B**2 + 1e-12)


@given(dims, dims, st.integers(1, 4), st.integers(0, 32))
def test_oracles_are_total_and_finite(d_A, d_B, K, t):
    for form in ("asymptotic", "finite_size"):
        v = T.fk_hdt_lower_bound(d_A, d_B, K, t, form)
        assert math.isfinite(v) and v > 0
    assert math.isfinite(T.fk_dt(d_A, d_B, K))
    assert 0 < T.haar_fp(d_A, K) <= 1


# higher orders and the DT replica result


def test_fk_dt_examples():
    assert T.fk_dt(2, 2, 2) == pytest.approx(0.75 + 1 / 6)
    for d_A, d_B in [(2, 2), (4, 8), (16, 4)]:
        gap = T.fk_dt(d_A, d_B, 1) - float(T.f1_dt(d_A, d_B))
        assert gap == pytest.approx((d_A + d_B) / (d_A * d_B * (d_A * d_B + 1)))
    assert T.fk_dt(8, 2.0**40, 3) == pytest.approx(T.haar_fp(8, 3), rel=1e-9)


def test_lower_bound_k1_matches_f1_hdt_limit_shape():
    for d_A, d_B, t in [(2**12, 4, 3), (2**14, 2, 5)]:
        want = d_B**-t + (1 + 1 / d_B) / d_A
        assert T.fk_hdt_lower_bound(d_A, d_B, 1, t, "asymptotic") == pytest.approx(want)
        assert T.fk_hdt_lower_bound(d_A, d_B, 1, t, "finite_size") == pytest.approx(want)
        # f1_hdt converges to the same limit termwise at large d_A
        assert float(T.f1_hdt(d_A, d_B, math.inf)) == pytest.approx((1 + 1 / d_B) / d_A, rel=1e-3)


def test_finite_size_approaches_asymptotic():
    a = T.fk_hdt_lower_bound(2**20, 4, 2, 2, "asymptotic")
    b = T.fk_hdt_lower_bound(2**20, 4, 2, 2, "finite_size")
    assert abs(a / b - 1) < 0.01


def test_finite_size_factor_direct_factorials():
    for d_A, K in [(4, 2), (8, 3), (16, 1)]:
        f = math.factorial
        want = f(d_A - 1) * f(2 * d_A + 2 * K - 2) / (f(d_A + K - 1) * f(2 * d_A + K - 2))
        assert T.finite_size_factor(d_A, K) == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValueError):
        T.fk_hdt_lower_bound(4, 4, 2, 1, "bogus")


def test_converged_deviation():
    assert T.converged_deviation(4, 2) == 0.75
    d_A = 2**30
    lb = T.fk_hdt_lower_bound(d_A, 4, 2, math.inf)
    assert lb / T.haar_fp(d_A, 2) - 1 == pytest.approx(0.75, rel=1e-6)


# collapse


def test_rescaled_fp_and_collapse_law():
    assert T.collapse_law(2, 4, 1) == pytest.approx(2.0)
    assert T.rescaled_fp(4, 1, 1, 4)[0] == T.rescaled_fp(4, 1, 2, 2)[0] == 4
    tau, f = T.rescaled_fp(2**12, 1, 3, 40)
    assert tau == 120 and f == pytest.approx(1.0, abs=1e-12)
    # leading f agrees between two configs at equal tau (large d_A, up to O(1/d_B))
    d_A = 2**16
    f1 = T.rescaled_fp(d_A, 1, 6, 2)[1]
    f2 = T.rescaled_fp(d_A, 1, 4, 3)[1]
    assert f1 == pytest.approx(f2, rel=0.07)
    assert f1 == pytest.approx(T.collapse_law(12, d_A, 1), rel=0.07)


# resources


def test_resource_query_validation():
    with pytest.raises(ValueError):
        T.ResourceQuery(4, 1, 0.0)
    with pytest.raises(ValueError):
        T.ResourceQuery(4, 0, 0.1)
    T.ResourceQuery(4, 2, 1.0)


def test_min_ancilla_examples():
    assert T.min_ancilla_hdt(T.ResourceQuery(1, 1, 0.25)) == 2.0
    assert T.min_ancilla_hdt(T.ResourceQuery(1, 2, 1 / 8)) == pytest.approx(5 + math.log2(0.75))
    assert T.min_ancilla_hdt(T.ResourceQuery(1, 40, 0.1)) == pytest.approx(40 + math.log2(10), abs=1e-9)
    assert T.min_ancilla_dt(T.ResourceQuery(5, 1, 1 / 32)) == pytest.approx(10)
    assert T.min_ancilla_dt(T.ResourceQuery(4, 2, 1.0)) == pytest.approx(7)


@given(st.integers(1, 30), st.integers(1, 5), st.floats(1e-6, 1.0))
def test_min_ancilla_dt_linear_in_na(na, K, eps):
    a = T.min_ancilla_dt(T.ResourceQuery(na, K, eps))
    b = T.min_ancilla_dt(T.ResourceQuery(na + 1, K, eps))
    assert b - a == pytest.approx(K)


def test_min_ancilla_dt_exact_form_converges():
    q = T.ResourceQuery(12, 2, 0.01)
    assert T.min_ancilla_dt(q, exact=True) == pytest.approx(T.min_ancilla_dt(q), abs=0.01)


def test_steps_required_examples():
    assert T.steps_required(T.ResourceQuery(5, 1, 1 / 32, 2)) == (5.0, 5)
    nb = T.min_ancilla_dt(T.ResourceQuery(5, 1, 1 / 32))
    assert T.steps_required(T.ResourceQuery(5, 1, 1 / 32, int(nb)))[1] == 1
    a = T.steps_required(T.ResourceQuery(6, 2, 0.01, 2))[0]
    b = T.steps_required(T.ResourceQuery(6, 2, 0.01, 4))[0]
    assert b == pytest.approx(a / 2)
    with pytest.raises(ValueError):
        T.steps_required(T.ResourceQuery(6, 2, 0.01))


def test_qsize_argmin_at_na():
    for na, K, eps in [(40, 3, 1e-3), (30, 4, 1e-4), (20, 1, 0.1)]:
        nbs = np.arange(1, 4 * na)
        vals = [T.qsize(T.ResourceQuery(na, K, eps, int(nb))) for nb in nbs]
        assert nbs[int(np.argmin(vals))] == na
        L = math.log2(1 / eps)
        x = K * na - math.log2(math.factorial(K)) + L
        assert min(vals) == pytest.approx(4 * na * x)


@given(st.integers(8, 60), st.integers(1, 4), st.sampled_from([1e-1, 1e-2, 1e-3]))
def test_qsize_unimodal(na, K, eps):
    q0 = T.ResourceQuery(na, K, eps)
    top = int(T.min_ancilla_dt(q0))
    vals = np.array([T.qsize(T.ResourceQuery(na, K, eps, nb)) for nb in range(1, max(top, 2) + 1)])
    i = int(np.argmin(vals))
    assert np.all(np.diff(vals[: i + 1]) <= 1e-9) and np.all(np.diff(vals[i:]) >= -1e-9)


def test_qsize_dt_quadratic():
    for K in (1, 3):
        q = [T.qsize_dt(T.ResourceQuery(na, K, 0.01)) for na in (100, 200)]
        assert q[1] / q[0] == pytest.approx(4, rel=0.05)
        assert q[0] / 100**2 == pytest.approx((K + 1) ** 2, rel=0.2)


def _crit_root(K, eps):
    L = math.log2(1 / eps)
    f = lambda n: (K * n + L) * (n + K + L) ** 2 / (K + L) - ((K + 1) * n + L) ** 2
    return brentq(f, 2.0, 1e4)


@pytest.mark.parametrize("K,eps", [(3, 1e-3), (2, 1e-2), (6, 1e-4), (10, 1e-3)])
def test_critical_na_solves_size_balance(K, eps):
    assert T.critical_na(K, eps) == pytest.approx(_crit_root(K, eps), rel=1e-9)


def test_critical_na_regimes():
    assert T.critical_na(3, 1e-3) == pytest.approx(42.0, rel=0.01)
    assert T.critical_na(200, 0.5) / 200**2 == pytest.approx(1, rel=0.05)
    # K << L: linear in L with slope (sqrt(K^2 + 4) + K) / 2
    for K in (1, 2):
        slope = T.critical_na(K, 1e-300) / math.log2(1e300)
        assert slope == pytest.approx((math.sqrt(K * K + 4) + K) / 2, rel=0.01)


def test_dt_mi_bound():
    assert T.dt_mi_bound(3, 4) == pytest.approx(4 - 2 * math.log2(7 / 8))
    assert T.dt_mi_bound(3, 2.0**60) == pytest.approx(4)
    vals = [T.dt_mi_bound(3, 2**k) for k in range(1, 10)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
