import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdtlab import theory
from hdtlab.core import apply_unitary, entropies, measure_enumerate, partial_trace
from hdtlab.protocols import ProtocolConfig, UnitarySource, build_step_unitary
from hdtlab.security import (
    batch_conditional_mi,
    conditional_mi,
    dt_mi_sweep,
    mi_distribution,
    mi_sweep,
    mi_trajectories,
)

from conftest import random_state


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# conditional mutual information


def test_conditional_mi_examples():
    bell2 = np.eye(4) / 2  # (d_R, d_A) matrix of a maximally entangled N_A=2 pair
    assert conditional_mi(bell2) == pytest.approx((4, 4))
    prod = np.zeros((2, 2))
    prod[0, 1] = 1
    assert conditional_mi(prod) == pytest.approx((0, 0), abs=1e-12)
    flat = np.array([math.sqrt(0.9), 0, 0, math.sqrt(0.1)])
    mi, rb = conditional_mi(flat)
    assert mi == pytest.approx(2 * h2(0.9)) and mi == pytest.approx(0.938, abs=1e-3)
    assert rb == pytest.approx(-2 * math.log2(0.82)) and rb == pytest.approx(0.573, abs=1e-3)
    with pytest.raises(ValueError):
        conditional_mi(np.ones(8) / math.sqrt(8))


@given(st.integers(1, 3), st.integers(0, 2**31))
@settings(max_examples=30)
def test_mi_invariants_and_batch_agreement(n, seed):
    rng = np.random.default_rng(seed)
    d = 2**n
    mats = np.array([random_state(d * d, rng).reshape(d, d) for _ in range(5)])
    mi_b, rb_b = batch_conditional_mi(mats)
    for m, mi, rb in zip(mats, mi_b, rb_b):
        a, b = conditional_mi(m)
        assert mi == pytest.approx(a, abs=1e-9) and rb == pytest.approx(b, abs=1e-9)
        assert rb <= mi + 1e-9 and mi <= 2 * n + 1e-9
        # flat layout: A on the low qubits
        rho_a = partial_trace(m.reshape(-1), list(range(n)))
        assert mi == pytest.approx(2 * entropies(rho_a)[0], abs=1e-9)


# sweeps


def _brute_mi(us, n_a, n_b):
    """Expanded register R, A, B_1..B_T; one final measurement of all baths."""
    T = len(us)
    n = 2 * n_a + n_b * T
    d_a = 2**n_a
    psi = np.zeros(2**n, dtype=complex)
    for i in range(d_a):
        psi[i + (i << n_a)] = 1 / math.sqrt(d_a)  # A low, R next
    for t, u in enumerate(us):
        targets = list(range(n_a)) + [2 * n_a + n_b * t + j for j in range(n_b)]
        psi = apply_unitary(psi, u, targets)
    total = 0.0
    for _, p, post in measure_enumerate(psi, list(range(2 * n_a, n))):
        total += p * 2 * entropies(partial_trace(post, list(range(n_a))))[0]
    return total


def test_mi_sweep_matches_expanded_register_oracle():
    src = UnitarySource("haar", seed=8)
    cfg = ProtocolConfig(2, 1, steps=3, source=src)
    sweep = mi_sweep(cfg, realizations=1)
    us = [build_step_unitary(cfg, s) for s in range(3)]
    for t in range(1, 4):
        assert sweep[t].avg_mi == pytest.approx(_brute_mi(us[:t], 2, 1), abs=1e-9)


def test_mi_sweep_initial_and_identity():
    cfg = ProtocolConfig(3, 1, steps=2, source=UnitarySource("haar", seed=1), realizations=2)
    sweep = mi_sweep(cfg)
    assert sweep[0].step == 0 and sweep[0].avg_mi == 6.0 and sweep[0].avg_renyi_bound == 6.0
    assert len(sweep) == 3 and all(s.realizations == 2 for s in sweep)
    for s in sweep[1:]:
        assert s.avg_renyi_bound <= s.avg_mi + 1e-9 and 0 <= s.avg_mi <= 6 + 1e-9
    ident = mi_trajectories(ProtocolConfig(2, 1, steps=1, source=UnitarySource("hea", layers=1,
                                                                                params=np.zeros(6))))
    # zero-angle HEA is diagonal: the data stays maximally entangled with R
    mi, _ = batch_conditional_mi(ident[0].states)
    np.testing.assert_allclose(mi, 4.0, atol=1e-9)


def test_mi_exact_and_sampled_agree():
    src = UnitarySource("haar", seed=23)
    cfg = ProtocolConfig(2, 1, steps=4, source=src, seed=4)
    exact = mi_sweep(cfg, mc_threshold=4, realizations=1)
    sampled = mi_sweep(cfg, mc_threshold=0, mc_histories=20000, realizations=1)
    for e, s in zip(exact[1:], sampled[1:]):
        assert e.mode == "exact" and s.mode == "sampled" and s.n_histories == 20000
        sigma = s.spread / math.sqrt(s.n_histories)
        assert abs(e.avg_mi - s.avg_mi) < 3 * sigma + 1e-12


def test_mi_trajectories_switches_to_sampling_past_threshold():
    cfg = ProtocolConfig(2, 1, steps=5, source=UnitarySource("haar", seed=2), seed=2)
    ens = mi_trajectories(cfg, mc_threshold=3, mc_histories=500)
    assert [e.mode for e in ens] == ["exact"] * 3 + ["sampled"] * 2
    capped = mi_trajectories(ProtocolConfig(1, 3, steps=7, cap_measured=9, source=UnitarySource("haar")),
                             mc_threshold=8, mc_histories=200)
    assert [e.mode for e in capped] == ["exact"] * 3 + ["sampled"] * 4


def test_dt_renyi_bound_above_dt_mi_bound():
    res = dt_mi_sweep(3, [1, 2, 3], realizations=5, seed=11)
    for est in res:
        nb = est.step
        sigma = est.realization_std_renyi / math.sqrt(est.realizations)
        assert est.avg_renyi_bound >= theory.dt_mi_bound(3, 2**nb) - 3 * sigma - 1e-9
        assert est.avg_renyi_bound >= 6 - 2.2


def test_hdt_mi_decays():
    cfg = ProtocolConfig(2, 2, steps=10, source=UnitarySource("haar", seed=5), seed=5)
    sweep = mi_sweep(cfg, mc_threshold=8, mc_histories=4000, realizations=1)
    assert sweep[10].avg_mi < 0.5 * sweep[2].avg_mi


# distributions


def test_mi_distribution_initial_point_mass():
    dist = mi_distribution(ProtocolConfig(3, 2, steps=4), 0)
    assert dist.mass[-1] == 1 and dist.mass.sum() == 1 and dist.std == 0
    assert dist.mean == 6.0


def test_mi_distribution_mass_and_mean():
    cfg = ProtocolConfig(3, 2, steps=14, source=UnitarySource("haar", seed=3), seed=3)
    dists = [mi_distribution(cfg, t, mc_histories=4000) for t in (2, 8, 14)]
    for d in dists:
        assert d.mass.sum() == pytest.approx(1.0)
        assert np.all(d.mass >= 0)
    assert dists[0].mean > dists[1].mean > dists[2].mean
    sweep = mi_sweep(ProtocolConfig(3, 2, steps=2, source=UnitarySource("haar", seed=3), seed=3), realizations=1)
    assert dists[0].mean == pytest.approx(sweep[2].avg_mi, abs=1e-9)
