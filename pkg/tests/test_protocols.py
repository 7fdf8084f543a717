import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hdtlab.core import apply_unitary, basis_state, check_unitary, measure_enumerate
from hdtlab.protocols import (
    HeaCircuit,
    ProjectedEnsemble,
    ProtocolConfig,
    ResourceCapError,
    UnitarySource,
    build_step_unitary,
    hea_unitary,
    run_dt,
    run_hdt,
    run_hdt_exact,
    run_hdt_postponed,
    run_hdt_sampled,
    run_with_reference,
    step_isometry,
)

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
I2 = np.eye(2, dtype=complex)
# control on qubit 0 (A, low bit), target qubit 1 (B)
CNOT_AB = np.eye(4)[[0, 3, 2, 1]].astype(complex)


def same_ray(a, b, tol=1e-10):
    return abs(abs(np.vdot(a, b)) - 1) < tol


# configuration and step unitaries


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(0, 1)
    with pytest.raises(ValueError):
        ProtocolConfig(1, -1)
    with pytest.raises(ValueError):
        ProtocolConfig(1, 1, steps=0)
    with pytest.raises(ValueError):
        ProtocolConfig(1, 1, mode="mc", shots=0)
    with pytest.raises(ValueError):
        UnitarySource("hea", layers=0)
    with pytest.raises(ResourceCapError):
        ProtocolConfig(8, 8).check_caps()
    with pytest.raises(ResourceCapError):
        ProtocolConfig(1, 2, steps=9).check_caps()
    ProtocolConfig(1, 2, steps=8).check_caps()


def test_hea_zero_params_fix_all_zero_state():
    for n in (1, 2, 3, 5):
        u = hea_unitary(n, 3, np.zeros(2 * n * 3))
        out = u @ basis_state(n, 0)
        np.testing.assert_allclose(out, basis_state(n, 0), atol=1e-12)
        # zero angles leave only CZ phases: diagonal with entries +-1
        np.testing.assert_allclose(np.abs(np.diag(u)), 1, atol=1e-12)


def test_hea_matches_gate_by_gate_build():
    n, layers = 3, 2
    params = np.random.default_rng(5).uniform(0, 2 * np.pi, (layers, n, 2))
    psi = basis_state(n, 0)
    cz = np.diag([1, 1, 1, -1]).astype(complex)
    for layer in range(layers):
        for q in range(n):
            c, s = np.cos(params[layer, q, 0] / 2), np.sin(params[layer, q, 0] / 2)
            psi = apply_unitary(psi, np.array([[c, -1j * s], [-1j * s, c]]), [q])
            c, s = np.cos(params[layer, q, 1] / 2), np.sin(params[layer, q, 1] / 2)
            psi = apply_unitary(psi, np.array([[c, -s], [s, c]], dtype=complex), [q])
        for bond in [(0, 1), (1, 2)]:
            psi = apply_unitary(psi, cz, list(bond))
    np.testing.assert_allclose(HeaCircuit(n, layers, params).unitary() @ basis_state(n, 0), psi, atol=1e-12)


def test_build_step_unitary_haar_deterministic_and_unitary():
    cfg = ProtocolConfig(2, 2, steps=3, source=UnitarySource("haar", seed=9))
    a = build_step_unitary(cfg, 1, realization=4)
    b = build_step_unitary(cfg, 1, realization=4)
    np.testing.assert_array_equal(a, b)
    check_unitary(a, 1e-10)
    assert not np.allclose(a, build_step_unitary(cfg, 2, realization=4))
    assert not np.allclose(a, build_step_unitary(cfg, 1, realization=5))
    with pytest.raises(ValueError):
        build_step_unitary(cfg, 3)
    with pytest.raises(ResourceCapError):
        build_step_unitary(ProtocolConfig(8, 7, cap_dense=14), 0)


def test_step_isometry_is_unitary_prefix():
    cfg = ProtocolConfig(2, 2, steps=2, source=UnitarySource("haar", seed=3))
    np.testing.assert_allclose(step_isometry(cfg, 1, 2), build_step_unitary(cfg, 1, 2)[:, :4], atol=1e-10)
    hea = ProtocolConfig(2, 1, steps=2, source=UnitarySource("hea", seed=3, layers=2))
    np.testing.assert_allclose(step_isometry(hea, 0), build_step_unitary(hea, 0)[:, :4])


# exact enumeration


def test_run_hdt_exact_identity():
    cfg = ProtocolConfig(1, 1, steps=1)
    ens = run_hdt_exact(cfg, isometries=[np.eye(4)])[0]
    assert len(ens) == 1 and ens.probs[0] == pytest.approx(1.0)
    np.testing.assert_allclose(ens.states[0], [1, 0])


def test_run_hdt_exact_h_then_cnot():
    u = CNOT_AB @ np.kron(I2, H)  # H on A first, then CNOT A -> B
    ens = run_hdt_exact(ProtocolConfig(1, 1), isometries=[u])[0]
    np.testing.assert_allclose(ens.probs, [0.5, 0.5])
    assert same_ray(ens.states[0], [1, 0]) and same_ray(ens.states[1], [0, 1])
    np.testing.assert_array_equal(ens.histories, [[0], [1]])


@given(st.integers(1, 2), st.integers(0, 2), st.integers(1, 4), st.integers(0, 2**31))
@settings(max_examples=25)
def test_exact_ensembles_are_normalized(n_a, n_b, steps, seed):
    cfg = ProtocolConfig(n_a, n_b, steps=steps, source=UnitarySource("haar", seed=seed))
    for t, ens in enumerate(run_hdt_exact(cfg), start=1):
        assert abs(ens.probs.sum() - 1) < 1e-9
        np.testing.assert_allclose(np.linalg.norm(ens.states, axis=1), 1, atol=1e-9)
        assert ens.histories.shape == (len(ens), t)
        assert len(ens) <= 2 ** (n_b * t)


def test_exact_cap_enforced():
    with pytest.raises(ResourceCapError):
        run_hdt_exact(ProtocolConfig(1, 3, steps=6))


def _postponed_oracle(vs, n_a, n_b):
    """Expanded bath on qubits n_a.., full unitaries, one final measurement."""
    T = len(vs)
    n = n_a + n_b * T
    psi = basis_state(n, 0)
    for t, v in enumerate(vs):
        targets = list(range(n_a)) + [n_a + n_b * t + j for j in range(n_b)]
        psi = apply_unitary(psi, v, targets)
    bath = list(range(n_a, n))
    return {z: (p, post) for z, p, post in measure_enumerate(psi, bath)}


def test_postponed_measurement_equivalence():
    n_a, n_b, T = 2, 1, 3
    cfg = ProtocolConfig(n_a, n_b, steps=T, source=UnitarySource("haar", seed=21))
    us = [build_step_unitary(cfg, s) for s in range(T)]
    final = run_hdt_exact(cfg, isometries=us)[-1]
    post = run_hdt_postponed(cfg, isometries=us)
    oracle = _postponed_oracle(us, n_a, n_b)
    assert len(final) == len(post) == len(oracle) == 8
    np.testing.assert_allclose(final.probs, post.probs, atol=1e-12)
    np.testing.assert_allclose(final.states, post.states, atol=1e-12)
    np.testing.assert_array_equal(final.histories, post.histories)
    for hist, p, psi in zip(final.histories, final.probs, final.states):
        z = sum(int(b) << (n_b * t) for t, b in enumerate(hist))
        p_o, psi_o = oracle[z]
        assert p == pytest.approx(p_o, abs=1e-12)
        np.testing.assert_allclose(psi, psi_o, atol=1e-12)


# Monte Carlo trajectories


def test_sampled_single_shot():
    cfg = ProtocolConfig(2, 1, steps=4, mode="mc", shots=1, source=UnitarySource("haar", seed=1))
    ens = run_hdt_sampled(cfg)
    assert len(ens) == 4 and all(len(e) == 1 for e in ens)
    for e in ens:
        assert abs(np.linalg.norm(e.states[0]) - 1) < 1e-12
        assert e.mode == "sampled" and e.probs[0] == 1.0


def test_sampled_deterministic_and_keep_steps():
    cfg = ProtocolConfig(2, 1, steps=3, mode="mc", shots=5000, seed=7, source=UnitarySource("haar", seed=2))
    a = run_hdt_sampled(cfg)
    b = run_hdt_sampled(cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.states, y.states)
        np.testing.assert_array_equal(x.histories, y.histories)
    kept = run_hdt_sampled(cfg, steps_to_keep=[3])
    assert kept[0] is None and kept[1] is None
    np.testing.assert_array_equal(kept[2].states, a[2].states)
    c = run_hdt_sampled(ProtocolConfig(2, 1, steps=3, mode="mc", shots=5000, seed=8,
                                       source=UnitarySource("haar", seed=2)))
    assert not np.array_equal(c[2].histories, a[2].histories)


def test_sampled_prefix_independent_of_shot_count():
    # fixed 4096-trajectory blocks: the first block is the same for any total
    src = UnitarySource("haar", seed=4)
    a = run_hdt_sampled(ProtocolConfig(1, 1, steps=2, mode="mc", shots=4096, seed=3, source=src))
    b = run_hdt_sampled(ProtocolConfig(1, 1, steps=2, mode="mc", shots=9000, seed=3, source=src))
    np.testing.assert_array_equal(a[1].states, b[1].states[:4096])


def test_sampled_history_frequencies_match_exact():
    src = UnitarySource("haar", seed=31)
    exact = run_hdt_exact(ProtocolConfig(2, 1, steps=2, source=src))[-1]
    n = 100000
    samp = run_hdt_sampled(ProtocolConfig(2, 1, steps=2, mode="mc", shots=n, seed=5, source=src))[-1]
    codes = samp.histories[:, 0] * 2 + samp.histories[:, 1]
    observed = np.bincount(codes, minlength=4)
    expected = np.zeros(4)
    for h, p in zip(exact.histories, exact.probs):
        expected[h[0] * 2 + h[1]] = p * n
    _, pval = stats.chisquare(observed, expected)
    assert pval > 0.001
    # branch states agree with the exact conditional states
    for h, psi in zip(exact.histories, exact.states):
        idx = np.flatnonzero((samp.histories == h).all(axis=1))[:5]
        for i in idx:
            assert same_ray(samp.states[i], psi, 1e-9)


def test_run_hdt_dispatch():
    src = UnitarySource("haar", seed=6)
    assert run_hdt(ProtocolConfig(1, 1, steps=2, source=src))[0].mode == "exact"
    assert run_hdt(ProtocolConfig(1, 1, steps=2, mode="mc", shots=10, source=src))[0].mode == "sampled"


# DT


def test_run_dt_equals_single_step_hdt():
    src = UnitarySource("haar", seed=12)
    dt = run_dt(ProtocolConfig(2, 3, steps=5, source=src), realization=2)
    hdt = run_hdt_exact(ProtocolConfig(2, 3, steps=1, source=src), realization=2)[0]
    np.testing.assert_array_equal(dt.probs, hdt.probs)
    np.testing.assert_array_equal(dt.states, hdt.states)
    assert abs(dt.probs.sum() - 1) < 1e-12


def test_run_dt_no_ancilla():
    src = UnitarySource("haar", seed=13)
    cfg = ProtocolConfig(2, 0, source=src)
    ens = run_dt(cfg)
    u = build_step_unitary(cfg, 0)
    assert len(ens) == 1 and ens.probs[0] == pytest.approx(1.0)
    np.testing.assert_allclose(ens.states[0], u[:, 0], atol=1e-12)


def test_projected_ensemble_validation():
    with pytest.raises(ValueError):
        ProjectedEnsemble(1, np.ones(2) / 2, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        ProjectedEnsemble(1, np.ones(1), np.zeros((1, 2)), mode="bogus")
    e = ProjectedEnsemble(1, np.array([0.25, 0.75]), np.eye(2, dtype=complex))
    assert [p for p, _ in e.entries] == [0.25, 0.75]


# reference-entangled runs


def _reduced_on_a(mat):
    return mat.T @ mat.conj()


def test_reference_identity_keeps_maximal_entanglement():
    cfg = ProtocolConfig(2, 1, steps=1)
    ens = run_with_reference(cfg, isometries=[np.eye(8)])[0]
    assert len(ens) == 1 and ens.probs[0] == pytest.approx(1.0)
    np.testing.assert_allclose(_reduced_on_a(ens.states[0]), np.eye(4) / 4, atol=1e-12)


def test_reference_runs_normalized_and_reduce_to_hdt():
    src = UnitarySource("haar", seed=17)
    cfg = ProtocolConfig(2, 1, steps=3, source=src)
    ref = run_with_reference(cfg)
    for ens in ref:
        assert abs(ens.probs.sum() - 1) < 1e-9
        np.testing.assert_allclose(np.linalg.norm(ens.states, axis=(1, 2)), 1, atol=1e-9)
    # projecting the reference onto |0> recovers the plain trajectory from |0>
    plain = run_hdt_exact(cfg)[-1]
    ref_last = ref[-1]
    assert len(ref_last) == len(plain)
    for mat, psi in zip(ref_last.states, plain.states):
        v = mat[0]
        assert same_ray(v / np.linalg.norm(v), psi, 1e-9)


def test_reference_sampled_mode():
    src = UnitarySource("haar", seed=18)
    cfg = ProtocolConfig(1, 1, steps=2, mode="mc", shots=300, seed=2, source=src)
    ens = run_with_reference(cfg)
    assert len(ens) == 2 and len(ens[1]) == 300
    np.testing.assert_allclose(np.linalg.norm(ens[1].states, axis=(1, 2)), 1, atol=1e-9)
    again = run_with_reference(cfg)
    np.testing.assert_array_equal(ens[1].states, again[1].states)
