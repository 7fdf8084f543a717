"""Deep thermalization (DT) and holographic deep thermalization (HDT) processes.

Each step applies a unitary on data (low qubits) plus ancilla (high qubits),
measures the ancilla in the computational basis and resets it.  Because the
ancilla always enters in |0>, only the first ``d_A`` columns of the step
unitary matter; protocols work with that isometry ``V`` (shape ``d x d_A``).
Joint index is ``b * d_A + a`` so ``(V @ psi).reshape(d_B, d_A)[b]`` is the
unnormalized branch for outcome ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import PRUNE_PROB, sample_haar_isometry, sample_haar_unitary
from .rng import RngStream

STREAM_UNITARY = 0
STREAM_TRAJECTORY = 1
STREAM_PARAMS = 2
BLOCK = 4096


class ResourceCapError(ValueError):
    """Raised before any work when a configuration exceeds a size cap."""


@dataclass(frozen=True)
class UnitarySource:
    """Where step unitaries come from.

    ``kind="haar"`` draws a fresh Haar unitary per (realization, step) from
    ``seed``.  ``kind="hea"`` uses a layered hardware-efficient circuit with
    ``layers`` layers; ``params`` (shape ``(steps, layers, n, 2)`` or
    ``(layers, n, 2)`` shared by all steps) fixes the angles, otherwise they
    are drawn uniformly in [0, 2 pi) from ``seed``.
    """

    kind: str = "haar"
    seed: int = 0
    layers: int = 0
    params: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("haar", "hea"):
            raise ValueError(f"unknown unitary source {self.kind!r}")
        if self.kind == "hea" and self.layers < 1:
            raise ValueError("hea source needs layers >= 1")


@dataclass(frozen=True)
class ProtocolConfig:
    n_data: int
    n_ancilla: int
    steps: int = 1
    source: UnitarySource = field(default_factory=UnitarySource)
    mode: str = "exact"
    shots: int = 0
    realizations: int = 1
    seed: int = 0
    cap_measured: int = 16
    cap_dense: int = 14

    def __post_init__(self):
        if self.n_data < 1:
            raise ValueError("n_data must be >= 1")
        if self.n_ancilla < 0:
            raise ValueError("n_ancilla must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.mode not in ("exact", "mc"):
            raise ValueError(f"mode must be 'exact' or 'mc', got {self.mode!r}")
        if self.mode == "mc" and self.shots < 1:
            raise ValueError("monte carlo mode needs shots >= 1")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")

    @property
    def d_A(self) -> int:
        return 2**self.n_data

    @property
    def d_B(self) -> int:
        return 2**self.n_ancilla

    def check_caps(self, reference: bool = False) -> None:
        total = self.n_data + self.n_ancilla
        if total > self.cap_dense:
            raise ResourceCapError(f"{total} qubits exceed the dense-unitary cap {self.cap_dense}")
        if self.mode == "exact" and self.n_ancilla * self.steps > self.cap_measured:
            raise ResourceCapError(
                f"{self.n_ancilla * self.steps} measured qubits exceed the exact-mode cap {self.cap_measured}"
            )


@dataclass
class ProjectedEnsemble:
    """Weighted pure states on the data register.

    ``states`` has shape ``(n, d_A)`` (or ``(n, d_R, d_A)`` for joint states
    with a reference); ``histories`` stores outcome records, one row each.
    """

    n_data: int
    probs: np.ndarray
    states: np.ndarray
    mode: str = "exact"
    histories: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ValueError("mode must be 'exact' or 'sampled'")
        if self.probs.shape[0] != self.states.shape[0]:
            raise ValueError("probs and states length differ")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def entries(self) -> list:
        return list(zip(self.probs.tolist(), self.states))


# single-qubit gates and the hardware-efficient ansatz


def rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def cz_brickwork_phases(n: int) -> np.ndarray:
    """Diagonal of the CZ layer on bonds (0,1),(2,3),... then (1,2),(3,4),..."""
    idx = np.arange(2**n)
    bits = (idx[:, None] >> np.arange(n)[None, :]) & 1
    parity = np.zeros(2**n, dtype=np.int64)
    for start in (0, 1):
        for q in range(start, n - 1, 2):
            parity += bits[:, q] & bits[:, q + 1]
    return np.where(parity % 2, -1.0, 1.0).astype(complex)


@dataclass
class HeaCircuit:
    """Layered RX, RY, CZ-brickwork circuit; ``params[layer, qubit] = (rx, ry)``."""

    n_qubits: int
    layers: int
    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).reshape(self.layers, self.n_qubits, 2)

    def unitary(self) -> np.ndarray:
        return hea_unitary(self.n_qubits, self.layers, self.params)


def hea_unitary(n: int, layers: int, params: np.ndarray) -> np.ndarray:
    p = np.asarray(params, dtype=float).reshape(layers, n, 2)
    phases = cz_brickwork_phases(n)
    u = np.eye(2**n, dtype=complex)
    for layer in range(layers):
        rot = np.ones((1, 1), dtype=complex)
        for q in range(n - 1, -1, -1):
            rot = np.kron(rot, ry(p[layer, q, 1]) @ rx(p[layer, q, 0]))
        u = phases[:, None] * (rot @ u)
    return u


# step unitaries


def _hea_params(config: ProtocolConfig, step: int, realization: int) -> np.ndarray:
    src = config.source
    n = config.n_data + config.n_ancilla
    if src.params is not None:
        p = np.asarray(src.params, dtype=float)
        if p.ndim == 4:
            return p[step]
        return p.reshape(src.layers, n, 2)
    gen = RngStream(src.seed, STREAM_PARAMS, (realization, step)).generator()
    return gen.uniform(0.0, 2 * np.pi, size=(src.layers, n, 2))


def build_step_unitary(config: ProtocolConfig, step_index: int, realization: int = 0) -> np.ndarray:
    if not 0 <= step_index < config.steps:
        raise ValueError(f"step_index {step_index} outside [0, {config.steps})")
    config.check_caps()
    n = config.n_data + config.n_ancilla
    if config.source.kind == "haar":
        rng = RngStream(config.source.seed, STREAM_UNITARY, (realization, step_index))
        return sample_haar_unitary(2**n, rng)
    return hea_unitary(n, config.source.layers, _hea_params(config, step_index, realization))


def step_isometry(config: ProtocolConfig, step_index: int, realization: int = 0) -> np.ndarray:
    """Columns of the step unitary with the ancilla in |0>; equals U[:, :d_A]."""
    if config.source.kind == "haar":
        if not 0 <= step_index < config.steps:
            raise ValueError(f"step_index {step_index} outside [0, {config.steps})")
        config.check_caps()
        n = config.n_data + config.n_ancilla
        rng = RngStream(config.source.seed, STREAM_UNITARY, (realization, step_index))
        return sample_haar_isometry(2**n, config.d_A, rng)
    return build_step_unitary(config, step_index, realization)[:, : config.d_A]


def _isometries(config, realization, isometries):
    if isometries is not None:
        return [np.asarray(v)[:, : config.d_A] for v in isometries]
    return [step_isometry(config, s, realization) for s in range(config.steps)]


# exact enumeration


def run_hdt_exact(config: ProtocolConfig, realization: int = 0, isometries=None) -> list[ProjectedEnsemble]:
    """Projected ensembles after each step, enumerating all outcome histories.

    ``isometries`` optionally overrides the step maps (``d x d_A`` or full
    unitaries).  Histories have one column per step with the ancilla outcome.
    """
    if config.n_ancilla * config.steps > config.cap_measured:
        raise ResourceCapError(
            f"{config.n_ancilla * config.steps} measured qubits exceed the exact-mode cap {config.cap_measured}"
        )
    vs = _isometries(config, realization, isometries)
    d_A, d_B = config.d_A, config.d_B
    states = np.zeros((1, d_A), dtype=complex)
    states[0, 0] = 1.0
    probs = np.ones(1)
    hist = np.zeros((1, 0), dtype=np.int64)
    out = []
    for v in vs:
        branch = (states @ v.T).reshape(-1, d_B, d_A)
        pb = np.einsum("nba,nba->nb", branch.conj(), branch).real
        tot = pb.sum(axis=1, keepdims=True)
        new_p = (probs[:, None] * pb / tot).reshape(-1)
        keep = np.flatnonzero(new_p > PRUNE_PROB)
        flat = branch.reshape(-1, d_A)[keep]
        pk = pb.reshape(-1)[keep]
        states = flat / np.sqrt(pk)[:, None]
        hist = np.concatenate(
            [np.repeat(hist, d_B, axis=0)[keep], np.tile(np.arange(d_B), hist.shape[0])[keep, None]], axis=1
        )
        probs = new_p[keep]
        probs = probs / probs.sum()
        out.append(ProjectedEnsemble(config.n_data, probs, states, "exact", hist))
    return out


def run_hdt_postponed(config: ProtocolConfig, realization: int = 0, isometries=None) -> ProjectedEnsemble:
    """Final-step ensemble with all ancilla kept and measured once at the end.

    Each round's ancilla register ``B_t`` is a fresh set of qubits, so the
    joint state lives on ``A B_1 .. B_T`` and no reset is needed.
    """
    vs = _isometries(config, realization, isometries)
    d_A, d_B, T = config.d_A, config.d_B, config.steps
    if config.n_data + config.n_ancilla * T > 20:
        raise ResourceCapError("expanded bath too large")
    # tensor with axes (b_1 .. b_T, a); b_t entries above the current step stay 0
    psi = np.zeros((d_B,) * T + (d_A,), dtype=complex)
    psi[(0,) * T + (0,)] = 1.0
    for t, v in enumerate(vs):
        vt = v.reshape(d_B, d_A, d_A)  # [b, a_out, a_in]
        sub = psi[(slice(None),) * t + (0,)]  # b_t = 0 slice, axes (b_1..b_{t}, b_{t+1}.., a)
        new = np.tensordot(sub, vt, axes=([sub.ndim - 1], [2]))  # (..., b, a_out)
        new = np.moveaxis(new, -2, t)
        psi = new
    flat = psi.reshape(-1, d_A)
    # reorder so that histories are (z_1 .. z_T) lexicographic with z_1 slowest
    p = np.einsum("na,na->n", flat.conj(), flat).real
    keep = np.flatnonzero(p > PRUNE_PROB)
    hist = np.array(np.unravel_index(keep, (d_B,) * T)).T
    states = flat[keep] / np.sqrt(p[keep])[:, None]
    return ProjectedEnsemble(config.n_data, p[keep] / p[keep].sum(), states, "exact", hist)


def run_dt(config: ProtocolConfig, realization: int = 0, isometries=None) -> ProjectedEnsemble:
    """One round of a fixed unitary on data plus ``n_ancilla`` ancilla."""
    cfg = ProtocolConfig(
        config.n_data, config.n_ancilla, 1, config.source, config.mode, config.shots, config.realizations,
        config.seed, config.cap_measured, config.cap_dense,
    )
    if cfg.mode == "exact":
        return run_hdt_exact(cfg, realization, isometries)[0]
    return run_hdt_sampled(cfg, realization, isometries)[0]


# Monte Carlo trajectories


def _sample_outcomes(pb: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(pb, axis=1)
    cdf /= cdf[:, -1:]
    z = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(z, pb.shape[1] - 1)


def run_hdt_sampled(config: ProtocolConfig, realization: int = 0, isometries=None,
                    steps_to_keep=None) -> list[ProjectedEnsemble]:
    """Born-sampled trajectories; ensembles carry uniform weights.

    Trajectories are processed in fixed blocks of 4096, each with its own
    random substream, so results do not depend on how blocks are scheduled.
    """
    if config.mode != "mc":
        raise ValueError("run_hdt_sampled needs mode='mc'")
    config.check_caps()
    vs = _isometries(config, realization, isometries)
    d_A, d_B, T, n = config.d_A, config.d_B, config.steps, config.shots
    keep_steps = set(range(T)) if steps_to_keep is None else {s - 1 for s in steps_to_keep}
    stored = {s: np.empty((n, d_A), dtype=complex) for s in keep_steps}
    hist = np.empty((n, T), dtype=np.int64)
    root = RngStream(config.seed, STREAM_TRAJECTORY, (realization,))
    for b0 in range(0, n, BLOCK):
        nb = min(BLOCK, n - b0)
        u = root.substream(b0 // BLOCK).generator().random((T, nb))
        psi = np.zeros((nb, d_A), dtype=complex)
        psi[:, 0] = 1.0
        for t, v in enumerate(vs):
            branch = (psi @ v.T).reshape(nb, d_B, d_A)
            pb = np.einsum("nba,nba->nb", branch.conj(), branch).real
            z = _sample_outcomes(pb, u[t])
            sel = branch[np.arange(nb), z]
            psi = sel / np.sqrt(pb[np.arange(nb), z])[:, None]
            hist[b0 : b0 + nb, t] = z
            if t in stored:
                stored[t][b0 : b0 + nb] = psi
    w = np.full(n, 1.0 / n)
    return [
        ProjectedEnsemble(config.n_data, w, stored[t], "sampled", hist[:, : t + 1]) if t in stored else None
        for t in range(T)
    ]


def run_hdt(config: ProtocolConfig, realization: int = 0, isometries=None) -> list[ProjectedEnsemble]:
    if config.mode == "exact":
        return run_hdt_exact(config, realization, isometries)
    return run_hdt_sampled(config, realization, isometries)


# reference-entangled variant


def _initial_reference(d_A: int) -> np.ndarray:
    return np.eye(d_A, dtype=complex)[None] / np.sqrt(d_A)


def run_with_reference(config: ProtocolConfig, realization: int = 0, isometries=None,
                       n_histories: Optional[int] = None) -> list[ProjectedEnsemble]:
    """Ensembles of joint pure states on reference R and data A.

    The data register starts maximally entangled with an ``n_data``-qubit
    reference; unitaries act on data plus ancilla only.  Each entry's state
    is a ``(d_R, d_A)`` coefficient matrix; flattening it row-major gives the
    joint vector with data as the low qubits and reference above.  Exact
    enumeration is used when ``config.mode == 'exact'``, otherwise
    ``config.shots`` (or ``n_histories``) sampled histories.
    """
    vs = _isometries(config, realization, isometries)
    d_A, d_B = config.d_A, config.d_B
    if config.mode == "exact":
        if config.n_ancilla * config.steps > config.cap_measured:
            raise ResourceCapError("exact-mode cap exceeded")
        mats = _initial_reference(d_A)
        probs = np.ones(1)
        out = []
        for v in vs:
            branch = np.einsum("nra,ja->nrj", mats, v).reshape(mats.shape[0], d_A, d_B, d_A)
            pb = np.einsum("nrba,nrba->nb", branch.conj(), branch).real
            new_p = (probs[:, None] * pb / pb.sum(axis=1, keepdims=True)).reshape(-1)
            keep = np.flatnonzero(new_p > PRUNE_PROB)
            flat = np.moveaxis(branch, 2, 1).reshape(-1, d_A, d_A)[keep]
            mats = flat / np.sqrt(pb.reshape(-1)[keep])[:, None, None]
            probs = new_p[keep] / new_p[keep].sum()
            out.append(ProjectedEnsemble(config.n_data, probs, mats, "exact"))
        return out
    n = n_histories or config.shots
    T = len(vs)
    stored = [np.empty((n, d_A, d_A), dtype=complex) for _ in range(T)]
    root = RngStream(config.seed, STREAM_TRAJECTORY, (realization,))
    for b0 in range(0, n, BLOCK):
        nb = min(BLOCK, n - b0)
        u = root.substream(b0 // BLOCK).generator().random((T, nb))
        mats = np.repeat(_initial_reference(d_A), nb, axis=0)
        for t, v in enumerate(vs):
            branch = np.einsum("nra,ja->nrj", mats, v).reshape(nb, d_A, d_B, d_A)
            pb = np.einsum("nrba,nrba->nb", branch.conj(), branch).real
            z = _sample_outcomes(pb, u[t])
            sel = branch[np.arange(nb), :, z, :]
            mats = sel / np.sqrt(pb[np.arange(nb), z])[:, None, None]
            stored[t][b0 : b0 + nb] = mats
    w = np.full(n, 1.0 / n)
    return [ProjectedEnsemble(config.n_data, w, stored[t], "sampled") for t in range(T)]
