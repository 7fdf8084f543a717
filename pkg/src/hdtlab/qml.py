"""Per-step training of HEA step unitaries for HDT.

Each step's unitary is trained against an interpolated loss on the data
state it produces from the previous step's sampled ensemble: early steps
keep the output close to a fixed state, late steps push it towards maximal
mixedness through the superfidelity with I/d_A.  The output state is
``rho_t = sum_b V_b rho_bar V_b^dagger`` with ``rho_bar`` the mean state of
the sampled ensemble from step t-1 and ``V_b`` the ancilla-outcome blocks of
the step isometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import purity
from .metrics import frame_potential_mc_multi
from .protocols import BLOCK, STREAM_PARAMS, STREAM_TRAJECTORY, _sample_outcomes, hea_unitary
from .rng import RngStream

CHECKPOINT_SCHEMA = 1
PURE_TOL = 1e-12


@dataclass(frozen=True)
class TrainSchedule:
    total_steps: int
    q: Optional[Callable[[int], float]] = None

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        vals = [self(t) for t in range(self.total_steps + 1)]
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError("schedule values must lie in [0, 1]")
        if any(b < a - 1e-15 for a, b in zip(vals, vals[1:])):
            raise ValueError("schedule must be non-decreasing")

    def __call__(self, t: int) -> float:
        if self.q is None:
            return t / self.total_steps
        return float(self.q(t))


@dataclass(frozen=True)
class OptimizerSettings:
    learning_rate: float = 0.05
    max_iters: int = 500
    fd_step: float = 1e-3
    tol: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    min_learning_rate: float = 1e-7


def superfidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    r, s = np.asarray(rho), np.asarray(sigma)
    if r.shape != s.shape:
        raise ValueError("superfidelity needs equal dimensions")
    overlap = float(np.real(np.vdot(r.conj().T, s)))
    a = _mixedness(r)
    b = _mixedness(s)
    return overlap + math.sqrt(a * b)


def _mixedness(rho: np.ndarray) -> float:
    # rounding leaves ~1e-16 on pure states, which the square root would amplify to 1e-8
    x = 1.0 - purity(rho)
    return x if x > PURE_TOL else 0.0


def loss(rho_t: np.ndarray, t: int, schedule: TrainSchedule, psi0: np.ndarray, d_A: int) -> float:
    """(1-q)(1 - <psi0|rho|psi0>) + q (1 - F_sup(rho, I/d_A))."""
    q = schedule(t)
    fid = float(np.real(np.vdot(psi0, rho_t @ psi0)))
    mixed = 1.0 / d_A + math.sqrt((d_A - 1) * _mixedness(rho_t) / d_A)
    return (1.0 - q) * (1.0 - fid) + q * (1.0 - mixed)


def channel_output(params: np.ndarray, rho_bar: np.ndarray, n_data: int, n_ancilla: int, layers: int) -> np.ndarray:
    d_A = 2**n_data
    d_B = 2**n_ancilla
    v = hea_unitary(n_data + n_ancilla, layers, params)[:, :d_A].reshape(d_B, d_A, d_A)
    return np.einsum("bij,jk,blk->il", v, rho_bar, v.conj())


@dataclass
class StepResult:
    params: np.ndarray
    losses: list
    iterations: int
    accepted: int


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def train_step(rho_bar: np.ndarray, n_data: int, n_ancilla: int, layers: int, schedule: TrainSchedule, t: int,
               init_params: np.ndarray, settings: OptimizerSettings = OptimizerSettings(),
               psi0: Optional[np.ndarray] = None) -> StepResult:
    """Adam on central finite-difference gradients with monotone acceptance.

    A proposed update is kept only if the loss does not increase; otherwise
    it is discarded and the learning rate halved.  Stops after ``max_iters``
    iterations, when an accepted step changes the loss by less than ``tol``,
    or when the learning rate underflows.
    """
    d_A = 2**n_data
    if psi0 is None:
        psi0 = np.zeros(d_A, dtype=complex)
        psi0[0] = 1.0

    def f(p):
        val = loss(channel_output(p, rho_bar, n_data, n_ancilla, layers), t, schedule, psi0, d_A)
        if not math.isfinite(val):
            raise FloatingPointError(f"non-finite loss at step {t}")
        return val

    x = np.array(init_params, dtype=float).reshape(layers, n_data + n_ancilla, 2)
    cur = f(x)
    losses = [cur]
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    lr = settings.learning_rate
    accepted = 0
    it = 0
    if cur < settings.tol:
        return StepResult(x, losses, 0, 0)
    for it in range(1, settings.max_iters + 1):
        g = fd_gradient(f, x, settings.fd_step)
        m = settings.beta1 * m + (1 - settings.beta1) * g
        v = settings.beta2 * v + (1 - settings.beta2) * g * g
        mh = m / (1 - settings.beta1**it)
        vh = v / (1 - settings.beta2**it)
        trial = x - lr * mh / (np.sqrt(vh) + settings.eps)
        new = f(trial)
        if new <= cur:
            x = trial
            accepted += 1
            delta = cur - new
            cur = new
            losses.append(cur)
            if delta < settings.tol:
                break
        else:
            lr *= 0.5
            if lr < settings.min_learning_rate:
                break
    return StepResult(x, losses, it, accepted)


@dataclass
class TrainReport:
    n_data: int
    n_ancilla: int
    layers: int
    steps: int
    seed: int
    final_losses: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    params: list = field(default_factory=list)
    fp: dict = field(default_factory=dict)  # K -> (value, stderr)
    loss_histories: list = field(default_factory=list)

    def to_json(self) -> str:
        rec = {
            "schema_version": CHECKPOINT_SCHEMA,
            "n_data": self.n_data,
            "n_ancilla": self.n_ancilla,
            "layers": self.layers,
            "steps": self.steps,
            "seed": self.seed,
            "final_losses": [float(x) for x in self.final_losses],
            "iterations": [int(x) for x in self.iterations],
            "params": [np.asarray(p).reshape(-1).tolist() for p in self.params],
            "frame_potentials": {str(k): list(v) for k, v in self.fp.items()},
        }
        return json.dumps(rec, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TrainReport":
        rec = json.loads(text)
        if rec.get("schema_version") != CHECKPOINT_SCHEMA:
            raise ValueError(f"unsupported checkpoint schema {rec.get('schema_version')!r}")
        n = rec["n_data"] + rec["n_ancilla"]
        params = [np.array(p, dtype=float).reshape(rec["layers"], n, 2) for p in rec["params"]]
        fp = {int(k): tuple(v) for k, v in rec.get("frame_potentials", {}).items()}
        return cls(rec["n_data"], rec["n_ancilla"], rec["layers"], rec["steps"], rec["seed"],
                   rec["final_losses"], rec["iterations"], params, fp)


def propagate(states: np.ndarray, isometry: np.ndarray, d_B: int, gen_uniform: np.ndarray) -> np.ndarray:
    """One measure-and-reset step for a batch of sampled trajectories."""
    nb, d_A = states.shape
    branch = (states @ isometry.T).reshape(nb, d_B, d_A)
    pb = np.einsum("nba,nba->nb", branch.conj(), branch).real
    z = _sample_outcomes(pb, gen_uniform)
    sel = branch[np.arange(nb), z]
    return sel / np.sqrt(pb[np.arange(nb), z])[:, None]


def sample_ensemble(param_list, n_data: int, n_ancilla: int, layers: int, shots: int, seed: int) -> np.ndarray:
    """Final-step states of ``shots`` trajectories through the given circuits."""
    d_A, d_B = 2**n_data, 2**n_ancilla
    vs = [hea_unitary(n_data + n_ancilla, layers, p)[:, :d_A] for p in param_list]
    out = np.empty((shots, d_A), dtype=complex)
    root = RngStream(seed, STREAM_TRAJECTORY, (1,))
    for b0 in range(0, shots, BLOCK):
        nb = min(BLOCK, shots - b0)
        u = root.substream(b0 // BLOCK).generator().random((len(vs), nb))
        psi = np.zeros((nb, d_A), dtype=complex)
        psi[:, 0] = 1.0
        for t, v in enumerate(vs):
            psi = propagate(psi, v, d_B, u[t])
        out[b0 : b0 + nb] = psi
    return out


def train_hdt(T: int, n_data: int, n_ancilla: int, schedule: Optional[TrainSchedule] = None, seed: int = 0,
              layers: Optional[int] = None, shots: int = 4096, eval_shots: int = 50000, Ks=(1, 4),
              settings: OptimizerSettings = OptimizerSettings(), log: Optional[Callable[[str], None]] = None,
              warm_start: bool = True) -> TrainReport:
    """Train T step circuits in sequence and evaluate the final ensemble.

    Step 1 starts from uniform random angles; with ``warm_start`` every later
    step starts from the previous step's trained angles, otherwise from
    fresh random angles.

    Training uses ``shots`` trajectories to estimate each step's input mean
    state; the trained circuits are then replayed with ``eval_shots`` fresh
    trajectories to estimate the frame potentials ``Ks``.
    """
    schedule = schedule or TrainSchedule(T)
    layers = layers or 2 * (n_data + n_ancilla)
    n = n_data + n_ancilla
    d_A, d_B = 2**n_data, 2**n_ancilla
    report = TrainReport(n_data, n_ancilla, layers, T, seed)
    states = np.zeros((shots, d_A), dtype=complex)
    states[:, 0] = 1.0
    train_root = RngStream(seed, STREAM_TRAJECTORY, (0,))
    for t in range(1, T + 1):
        rho_bar = states.T @ states.conj() / shots
        if warm_start and report.params:
            init = report.params[-1]
        else:
            init = RngStream(seed, STREAM_PARAMS, (t,)).generator().uniform(0, 2 * np.pi, (layers, n, 2))
        res = train_step(rho_bar, n_data, n_ancilla, layers, schedule, t, init, settings)
        report.params.append(res.params)
        report.final_losses.append(res.losses[-1])
        report.iterations.append(res.iterations)
        report.loss_histories.append(res.losses)
        v = hea_unitary(n, layers, res.params)[:, :d_A]
        new = np.empty_like(states)
        step_root = train_root.substream(t)
        for b0 in range(0, shots, BLOCK):
            nb = min(BLOCK, shots - b0)
            u = step_root.substream(b0 // BLOCK).generator().random(nb)
            new[b0 : b0 + nb] = propagate(states[b0 : b0 + nb], v, d_B, u)
        states = new
        if log:
            log(f"step {t}: loss {res.losses[-1]:.3e} after {res.iterations} iterations")
    final = sample_ensemble(report.params, n_data, n_ancilla, layers, eval_shots, seed)
    est = frame_potential_mc_multi(final, Ks)
    report.fp = {k: (e.value, e.stderr) for k, e in est.items()}
    return report
