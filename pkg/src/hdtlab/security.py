"""Mutual information between a reference and the data output under DT and HDT."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import entropies
from .protocols import ProjectedEnsemble, ProtocolConfig, ResourceCapError, run_with_reference, step_isometry

log = logging.getLogger(__name__)

EIG_CLIP = 1e-12


@dataclass
class MIEstimate:
    """Averaged conditional mutual information at one step.

    ``spread`` is the probability-weighted standard deviation over histories
    (mean over realizations); ``realization_std`` is the spread of the
    per-realization averages.
    """

    protocol: str
    step: int
    avg_mi: float
    avg_renyi_bound: float
    spread: float
    n_histories: int
    mode: str
    realization_std: float = 0.0
    realization_std_renyi: float = 0.0
    realizations: int = 1
    per_realization: list = field(default_factory=list)


def conditional_mi(joint: np.ndarray) -> tuple[float, float]:
    """(2 S(rho_A), 2 S_2(rho_A)) in bits for a pure state on R x A.

    ``joint`` is either a ``(d_R, d_A)`` coefficient matrix or a flat vector
    with A on the low qubits and an equally sized R above it.
    """
    m = np.asarray(joint, dtype=complex)
    if m.ndim == 1:
        d = int(round(math.sqrt(m.shape[0])))
        if d * d != m.shape[0]:
            raise ValueError("flat joint state needs an even R/A split")
        m = m.reshape(d, d)
    rho_a = m.T @ m.conj()
    svn, s2, _ = entropies(rho_a)
    return 2.0 * svn, 2.0 * s2


def batch_conditional_mi(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized conditional_mi over a stack of (d_R, d_A) matrices."""
    sv = np.linalg.svd(mats, compute_uv=False)
    lam = sv**2
    lam = lam / lam.sum(axis=1, keepdims=True)
    safe = np.where(lam > EIG_CLIP, lam, 1.0)
    svn = -np.sum(np.where(lam > EIG_CLIP, lam * np.log2(safe), 0.0), axis=1)
    pur = np.sum(lam**2, axis=1)
    return 2.0 * np.maximum(svn, 0.0), 2.0 * np.maximum(-np.log2(pur), 0.0)


def _weighted_stats(values: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    mean = float(np.dot(w, values))
    var = float(np.dot(w, (values - mean) ** 2))
    return mean, math.sqrt(max(var, 0.0))


def ensemble_mi(ens: ProjectedEnsemble) -> tuple[float, float, float, int]:
    """(avg mi, avg Renyi bound, weighted std of mi, n_histories)."""
    mi, rb = batch_conditional_mi(ens.states)
    w = ens.probs / ens.probs.sum()
    m, s = _weighted_stats(mi, w)
    r, _ = _weighted_stats(rb, w)
    return m, r, s, len(ens)


def mi_trajectories(config: ProtocolConfig, realization: int = 0, mc_threshold: int = 8,
                    mc_histories: int = 20000) -> list[ProjectedEnsemble]:
    """Per-step joint ensembles, exact up to ``mc_threshold`` steps.

    Steps beyond the threshold (or beyond the exact-mode cap) are sampled
    with ``mc_histories`` trajectories.
    """
    n_exact = min(config.steps, mc_threshold)
    if config.n_ancilla * n_exact > config.cap_measured:
        n_exact = config.cap_measured // max(config.n_ancilla, 1)
        log.info("exact enumeration capped at %d steps; sampling the rest", n_exact)
    out = []
    if n_exact > 0:
        cfg = replace(config, steps=n_exact, mode="exact")
        full = replace(config, mode="mc", shots=max(config.shots, 1))
        vs = [step_isometry(full, s, realization) for s in range(n_exact)]
        out.extend(run_with_reference(cfg, realization, vs))
    if config.steps > n_exact:
        cfg = replace(config, mode="mc", shots=mc_histories)
        sampled = run_with_reference(cfg, realization)
        out.extend(sampled[n_exact:])
    return out


def mi_sweep(config: ProtocolConfig, protocol: str = "hdt", mc_threshold: int = 8,
             mc_histories: int = 20000, realizations: int | None = None) -> list[MIEstimate]:
    """Averaged MI per step (index 0 is the initial state), over realizations."""
    R = realizations or config.realizations
    rows = []
    for r in range(R):
        ens_list = mi_trajectories(config, r, mc_threshold, mc_histories)
        rows.append([ensemble_mi(e) + (e.mode,) for e in ens_list])
    n_a = config.n_data
    result = [
        MIEstimate(protocol, 0, 2.0 * n_a, 2.0 * n_a, 0.0, 1, "exact", 0.0, 0.0, R, [2.0 * n_a] * R)
    ]
    for t in range(config.steps):
        mis = np.array([row[t][0] for row in rows])
        rbs = np.array([row[t][1] for row in rows])
        spreads = np.array([row[t][2] for row in rows])
        result.append(
            MIEstimate(
                protocol, t + 1, float(mis.mean()), float(rbs.mean()), float(spreads.mean()), rows[0][t][3],
                rows[0][t][4], float(mis.std(ddof=1)) if R > 1 else 0.0,
                float(rbs.std(ddof=1)) if R > 1 else 0.0, R, mis.tolist(),
            )
        )
    return result


def dt_mi_sweep(n_data: int, n_ancillas, realizations: int, seed: int, mc_threshold_qubits: int = 16,
                mc_histories: int = 20000) -> list[MIEstimate]:
    """Single-round DT at each ancilla size."""
    from .protocols import UnitarySource

    out = []
    for nb in n_ancillas:
        mode = "exact" if nb <= mc_threshold_qubits else "mc"
        cfg = ProtocolConfig(n_data, nb, 1, UnitarySource("haar", seed + nb), mode=mode,
                             shots=mc_histories if mode == "mc" else 0, realizations=realizations, seed=seed + nb)
        est = mi_sweep(cfg, "dt", mc_threshold=1 if mode == "exact" else 0, mc_histories=mc_histories)[1]
        est.step = nb
        out.append(est)
    return out


@dataclass
class MIDistribution:
    bin_edges: np.ndarray
    mass: np.ndarray
    mean: float
    std: float

    @property
    def concentration(self) -> float:
        return self.std / self.mean if self.mean > 0 else float("inf")


def mi_distribution(config: ProtocolConfig, step: int, realization: int = 0, bins: int = 40,
                    mc_threshold: int = 8, mc_histories: int = 20000) -> MIDistribution:
    """Probability-weighted histogram of I(R:A_out|z) at ``step``."""
    n_a = config.n_data
    edges = np.linspace(0.0, 2.0 * n_a, bins + 1)
    if step == 0:
        mass = np.zeros(bins)
        mass[-1] = 1.0
        return MIDistribution(edges, mass, 2.0 * n_a, 0.0)
    cfg = replace(config, steps=step)
    ens = mi_trajectories(cfg, realization, mc_threshold, mc_histories)[step - 1]
    mi, _ = batch_conditional_mi(ens.states)
    w = ens.probs / ens.probs.sum()
    mass, _ = np.histogram(np.clip(mi, 0, 2.0 * n_a), bins=edges, weights=w)
    m, s = _weighted_stats(mi, w)
    return MIDistribution(edges, mass, m, s)


__all__ = ["MIEstimate", "conditional_mi", "batch_conditional_mi", "mi_sweep", "dt_mi_sweep",
           "mi_distribution", "MIDistribution", "ensemble_mi", "ResourceCapError"]
