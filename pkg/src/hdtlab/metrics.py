"""Ensemble observables: frame potentials, moment operators, PoP statistics.

Pair sums ``sum_{i,j} w_i w_j |<psi_i|psi_j>|^{2K}`` are evaluated along the
cheaper of two exact routes.  The symmetric-feature route maps each state to
``phi(psi)`` in the symmetric subspace (dimension ``D = C(d+K-1, K)``) with
``<phi(psi), phi(chi)> = <psi|chi>^K``, so pair sums become Frobenius norms of
a ``D x D`` matrix (cost ``n D^2``).  The Gram route forms overlaps block by
block (cost ``n^2 d``) and accumulates all powers at once in a compiled
kernel.  Results agree to rounding; tests cross-check the two.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy import stats

from .core import purity
from .permutations import haar_moment_operator
from .protocols import ProjectedEnsemble
from .theory import haar_fp

MOMENT_CAP = 4096
GRAM_BLOCK = 2048
GRAM_ROWS = 256


@dataclass(frozen=True)
class FramePotentialEstimate:
    K: int
    value: float
    stderr: float
    n_samples: int
    mode: str  # "exact" or "u_statistic"


def haar_frame_potential(d_A: int, K: int) -> float:
    return haar_fp(d_A, K)


def relative_deviation(est, d_A: int, K: int | None = None) -> float:
    """F / F_Haar - 1; a bare float needs an explicit ``K``."""
    if isinstance(est, FramePotentialEstimate):
        return est.value / haar_fp(d_A, est.K) - 1.0
    if K is None:
        raise ValueError("K is required when passing a bare value")
    return float(est) / haar_fp(d_A, K) - 1.0


# symmetric feature map


def _multi_indices(d: int, K: int) -> np.ndarray:
    combos = np.array(list(itertools.combinations_with_replacement(range(d), K)), dtype=np.int64)
    return combos.reshape(-1, K)


def symmetric_features(states: np.ndarray, K: int) -> np.ndarray:
    """Rows phi_alpha = sqrt(K!/alpha!) prod psi_{i_k} over sorted multi-indices."""
    psi = np.asarray(states)
    n, d = psi.shape
    combos = _multi_indices(d, K)
    coef = np.empty(combos.shape[0])
    for r, c in enumerate(combos):
        _, counts = np.unique(c, return_counts=True)
        coef[r] = math.factorial(K) / math.prod(math.factorial(x) for x in counts)
    out = np.ones((n, combos.shape[0]), dtype=psi.dtype)
    for k in range(K):
        out *= psi[:, combos[:, k]]
    return out * np.sqrt(coef)[None, :]


def _sym_dim(d: int, K: int) -> int:
    return math.comb(d + K - 1, K)


# compiled accumulation of |G|^{2k} row sums


@numba.njit(cache=True, nogil=True)
def _accumulate_rows(g, r0, c0, rows, kmax):
    # g is the overlap tile for rows r0.. and columns c0..; only pairs with j > i count
    b, m = g.shape
    loc = np.zeros(kmax)
    for i in range(b):
        row = r0 + i
        loc[:] = 0.0
        for jj in range(max(0, row + 1 - c0), m):
            z = g[i, jj]
            a = z.real * z.real + z.imag * z.imag
            p = 1.0
            j = c0 + jj
            for k in range(kmax):
                p *= a
                loc[k] += p
                rows[j, k] += p
        for k in range(kmax):
            rows[row, k] += loc[k]


@numba.njit(cache=True, nogil=True)
def _accumulate_weighted(gr, gi, wi, wj, out, kmax, diag):
    b, m = gr.shape
    for i in range(b):
        lo = i + 1 if diag else 0
        for jj in range(lo, m):
            a = gr[i, jj] * gr[i, jj] + gi[i, jj] * gi[i, jj]
            p = 1.0
            w = wi[i] * wj[jj]
            for k in range(kmax):
                p *= a
                out[k] += w * p


def _gram_row_sums(states: np.ndarray, kmax: int, single: bool) -> np.ndarray:
    """rows[k-1, i] = sum_{j != i} |<psi_i|psi_j>|^{2k} for k = 1..kmax."""
    y = np.ascontiguousarray(states, dtype=np.complex64 if single else np.complex128)
    n = y.shape[0]
    yc = y.conj()
    rows = np.zeros((n, kmax))
    # cache-sized tiles of the upper triangle
    for r0 in range(0, n, GRAM_ROWS):
        a = yc[r0 : r0 + GRAM_ROWS]
        for c0 in range(r0, n, GRAM_BLOCK):
            g = a @ y[c0 : c0 + GRAM_BLOCK].T
            _accumulate_rows(g, r0, c0, rows, kmax)
    return rows.T


def _feature_row_sums(states: np.ndarray, K: int) -> np.ndarray:
    phi = symmetric_features(states, K)
    m = phi.T @ phi.conj()  # sum_i phi_i phi_i^dagger
    quad = np.einsum("ib,ib->i", phi.conj() @ m, phi).real
    norms = np.einsum("ia,ia->i", phi.conj(), phi).real
    return quad - norms**2


def pair_row_sums(states: np.ndarray, Ks: Sequence[int], route: str = "auto") -> dict:
    """Off-diagonal row sums of |overlap|^{2K} for each requested K."""
    psi = np.asarray(states)
    n, d = psi.shape
    Ks = sorted(set(int(k) for k in Ks))
    if route == "auto":
        feat_cost = sum(2 * n * _sym_dim(d, k) ** 2 for k in Ks)
        gram_cost = 8 * n * n * d + 4 * n * n * max(Ks)
        route = "features" if feat_cost <= gram_cost else "gram"
    if route == "features":
        return {k: _feature_row_sums(psi, k) for k in Ks}
    if route in ("gram", "gram32"):
        rows = _gram_row_sums(psi, max(Ks), single=route == "gram32")
        return {k: rows[k - 1] for k in Ks}
    raise ValueError(f"unknown route {route!r}")


# frame potentials


def frame_potential_mc_multi(samples: np.ndarray, Ks: Iterable[int], route: str = "auto") -> dict:
    """U-statistic frame potentials with delete-1 jackknife errors."""
    psi = np.asarray(samples)
    if psi.ndim != 2 or psi.shape[0] < 2:
        raise ValueError("frame_potential_mc needs at least 2 samples")
    n = psi.shape[0]
    out = {}
    for K, r in pair_row_sums(psi, list(Ks), route).items():
        total = math.fsum(r)
        value = total / (n * (n - 1))
        if n >= 3:
            loo = (total - 2.0 * r) / ((n - 1) * (n - 2))
            var = (n - 1) / n * float(np.sum((loo - loo.mean()) ** 2))
            err = math.sqrt(var)
        else:
            err = float("nan")
        out[K] = FramePotentialEstimate(K, value, err, n, "u_statistic")
    return out


def frame_potential_mc(samples, K: int, route: str = "auto") -> FramePotentialEstimate:
    if isinstance(samples, ProjectedEnsemble):
        samples = samples.states
    return frame_potential_mc_multi(samples, [K], route)[K]


def _weighted_pair_sum(states: np.ndarray, probs: np.ndarray, K: int) -> float:
    n, d = states.shape
    if 2 * n * _sym_dim(d, K) ** 2 <= 8 * n * n * d:
        phi = symmetric_features(states, K) * np.sqrt(probs)[:, None]
        m = phi.T @ phi.conj()
        return float(np.vdot(m, m).real)
    y = np.ascontiguousarray(states, dtype=np.complex128)
    w = np.asarray(probs, dtype=float)
    acc = np.zeros(K)
    diag = float(np.sum(w * w))
    for s in range(0, n, GRAM_BLOCK):
        g = y[s : s + GRAM_BLOCK].conj() @ y[s:].T
        _accumulate_weighted(np.ascontiguousarray(g.real), np.ascontiguousarray(g.imag), w[s : s + GRAM_BLOCK],
                             w[s:], acc, K, True)
    return diag + 2.0 * acc[K - 1]


def frame_potential_exact(ens: ProjectedEnsemble, K: int) -> FramePotentialEstimate:
    """Probability-weighted double sum over all ensemble members."""
    if ens.mode != "exact":
        raise ValueError("frame_potential_exact needs an exact ensemble; use frame_potential_mc")
    if K < 1:
        raise ValueError("K must be >= 1")
    value = _weighted_pair_sum(np.asarray(ens.states), np.asarray(ens.probs), K)
    return FramePotentialEstimate(K, value, 0.0, len(ens), "exact")


def frame_potential(ens: ProjectedEnsemble, K: int) -> FramePotentialEstimate:
    return frame_potential_exact(ens, K) if ens.mode == "exact" else frame_potential_mc(ens.states, K)


# moment operators


def moment_operator(ens: ProjectedEnsemble, K: int) -> np.ndarray:
    d = ens.states.shape[1]
    if d**K > MOMENT_CAP:
        raise ValueError(f"d^K = {d**K} exceeds the moment-operator cap {MOMENT_CAP}")
    acc = np.zeros((d**K, d**K), dtype=complex)
    for p, psi in zip(ens.probs, ens.states):
        v = psi
        for _ in range(K - 1):
            v = np.kron(v, psi)
        acc += p * np.outer(v, v.conj())
    return acc


def moment_distance(ens: ProjectedEnsemble, K: int, p_order: int = 2) -> float:
    """Schatten-p distance to the Haar moment, normalized by the Haar norm."""
    if p_order not in (1, 2):
        raise ValueError("p_order must be 1 or 2")
    d = ens.states.shape[1]
    rho = moment_operator(ens, K)
    haar = haar_moment_operator(d, K)
    diff = np.linalg.eigvalsh(rho - haar)
    ref = np.linalg.eigvalsh(haar)
    if p_order == 1:
        return float(np.sum(np.abs(diff)) / np.sum(np.abs(ref)))
    return float(np.sqrt(np.sum(diff**2) / np.sum(ref**2)))


# Porter-Thomas statistics


@dataclass
class PopHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    d_A: int
    weights: np.ndarray | None = None  # probability mass per bin (exact mode)


def pt_density(p, d_A: int):
    if d_A < 2:
        raise ValueError("Porter-Thomas density needs d_A >= 2")
    return (d_A - 1) * (1 - np.asarray(p, dtype=float)) ** (d_A - 2)


def pt_cdf(p, d_A: int):
    return 1 - (1 - np.asarray(p, dtype=float)) ** (d_A - 1)


def overlaps(ens_or_states, reference: np.ndarray) -> np.ndarray:
    states = ens_or_states.states if isinstance(ens_or_states, ProjectedEnsemble) else np.asarray(ens_or_states)
    return np.abs(states @ np.asarray(reference).conj()) ** 2


def pop_collect(ens: ProjectedEnsemble, reference: np.ndarray, bins: int = 50) -> PopHistogram:
    x = np.clip(overlaps(ens, reference), 0.0, 1.0)
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    weights = None
    if ens.mode == "exact":
        weights, _ = np.histogram(x, bins=edges, weights=ens.probs)
    return PopHistogram(edges, counts, ens.states.shape[1], weights)


def pt_chi2(hist: PopHistogram, min_expected: float = 5.0) -> tuple[float, float, int]:
    """Pearson chi-square of histogram counts against Porter-Thomas.

    Adjacent bins are merged from the top end until each merged bin expects at
    least ``min_expected`` counts.  Returns (statistic, p-value, dof).
    """
    n = hist.counts.sum()
    probs = np.diff(pt_cdf(hist.bin_edges, hist.d_A))
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(hist.counts[::-1], probs[::-1] * n):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp:
            obs[-1] += o_acc
            exp[-1] += e_acc
        else:
            obs.append(o_acc)
            exp.append(e_acc)
    obs, exp = np.array(obs), np.array(exp)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs) - 1
    return stat, float(stats.chi2.sf(stat, dof)) if dof > 0 else float("nan"), dof


# purity via Pauli strings


_PAULI = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
]


def purity_via_pauli(rho: np.ndarray) -> float:
    """(1/d) sum over all Pauli strings P of tr(rho P)^2."""
    r = np.asarray(rho, dtype=complex)
    d = r.shape[0]
    n = d.bit_length() - 1
    if 2**n != d:
        raise ValueError("dimension must be a power of two")
    total = 0.0
    for labels in itertools.product(range(4), repeat=n):
        p = np.ones((1, 1), dtype=complex)
        for lab in labels:
            p = np.kron(p, _PAULI[lab])
        total += np.real(np.trace(r @ p)) ** 2
    return total / d


def mean_state(ens: ProjectedEnsemble) -> np.ndarray:
    s = ens.states
    return np.einsum("n,ni,nj->ij", ens.probs, s, s.conj())


__all__ = [
    "FramePotentialEstimate", "PopHistogram", "frame_potential", "frame_potential_exact", "frame_potential_mc",
    "frame_potential_mc_multi", "haar_frame_potential", "relative_deviation", "moment_operator",
    "moment_distance", "pop_collect", "pt_density", "pt_cdf", "pt_chi2", "purity_via_pauli", "purity",
    "mean_state", "symmetric_features", "pair_row_sums",
]
