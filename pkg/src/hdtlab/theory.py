"""Closed-form frame-potential predictions and resource formulas."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class ResourceQuery:
    n_data: int
    K: int
    epsilon: float
    n_ancilla: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.K < 1 or self.n_data < 1:
            raise ValueError("K and n_data must be >= 1")
        if self.n_ancilla is not None and self.n_ancilla < 1:
            raise ValueError("n_ancilla must be >= 1")


def haar_fp(d: int, K: int) -> float:
    """1 / C(d+K-1, K), the Haar frame potential."""
    if d < 1 or K < 1:
        raise ValueError("need d >= 1 and K >= 1")
    return 1.0 / math.comb(d + K - 1, K)


def _haar_fp_log(d: float, K: int) -> float:
    # direct product keeps full precision at huge d where lgamma differences cancel
    if float(K).is_integer() and K <= 64:
        return math.lgamma(K + 1) - math.fsum(math.log(d + i) for i in range(int(K)))
    return -(math.lgamma(d + K) - math.lgamma(K + 1) - math.lgamma(d))


def _exact(x):
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def f1_hdt(d_A, d_B, t):
    """Typical first-order frame potential after t HDT steps.

    With integer or Fraction dimensions and integer finite ``t`` the result is
    an exact Fraction; ``t = math.inf`` returns the converged value.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    exact = _exact(d_A) and _exact(d_B) and (t == math.inf or _exact(t))
    a = Fraction(d_A) if exact else float(d_A)
    b = Fraction(d_B) if exact else float(d_B)
    fh = 1 / a
    lead = (a - 1) * (a * b - 1) / (a * a * b + 1)
    ratio = (a * a - 1) * b / (a * a * b * b - 1) if a * b > 1 else 0
    tail = a * a * (b + 1) / (a * a * b + 1) * fh
    if t == math.inf:
        val = lead + tail if ratio == 1 else tail  # no decay without an ancilla
        return val if exact else float(val)
    return lead * ratio**t + tail


def f1_hdt_transfer(d_A: float, d_B: float, t: int) -> float:
    """Same quantity from the 2x2 transfer matrix on (identity, swap) weights."""
    a, b = float(d_A), float(d_B)
    A = np.array([[b * (a * a - 1), 0.0], [a * (b * b - 1), a * a * b * b - 1]]) / (a * a * b * b - 1)
    v = np.linalg.matrix_power(A, t) @ np.array([1.0, 0.0])
    return float(v[0] + v[1])


def f1_hdt_decay_rate(d_A: float, d_B: float) -> float:
    a, b = float(d_A), float(d_B)
    return (a * a - 1) * b / (a * a * b * b - 1)


def f1_dt(d_A, d_B):
    exact = _exact(d_A) and _exact(d_B)
    a = Fraction(d_A) if exact else float(d_A)
    b = Fraction(d_B) if exact else float(d_B)
    den = a * a * b * b - 1
    if den == 0:
        return Fraction(1) if exact else 1.0
    return b * (a * a - 1) / den + a * a * (b * b - 1) / den / a


def fk_dt(d_A: float, d_B: float, K: int) -> float:
    """Replica-trick K-th frame potential of a single DT round."""
    fh = math.exp(_haar_fp_log(d_A, K))
    return (d_A + 1) / (d_A * d_B) + (d_B - 1) / d_B * fh


def finite_size_factor(d_A: float, K: int) -> float:
    """(d_A-1)!(2d_A+2K-2)! / ((d_A+K-1)!(2d_A+K-2)!) via log-Gamma."""
    lg = math.lgamma
    return math.exp(lg(d_A) + lg(2 * d_A + 2 * K - 1) - lg(d_A + K) - lg(2 * d_A + K - 1))


def fk_hdt_lower_bound(d_A: float, d_B: float, K: int, t: float, form: str = "asymptotic") -> float:
    fh = math.exp(_haar_fp_log(d_A, K))
    dyn = 0.0 if t == math.inf else float(d_B) ** (-t)
    if form == "asymptotic":
        return dyn + (1 + (2**K - 1) / d_B) * fh
    if form == "finite_size":
        return dyn + fh + (finite_size_factor(d_A, K) - 1) * fh / d_B
    raise ValueError(f"unknown form {form!r}")


def converged_deviation(d_B: float, K: int) -> float:
    """Asymptotic relative deviation (2^K - 1) / d_B."""
    return (2**K - 1) / d_B


def rescaled_fp(d_A: float, K: int, N_B: int, t: float) -> tuple[float, float]:
    """(tau, F(t)/F(inf)) with tau = t N_B, from the asymptotic bound."""
    d_B = 2.0**N_B
    f_t = fk_hdt_lower_bound(d_A, d_B, K, t, "asymptotic")
    f_inf = fk_hdt_lower_bound(d_A, d_B, K, math.inf, "asymptotic")
    return t * N_B, f_t / f_inf


def collapse_law(tau: float, d_A: float, K: int) -> float:
    """Universal rescaled curve 1 + 2^{-tau} / F_Haar."""
    return 1.0 + 2.0 ** (-tau) / math.exp(_haar_fp_log(d_A, K))


def min_ancilla_hdt(q: ResourceQuery) -> float:
    return q.K + math.log2(1 / q.epsilon) + math.log2(1 - 2.0 ** (-q.K))


def min_ancilla_dt(q: ResourceQuery, exact: bool = False) -> float:
    """Ancilla count for an eps-approximate K-design from one DT round.

    The default is the large-N_A form K N_A - log2 K! + log2(1/eps).  With
    ``exact`` the replica formula F_DT <= (1+eps) F_Haar is solved for d_B.
    """
    K, na, eps = q.K, q.n_data, q.epsilon
    if not exact:
        return K * na - math.log2(math.factorial(K)) + math.log2(1 / eps)
    d_A = 2.0**na
    fh = math.exp(_haar_fp_log(d_A, K))
    # (d_A+1)/(d_A d_B) + (1 - 1/d_B) fh <= (1+eps) fh
    d_B = ((d_A + 1) / d_A - fh) / (eps * fh)
    return math.log2(d_B)


def steps_required(q: ResourceQuery) -> tuple[float, int]:
    """(real lower bound on T, ceilinged integer) at ancilla size n_ancilla."""
    if q.n_ancilla is None:
        raise ValueError("steps_required needs n_ancilla")
    bound = min_ancilla_dt(q) / q.n_ancilla
    return bound, max(1, math.ceil(bound - 1e-12))


def qsize(q: ResourceQuery) -> float:
    if q.n_ancilla is None:
        raise ValueError("qsize needs n_ancilla")
    na, nb = q.n_data, q.n_ancilla
    return (na + nb) ** 2 / nb * min_ancilla_dt(q)


def qsize_dt(q: ResourceQuery) -> float:
    """Q-size at the single-round point N_B = min_ancilla_dt, T = 1."""
    nb = min_ancilla_dt(q)
    return (q.n_data + nb) ** 2


def critical_na(K: int, eps: float) -> float:
    L = math.log2(1 / eps)
    return 0.5 * (math.sqrt((K + L) * (K**3 + K * K * L + 4 * L)) + K * K + K * L)


def dt_mi_bound(N_A: int, d_B: float) -> float:
    """Large-d_A lower bound (bits) on the averaged Renyi-2 mutual information."""
    return 2 * (N_A - 1) - 2 * math.log2(1 - 1 / (2 * d_B))
