"""Symmetric-group and Weingarten calculus on replicated Hilbert spaces.

Permutations are tuples in one-line notation, ``p[i]`` being the image of
``i``.  Composition is ``compose(a, b)[i] = a[b[i]]`` (apply ``b`` first).
The operator of ``p`` on ``n`` replicas of a ``d``-level space acts as
``p^ |i_0 .. i_{n-1}> = |i_{p(0)} .. i_{p(n-1)}>`` with replica 0 the most
significant tensor factor.  This map reverses products:
``a^ b^ = compose(b, a)^``.

Replica blocks for the pseudo frame potential with ``m = n + K``::

    D1 = [0, n)   D2 = [n, m)   D3 = [m, m+K)   D4 = [m+K, 2m)
    B1 = D1 + D2  B2 = D3 + D4
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

Perm = tuple

MAX_GROUP_N = 8
MAX_WG_N = 6
MAX_ENUM_TERMS = 10**8


class CombinatorialCapError(ValueError):
    """Raised when an enumeration would exceed its configured size cap."""


def identity(n: int) -> Perm:
    return tuple(range(n))


def compose(a: Sequence[int], b: Sequence[int]) -> Perm:
    return tuple(a[i] for i in b)


def inverse(p: Sequence[int]) -> Perm:
    inv = [0] * len(p)
    for i, j in enumerate(p):
        inv[j] = i
    return tuple(inv)


def is_permutation(p: Sequence[int]) -> bool:
    return sorted(p) == list(range(len(p)))


def cycle_count(p: Sequence[int]) -> int:
    seen = [False] * len(p)
    c = 0
    for i in range(len(p)):
        if not seen[i]:
            c += 1
            j = i
            while not seen[j]:
                seen[j] = True
                j = p[j]
    return c


def direct_sum(p1: Sequence[int], p2: Sequence[int]) -> Perm:
    """``p1`` on the first block and ``p2`` on the next one."""
    k = len(p1)
    return tuple(p1) + tuple(k + j for j in p2)


@lru_cache(maxsize=None)
def enumerate_group(n: int) -> tuple[Perm, ...]:
    """All of S_n in lexicographic order."""
    if n < 0 or n > MAX_GROUP_N:
        raise CombinatorialCapError(f"enumerate_group supports 0 <= n <= {MAX_GROUP_N}, got {n}")
    return tuple(itertools.permutations(range(n)))


@lru_cache(maxsize=None)
def _index(n: int) -> dict:
    return {p: i for i, p in enumerate(enumerate_group(n))}


@lru_cache(maxsize=None)
def _cycle_matrix(n: int) -> np.ndarray:
    """C[i, j] = cycles(perm_i^{-1} perm_j)."""
    perms = enumerate_group(n)
    idx = _index(n)
    cyc = np.array([cycle_count(p) for p in perms])
    inv = np.array([idx[inverse(p)] for p in perms])
    arr = np.array(perms, dtype=np.int64).reshape(len(perms), n)
    out = np.empty((len(perms), len(perms)), dtype=np.int64)
    for i in range(len(perms)):
        qi = arr[inv[i]]
        # compose(inv_i, p_j) = inv_i[p_j]
        prods = qi[arr]
        codes = [idx[tuple(r)] for r in prods.tolist()]
        out[i] = cyc[codes]
    return out


def gram_matrix(n: int, d: float) -> np.ndarray:
    """G[s, p] = d ** cycles(s^{-1} p) over S_n in lexicographic order."""
    return np.power(float(d), _cycle_matrix(n).astype(float))


@dataclass(frozen=True)
class WeingartenTable:
    """Exact Weingarten function on S_n at dimension d.

    ``matrix[i, j] = Wg(perm_i^{-1} perm_j)`` is the inverse Gram matrix.
    """

    n: int
    d: float
    perms: tuple
    matrix: np.ndarray

    def __call__(self, p: Sequence[int]) -> float:
        return float(self.matrix[0, _index(self.n)[tuple(p)]])

    @property
    def wg(self) -> dict:
        return {p: float(self.matrix[0, i]) for i, p in enumerate(self.perms)}


def weingarten_exact(n: int, d: float) -> WeingartenTable:
    if n < 1 or n > MAX_WG_N:
        raise CombinatorialCapError(f"weingarten_exact supports 1 <= n <= {MAX_WG_N}, got {n}")
    if d <= n - 1:
        raise np.linalg.LinAlgError(f"Gram matrix is singular for d={d} <= n-1={n - 1}")
    g = gram_matrix(n, d)
    w = np.linalg.solve(g, np.eye(g.shape[0]))
    w = 0.5 * (w + w.T)
    return WeingartenTable(n, float(d), enumerate_group(n), w)


def permutation_operator(p: Sequence[int], d: int) -> np.ndarray:
    """Dense d^n x d^n matrix of the replica permutation ``p``."""
    n = len(p)
    if not is_permutation(p):
        raise ValueError(f"{p} is not a permutation")
    dim = d**n
    if dim > 2**16:
        raise CombinatorialCapError(f"permutation operator dimension {dim} too large")
    digits = np.unravel_index(np.arange(dim), (d,) * n) if n else ()
    if n == 0:
        return np.ones((1, 1))
    rows = np.ravel_multi_index([digits[p[k]] for k in range(n)], (d,) * n)
    out = np.zeros((dim, dim))
    out[rows, np.arange(dim)] = 1.0
    return out


def haar_moment_operator(d: int, K: int) -> np.ndarray:
    """Normalized symmetric-subspace projector on K replicas of dimension d."""
    if d**K > 4096:
        raise CombinatorialCapError(f"d^K = {d**K} exceeds the moment-operator cap 4096")
    acc = np.zeros((d**K, d**K))
    for p in enumerate_group(K):
        acc += permutation_operator(p, d)
    norm = math.prod(d + i for i in range(K))
    return acc / norm


# boundary operator and the replica block structure


def blocks(n: int, K: int) -> tuple[range, range, range, range]:
    m = n + K
    return range(0, n), range(n, m), range(m, m + K), range(m + K, 2 * m)


def tau_k(n: int, K: int) -> Perm:
    """Swap of replica blocks D2 and D3."""
    m = n + K
    p = list(range(2 * m))
    for i in range(K):
        p[n + i], p[m + i] = m + i, n + i
    return tuple(p)


def in_gprime(sigma: Sequence[int], n: int, K: int) -> bool:
    """Whether sigma maximizes the inner product with the boundary operator."""
    d1, d2, d3, _ = blocks(n, K)
    src = set(d1) | set(d3)
    dst = set(d1) | set(d2)
    return {sigma[k] for k in src} == dst


@lru_cache(maxsize=None)
def gprime_set(n: int, K: int) -> frozenset:
    """{ (p1 + p2) o tau_K } built constructively over S_m x S_m."""
    m = n + K
    t = tau_k(n, K)
    return frozenset(compose(direct_sum(a, b), t) for a in enumerate_group(m) for b in enumerate_group(m))


def q_inner_product(sigma: Sequence[int], n: int, K: int, d_B: int) -> float:
    """tr(sigma^dagger Q) for the boundary operator Q on 2(n+K) replicas."""
    m = n + K
    if len(sigma) != 2 * m or not is_permutation(sigma):
        raise ValueError(f"sigma must be a permutation of {2 * m} replicas")
    return float(d_B + d_B * (d_B - 1) * in_gprime(sigma, n, K))


def boundary_operator(n: int, K: int, d_B: int) -> np.ndarray:
    """Dense Q = sum_{z1,z2} |z1^n z2^K z1^K z2^n><z1^n z1^K z2^K z2^n|."""
    m = n + K
    dim = d_B ** (2 * m)
    if dim > 2**14:
        raise CombinatorialCapError("boundary operator too large")
    q = np.zeros((dim, dim))
    for z1 in range(d_B):
        for z2 in range(d_B):
            ket = [z1] * n + [z2] * K + [z1] * K + [z2] * n
            bra = [z1] * m + [z2] * m
            q[np.ravel_multi_index(ket, (d_B,) * (2 * m)), np.ravel_multi_index(bra, (d_B,) * (2 * m))] += 1
    return q


def decompose_permutation(sigma: Sequence[int], m: int) -> tuple[Perm, Perm, Perm, int]:
    """Split sigma = omega o (pi1 + pi2) with omega disjoint cross-block swaps.

    Returns ``(omega, pi1, pi2, r)`` where ``pi1`` acts on the first ``m``
    indices, ``pi2`` on the last ``m`` (re-indexed from 0), and ``r`` is the
    number of swaps in ``omega``.
    """
    s = tuple(sigma)
    if len(s) != 2 * m or not is_permutation(s):
        raise ValueError(f"sigma must be a permutation of {2 * m} indices")
    x1 = [k for k in range(m) if s[k] >= m]
    x2 = [k for k in range(m, 2 * m) if s[k] < m]
    c2 = sorted(s[k] for k in x1)
    c1 = sorted(s[k] for k in x2)
    f = dict(zip(c1, c2))
    finv = dict(zip(c2, c1))
    pi = list(s)
    for k in x1:
        pi[k] = finv[s[k]]
    for k in x2:
        pi[k] = f[s[k]]
    omega = list(range(2 * m))
    for a, b in f.items():
        omega[a], omega[b] = b, a
    pi1 = tuple(pi[:m])
    pi2 = tuple(j - m for j in pi[m:])
    return tuple(omega), pi1, pi2, len(c1)


def domain_wall_class(sigma: Sequence[int], m: int) -> int:
    """Number r of cross-block swaps, i.e. sigma lies in G_r."""
    return sum(1 for k in range(m) if sigma[k] >= m)


# chain statistical model of the ensemble-averaged pseudo frame potential


def _check_model_args(n: int, K: int, t: int, d_A: int, d_B: int) -> int:
    if n < 0 or K < 1 or t < 0 or d_A < 1 or d_B < 1:
        raise ValueError("need n >= 0, K >= 1, t >= 0, d_A >= 1, d_B >= 1")
    return n + K


@lru_cache(maxsize=64)
def _model_pieces(n: int, K: int, d_A: int, d_B: int):
    m = n + K
    perms = enumerate_group(2 * m)
    ga = gram_matrix(2 * m, d_A)
    q = np.array([q_inner_product(p, n, K, d_B) for p in perms])
    return perms, ga, q


def stat_model_sum_exact(n: int, K: int, t: int, d_A: int, d_B: int) -> float:
    """Haar average of the pseudo frame potential with exact Weingarten weights.

    The chain sum over 2t permutations is contracted one link at a time,
    which is algebraically identical to the nested sum (see
    :func:`stat_model_sum_enumerated`).
    """
    m = _check_model_args(n, K, t, d_A, d_B)
    if 2 * m > 6:
        raise CombinatorialCapError(f"2m = {2 * m} exceeds the exact-sum cap 6")
    perms, ga, q = _model_pieces(n, K, d_A, d_B)
    wg = weingarten_exact(2 * m, d_A * d_B).matrix
    c = np.zeros(len(perms))
    c[0] = 1.0
    step = wg @ (q[:, None] * ga)
    for _ in range(t):
        c = step @ c
    return float(math.fsum(c))


def stat_model_sum_enumerated(n: int, K: int, t: int, d_A: int, d_B: int, max_terms: int = 2 * 10**6) -> float:
    """Literal nested sum over (sigma_i, pi_i) chains; slow reference."""
    m = _check_model_args(n, K, t, d_A, d_B)
    perms, ga, q = _model_pieces(n, K, d_A, d_B)
    g = len(perms)
    if g ** (2 * t) > max_terms:
        raise CombinatorialCapError(f"{g}^{2 * t} terms exceed cap {max_terms}")
    wg = weingarten_exact(2 * m, d_A * d_B).matrix
    terms = []
    for chain in itertools.product(range(g), repeat=2 * t):
        sig, pis = chain[0::2], chain[1::2]
        w = ga[pis[0], 0]
        for i in range(t):
            w *= wg[sig[i], pis[i]] * q[pis[i]]
            if i + 1 < t:
                w *= ga[pis[i + 1], sig[i]]
        terms.append(w)
    return float(math.fsum(terms)) if t else 1.0


def stat_model_sum_approx(n: int, K: int, t: int, d_A: int, d_B: int) -> float:
    """Chain sum with Wg replaced by its leading order delta / d^{2m}."""
    m = _check_model_args(n, K, t, d_A, d_B)
    if 2 * m > 6:
        raise CombinatorialCapError(f"2m = {2 * m} exceeds the approximate-sum cap 6")
    perms, ga, q = _model_pieces(n, K, d_A, d_B)
    scale = float(d_A * d_B) ** (-2 * m)
    c = np.zeros(len(perms))
    c[0] = 1.0
    for _ in range(t):
        c = scale * q * (ga @ c)
    return float(math.fsum(c))


def _restricted_chain(ga: np.ndarray, first: np.ndarray, rest: np.ndarray, t: int) -> float:
    """sum over sigma_1 in first, sigma_2..t in rest of prod G_A links."""
    c = ga[first, 0].copy()
    idx = first
    for _ in range(1, t):
        c = ga[np.ix_(rest, idx)] @ c
        idx = rest
    return float(math.fsum(c))


def lower_bound_1dw_terms(n: int, K: int, t: int, d_A: int, d_B: int) -> tuple[float, float, float]:
    """The three positive subset sums behind the one-domain-wall bound.

    Chains entirely in G_0, entirely in G'_K, and with only sigma_1 outside
    G'_K (restricted to G_r, r <= K), each with the approximate weights.  At
    t = 1 the third set drops G_0 so the three sets stay disjoint.
    """
    m = _check_model_args(n, K, t, d_A, d_B)
    if t < 1:
        raise ValueError("t must be >= 1")
    if 2 * m > 6:
        raise CombinatorialCapError(f"2m = {2 * m} exceeds cap 6")
    perms, ga, _ = _model_pieces(n, K, d_A, d_B)
    r = np.array([domain_wall_class(p, m) for p in perms])
    gp = np.array([in_gprime(p, n, K) for p in perms])
    g0 = np.flatnonzero(r == 0)
    gk = np.flatnonzero(gp)
    lo = 1 if t == 1 else 0
    wall = np.flatnonzero((r <= K) & (r >= lo) & ~gp)
    scale = float(d_A * d_B) ** (-2 * m * t)
    s0 = scale * d_B**t * _restricted_chain(ga, g0, g0, t)
    s1 = scale * d_B ** (2 * t) * _restricted_chain(ga, gk, gk, t)
    s2 = scale * d_B ** (2 * t - 1) * _restricted_chain(ga, wall, gk, t)
    return s0, s1, s2


def lower_bound_1dw_sum(n: int, K: int, t: int, d_A: int, d_B: int) -> float:
    return float(math.fsum(lower_bound_1dw_terms(n, K, t, d_A, d_B)))


def lower_bound_1dw(n: float, K: int, t: int, d_A: float, d_B: float) -> float:
    """Closed-form one-domain-wall lower bound on the pseudo frame potential.

    Built from the dynamical, converged and single-wall terms with their
    leading-order evaluation in 1/d_A.  ``n`` may be non-integer, in which
    case Gamma functions continue the factorial ratios; ``n = 1 - K`` gives
    the bound on the true K-th frame potential.
    """
    m = n + K
    if t < 0 or K < 1 or d_A < 1 or d_B < 1 or m <= 0:
        raise ValueError("invalid arguments")
    lg = math.lgamma
    log_gamma = lg(m + d_A) - lg(d_A)
    log_fh = -(lg(d_A + K) - lg(K + 1) - lg(d_A))
    x = math.exp(lg(d_A) + lg(2 * d_A + 2 * K - 1) - lg(d_A + K) - lg(2 * d_A + K - 1))
    log_pref = 2 * t * log_gamma - 2 * m * t * math.log(d_A * d_B)
    lb = math.log(d_B)
    terms = [
        t * lb,
        2 * t * lb + log_fh,
    ]
    out = sum(math.exp(log_pref + s) for s in terms)
    out += math.exp(log_pref + (2 * t - 1) * lb + log_fh) * (x - 1.0)
    return out


def twirl(M: np.ndarray, d: int, n: int) -> np.ndarray:
    """Exact Haar twirl E[U^{(x)n} M U^dagger{(x)n}] via Weingarten calculus."""
    tab = weingarten_exact(n, d)
    ops = [permutation_operator(p, d) for p in tab.perms]
    tr = np.array([np.trace(o.T @ M) for o in ops])
    coeff = tab.matrix @ tr
    return sum(c * o for c, o in zip(coeff, ops))


def iter_group_classes(m: int) -> Iterable[tuple[int, int]]:
    """(r, |G_r|) from the decomposition count m!^2 C(m, r)^2."""
    for r in range(m + 1):
        yield r, math.factorial(m) ** 2 * math.comb(m, r) ** 2
