"""Dense statevector and density-matrix primitives.

Conventions
-----------
States are 1-D complex numpy arrays of length ``2**n``; density matrices are
2-D arrays.  Qubit 0 is the least significant bit of the basis index.  A
unitary acting on ``targets`` reads ``targets[0]`` as its least significant
bit.  Measurement outcomes are integers in the same little-endian order over
the targets; :func:`format_bits` renders them most-significant-qubit first.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .rng import as_generator

NORM_TOL = 1e-9
PRUNE_PROB = 1e-15
EIG_CLIP = 1e-12


def n_qubits_of(state: np.ndarray) -> int:
    dim = np.asarray(state).shape[0]
    n = int(dim).bit_length() - 1
    if dim < 2 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two >= 2")
    return n


def check_state(state: np.ndarray, normalized: bool = True) -> np.ndarray:
    psi = np.asarray(state, dtype=complex)
    if psi.ndim != 1:
        raise ValueError("state must be a 1-D amplitude vector")
    n_qubits_of(psi)
    if normalized and abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
        raise ValueError(f"state norm {np.linalg.norm(psi):.3g} differs from 1")
    return psi


def check_density(rho: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    r = np.asarray(rho, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("density matrix must be square")
    if np.max(np.abs(r - r.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(r).real - 1.0) > tol:
        raise ValueError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(r).min() < -tol:
        raise ValueError("density matrix has a negative eigenvalue")
    return r


def check_unitary(u: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    m = np.asarray(u, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("unitary must be square")
    if np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))) > tol:
        raise ValueError("matrix is not unitary")
    return m


def format_bits(outcome: int, n_bits: int) -> str:
    """Render an outcome with the highest-index qubit first."""
    return format(int(outcome), f"0{n_bits}b") if n_bits else ""


def basis_state(n_qubits: int, index: int) -> np.ndarray:
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if not 0 <= index < 2**n_qubits:
        raise ValueError(f"basis index {index} out of range for {n_qubits} qubits")
    psi = np.zeros(2**n_qubits, dtype=complex)
    psi[index] = 1.0
    return psi


def _check_targets(targets: Sequence[int], n: int) -> list[int]:
    t = [int(q) for q in targets]
    if len(set(t)) != len(t):
        raise ValueError(f"duplicate targets {t}")
    if any(q < 0 or q >= n for q in t):
        raise ValueError(f"targets {t} out of range for {n} qubits")
    return t


def _axes(qubits: Sequence[int], n: int) -> list[int]:
    # tensor axis of qubit q under C-order reshape to (2,)*n
    return [n - 1 - q for q in qubits]


def apply_unitary(state: np.ndarray, u: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    psi = check_state(state, normalized=False)
    n = n_qubits_of(psi)
    t = _check_targets(targets, n)
    u = np.asarray(u, dtype=complex)
    k = len(t)
    if k == 0 or u.shape != (2**k, 2**k):
        raise ValueError(f"unitary shape {u.shape} does not match {k} targets")
    src = _axes(t[::-1], n)
    tens = np.moveaxis(psi.reshape((2,) * n), src, range(k)).reshape(2**k, -1)
    out = (u @ tens).reshape((2,) * n)
    return np.moveaxis(out, range(k), src).reshape(-1)


def _split(psi: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """Matrix M[target_index, complement_index] of the amplitudes."""
    n = n_qubits_of(psi)
    t = _check_targets(targets, n)
    tens = np.moveaxis(psi.reshape((2,) * n), _axes(t[::-1], n), range(len(t)))
    return tens.reshape(2 ** len(t), -1)


def measure_enumerate(state: np.ndarray, targets: Sequence[int]) -> list[tuple[int, float, np.ndarray]]:
    """All branches of a projective Z measurement on ``targets``.

    Returns ``(outcome, prob, post_state)`` with the measured qubits removed
    from ``post_state``; the remaining qubits keep their relative order.
    Branches with probability at most 1e-15 are dropped.
    """
    if len(targets) == 0:
        raise ValueError("measurement needs at least one target")
    psi = check_state(state, normalized=False)
    m = _split(psi, targets)
    probs = np.einsum("ij,ij->i", m.conj(), m).real
    out = []
    for z in range(m.shape[0]):
        if probs[z] > PRUNE_PROB:
            post = m[z] / np.sqrt(probs[z])
            if post.shape[0] == 1:
                post = post.copy()
            out.append((z, float(probs[z]), post))
    return out


def measure_sample(state: np.ndarray, targets: Sequence[int], rng) -> tuple[int, np.ndarray]:
    branches = measure_enumerate(state, targets)
    p = np.array([b[1] for b in branches])
    u = as_generator(rng).random()
    idx = int(np.searchsorted(np.cumsum(p) / p.sum(), u, side="right"))
    idx = min(idx, len(branches) - 1)
    z, _, post = branches[idx]
    return z, post


def append_reset_ancilla(state: np.ndarray, n_ancilla: int) -> np.ndarray:
    """Attach ``n_ancilla`` qubits in |0> above the existing ones."""
    psi = np.asarray(state, dtype=complex)
    if n_ancilla < 0:
        raise ValueError("n_ancilla must be >= 0")
    out = np.zeros(psi.shape[0] * 2**n_ancilla, dtype=complex)
    out[: psi.shape[0]] = psi
    return out


def partial_trace(state: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on ``keep`` (``keep[0]`` becomes qubit 0)."""
    if len(keep) == 0:
        raise ValueError("keep set must be nonempty")
    psi = check_state(state, normalized=False)
    m = _split(psi, keep)
    return m @ m.conj().T


def purity(rho: np.ndarray) -> float:
    r = np.asarray(rho)
    return float(np.real(np.vdot(r.conj().T, r)))


def entropies(rho: np.ndarray) -> tuple[float, float, float]:
    """(von Neumann, Renyi-2, purity) with base-2 logarithms."""
    r = np.asarray(rho, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or np.max(np.abs(r - r.conj().T)) > NORM_TOL:
        raise ValueError("entropies need a Hermitian square matrix")
    lam = np.linalg.eigvalsh(r)
    lam = lam[lam > EIG_CLIP]
    svn = float(-np.sum(lam * np.log2(lam))) + 0.0
    pur = purity(r)
    s2 = float(-np.log2(pur)) + 0.0
    return max(svn, 0.0), max(s2, 0.0), pur


def _haar_columns(dim: int, cols: int, rng) -> np.ndarray:
    gen = as_generator(rng)
    # column-major draw: the first c columns are a prefix of the stream
    raw = gen.standard_normal((cols, dim, 2))
    z = (raw[..., 0] + 1j * raw[..., 1]).T / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    ph = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    return q * ph[None, :]


def sample_haar_unitary(dim: int, rng) -> np.ndarray:
    """Haar unitary via Ginibre QR with the diag(R) phase fix."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return _haar_columns(dim, dim, rng)


def sample_haar_isometry(dim: int, cols: int, rng) -> np.ndarray:
    """First ``cols`` columns of the unitary ``sample_haar_unitary`` would return."""
    if not 1 <= cols <= dim:
        raise ValueError("need 1 <= cols <= dim")
    return _haar_columns(dim, cols, rng)


def sample_haar_states(dim: int, n: int, rng) -> np.ndarray:
    """``n`` Haar-random pure states as rows of an (n, dim) array."""
    gen = as_generator(rng)
    raw = gen.standard_normal((n, dim, 2))
    z = raw[..., 0] + 1j * raw[..., 1]
    return z / np.linalg.norm(z, axis=1, keepdims=True)
