"""Dense statevector simulation with two-qubit gates.

Bit ordering: qubit 0 is the most significant bit of a basis index, so the
basis state ``|q0 q1 ... q_{n-1}>`` lives at index ``sum(q_k << (n-1-k))``.
The same convention is used for every bitstring read or written by the
package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Largest supported register; 2**26 complex128 amplitudes take 1 GiB.
MAX_QUBITS = 26
MIN_QUBITS = 2


class SizeError(ValueError):
    """Qubit count outside the supported range."""


class QubitIndexError(IndexError):
    """Invalid qubit index pair for a two-qubit gate."""


@dataclass
class StateVector:
    n: int
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=np.complex128)
        if self.amps.shape != (1 << self.n,):
            raise SizeError(f"expected {1 << self.n} amplitudes for n={self.n}, got shape {self.amps.shape}")

    def probabilities(self) -> np.ndarray:
        return self.amps.real ** 2 + self.amps.imag ** 2

    def norm(self) -> float:
        return float(np.sqrt(self.probabilities().sum()))

    def copy(self) -> "StateVector":
        return StateVector(self.n, self.amps.copy())


@dataclass(frozen=True, eq=False)
class TwoQubitGate:
    """A 4x4 unitary acting on an ordered qubit pair (first qubit = high bit)."""

    matrix: np.ndarray
    kind: str = "fixed"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (4, 4):
            raise ValueError(f"two-qubit gate must be 4x4, got {m.shape}")
        if self.kind not in ("fixed", "parameterized"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def is_unitary(self, atol: float = 1e-10) -> bool:
        return np.allclose(self.matrix.conj().T @ self.matrix, np.eye(4), rtol=0, atol=atol)


def _check_n(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not MIN_QUBITS <= n <= MAX_QUBITS:
        raise SizeError(f"qubit count must be an integer in [{MIN_QUBITS}, {MAX_QUBITS}], got {n!r}")


def zero_state(n: int) -> StateVector:
    _check_n(n)
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(int(n), amps)


def _check_pair(n: int, q_a: int, q_b: int) -> None:
    if q_a == q_b:
        raise QubitIndexError(f"gate qubits must differ, got ({q_a}, {q_b})")
    for q in (q_a, q_b):
        if not 0 <= q < n:
            raise QubitIndexError(f"qubit index {q} out of range for n={n}")


def apply_matrix(psi: np.ndarray, matrix: np.ndarray, q_a: int, q_b: int, n: int) -> np.ndarray:
    """Apply ``matrix`` to qubits ``(q_a, q_b)`` of ``psi`` and return the new array.

    ``psi`` has shape ``(..., 2**n)`` and ``matrix`` shape ``(..., 4, 4)``; leading
    dimensions broadcast, which lets one call advance a batch of states, each
    with its own gate.
    """
    lead = psi.shape[:-1]
    if q_b == q_a + 1:
        v = psi.reshape(*lead, 1 << q_a, 4, 1 << (n - q_a - 2))
        out = np.asarray(matrix)[..., None, :, :] @ v
        return out.reshape(*lead, 1 << n)
    # general pair: tensor route, qubit axes follow the leading dims
    k = len(lead)
    t = psi.reshape(*lead, *([2] * n))
    t = np.moveaxis(t, (k + q_a, k + q_b), (k, k + 1))
    rest = t.shape[k + 2:]
    t = t.reshape(*lead, 4, -1)
    t = np.asarray(matrix) @ t
    t = t.reshape(*lead, 2, 2, *rest)
    t = np.moveaxis(t, (k, k + 1), (k + q_a, k + q_b))
    return np.ascontiguousarray(t).reshape(*lead, 1 << n)


def apply_two_qubit_gate(state: StateVector, gate: TwoQubitGate, q_a: int, q_b: int) -> StateVector:
    _check_pair(state.n, q_a, q_b)
    matrix = gate.matrix if isinstance(gate, TwoQubitGate) else np.asarray(gate)
    return StateVector(state.n, apply_matrix(state.amps, matrix, q_a, q_b, state.n))


def dagger(gate: TwoQubitGate) -> TwoQubitGate:
    return TwoQubitGate(gate.matrix.conj().T, gate.kind)


def haar_random_unitaries(rng: np.random.Generator, count: int, dim: int = 4) -> np.ndarray:
    """Draw ``count`` Haar-distributed ``dim x dim`` unitaries, shape ``(count, dim, dim)``.

    QR of a complex Ginibre matrix, with each column of Q rescaled by the phase
    of the matching diagonal entry of R; without that correction the result is
    unitary but not Haar distributed.
    """
    z = (rng.standard_normal((count, dim, dim)) + 1j * rng.standard_normal((count, dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


def haar_random_unitary(rng: np.random.Generator, dim: int = 4) -> TwoQubitGate:
    if dim != 4:
        raise ValueError("only two-qubit (dim=4) gates are supported")
    return TwoQubitGate(haar_random_unitaries(rng, 1, dim)[0], "fixed")


def bitstring_to_index(s: str, n: int) -> int:
    if len(s) != n or any(ch not in "01" for ch in s):
        raise ValueError(f"expected a {n}-character bitstring of 0/1, got {s!r}")
    return int(s, 2)


def index_to_bitstring(index: int, n: int) -> str:
    return format(index, f"0{n}b")
