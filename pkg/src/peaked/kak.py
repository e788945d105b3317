"""Fifteen-angle KAK parameterization of two-qubit gates.

Layout of the parameter vector ``theta`` (radians, unconstrained)::

    theta[0:3]   A1  Z-Y-Z Euler angles, high qubit, applied after the core
    theta[3:6]   A2  Z-Y-Z Euler angles, low qubit, applied after the core
    theta[6:9]   B1  Z-Y-Z Euler angles, high qubit, applied before the core
    theta[9:12]  B2  Z-Y-Z Euler angles, low qubit, applied before the core
    theta[12:15] x, y, z interaction coefficients

    U = (A1 (x) A2) . exp(-i (x XX + y YY + z ZZ)) . (B1 (x) B2)

with each single-qubit frame ``Rz(a) Ry(b) Rz(c)``.  The family covers SU(4)
up to a global phase and every gate is the identity at ``theta = 0``.

All functions accept a leading batch shape: ``theta`` of shape ``(..., 15)``.
"""
from __future__ import annotations

import numpy as np

from .qsim import TwoQubitGate

NUM_PARAMS = 15

I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
XX = np.kron(X, X)
YY = np.kron(Y, Y)
ZZ = np.kron(Z, Z)

# Columns are the magic basis; XX, YY and ZZ are simultaneously diagonal in it
# and local gates SU(2)xSU(2) become real SO(4) matrices.
MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=np.complex128
) / np.sqrt(2.0)
_SIGNS = np.real(np.stack([np.diag(MAGIC.conj().T @ P @ MAGIC) for P in (XX, YY, ZZ)], axis=-1))  # (4, 3)


def _euler(angles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rz(a) Ry(b) Rz(c) and its three partial derivatives.

    Returns ``(m, dm)`` with shapes ``(..., 2, 2)`` and ``(..., 3, 2, 2)``.
    """
    a, b, c = angles[..., 0], angles[..., 1], angles[..., 2]
    cb, sb = np.cos(b / 2), np.sin(b / 2)
    ep = np.exp(-0.5j * (a + c))  # phase on the diagonal
    em = np.exp(0.5j * (a - c))  # phase on the lower-left entry
    m = np.empty(angles.shape[:-1] + (2, 2), dtype=np.complex128)
    m[..., 0, 0] = ep * cb
    m[..., 0, 1] = -em.conj() * sb
    m[..., 1, 0] = em * sb
    m[..., 1, 1] = ep.conj() * cb

    dm = np.empty(angles.shape[:-1] + (3, 2, 2), dtype=np.complex128)
    # d/da: (-i/2 Z) m
    dm[..., 0, 0, :] = -0.5j * m[..., 0, :]
    dm[..., 0, 1, :] = 0.5j * m[..., 1, :]
    # d/db
    dm[..., 1, 0, 0] = -0.5 * ep * sb
    dm[..., 1, 0, 1] = -0.5 * em.conj() * cb
    dm[..., 1, 1, 0] = 0.5 * em * cb
    dm[..., 1, 1, 1] = -0.5 * ep.conj() * sb
    # d/dc: m (-i/2 Z)
    dm[..., 2, :, 0] = -0.5j * m[..., :, 0]
    dm[..., 2, :, 1] = 0.5j * m[..., :, 1]
    return m, dm


def _kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(out.shape[:-4] + (4, 4))


def _core(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    phases = np.exp(-1j * (xyz @ _SIGNS.T))  # (..., 4)
    core = (MAGIC * phases[..., None, :]) @ MAGIC.conj().T
    return core, phases


def kak_gate_matrix(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1] != NUM_PARAMS:
        raise ValueError(f"expected {NUM_PARAMS} angles, got trailing dim {theta.shape[-1]}")
    a1, _ = _euler(theta[..., 0:3])
    a2, _ = _euler(theta[..., 3:6])
    b1, _ = _euler(theta[..., 6:9])
    b2, _ = _euler(theta[..., 9:12])
    core, _ = _core(theta[..., 12:15])
    return _kron2(a1, a2) @ core @ _kron2(b1, b2)


def kak_gate_and_derivatives(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gate matrices ``(..., 4, 4)`` and analytic derivatives ``(..., 15, 4, 4)``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1] != NUM_PARAMS:
        raise ValueError(f"expected {NUM_PARAMS} angles, got trailing dim {theta.shape[-1]}")
    a1, da1 = _euler(theta[..., 0:3])
    a2, da2 = _euler(theta[..., 3:6])
    b1, db1 = _euler(theta[..., 6:9])
    b2, db2 = _euler(theta[..., 9:12])
    core, _ = _core(theta[..., 12:15])

    left = _kron2(a1, a2)
    right = _kron2(b1, b2)
    core_right = core @ right
    left_core = left @ core
    u = left @ core_right

    d = np.empty(theta.shape[:-1] + (NUM_PARAMS, 4, 4), dtype=np.complex128)
    d[..., 0:3, :, :] = _kron2(da1, a2[..., None, :, :]) @ core_right[..., None, :, :]
    d[..., 3:6, :, :] = _kron2(a1[..., None, :, :], da2) @ core_right[..., None, :, :]
    d[..., 6:9, :, :] = left_core[..., None, :, :] @ _kron2(db1, b2[..., None, :, :])
    d[..., 9:12, :, :] = left_core[..., None, :, :] @ _kron2(b1[..., None, :, :], db2)
    # core generators commute with the core itself
    for k, gen in enumerate((XX, YY, ZZ)):
        d[..., 12 + k, :, :] = left @ (-1j * gen) @ core_right
    return u, d


def kak_gate(params) -> TwoQubitGate:
    return TwoQubitGate(kak_gate_matrix(np.asarray(params, dtype=np.float64)), "parameterized")


def kak_gate_derivatives(params) -> list[np.ndarray]:
    _, d = kak_gate_and_derivatives(np.asarray(params, dtype=np.float64))
    return [d[k] for k in range(NUM_PARAMS)]


def euler_zyz(u: np.ndarray) -> np.ndarray:
    """Angles ``(a, b, c)`` with ``Rz(a) Ry(b) Rz(c)`` equal to ``u`` up to phase."""
    v = u / np.sqrt(np.linalg.det(u))
    b = 2 * np.arctan2(abs(v[1, 0]), abs(v[0, 0]))
    tol = 1e-12
    s = -2 * np.angle(v[0, 0]) if abs(v[0, 0]) > tol else 0.0  # a + c
    t = 2 * np.angle(v[1, 0]) if abs(v[1, 0]) > tol else 0.0  # a - c
    return np.array([(s + t) / 2, b, (s - t) / 2])


def _split_local(l4: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor a 4x4 local unitary into ``a (x) b``."""
    r = l4.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(r)
    a = (u[:, 0] * np.sqrt(s[0])).reshape(2, 2)
    b = (vh[0, :] * np.sqrt(s[0])).reshape(2, 2)
    return a, b


def kak_decompose(u: np.ndarray) -> np.ndarray:
    """Return 15 angles whose :func:`kak_gate` equals ``u`` up to a global phase."""
    u = np.asarray(u, dtype=np.complex128)
    su = u / np.linalg.det(u) ** 0.25
    up = MAGIC.conj().T @ su @ MAGIC
    m2 = up.T @ up
    # m2 is complex symmetric and unitary: Re and Im are commuting real symmetric
    # matrices, so a generic real combination shares their orthogonal eigenbasis.
    rng = np.random.default_rng(1234)
    for _ in range(16):
        w = rng.uniform(0.1, 1.0)
        _, p = np.linalg.eigh(w * m2.real + (1 - w) * m2.imag)
        d = np.diag(p.T @ m2 @ p)
        if np.allclose(p.T @ m2 @ p, np.diag(d), atol=1e-10):
            break
    else:  # pragma: no cover - needs a pathological input
        raise np.linalg.LinAlgError("failed to diagonalise magic-basis square")
    if np.linalg.det(p) < 0:
        p[:, 0] = -p[:, 0]
    half = np.angle(d) / 2
    k1 = up @ p @ np.diag(np.exp(-1j * half))
    if np.linalg.det(k1).real < 0:
        half[0] += np.pi
        k1 = up @ p @ np.diag(np.exp(-1j * half))
    k1 = k1.real
    k2 = p.T
    # phases exp(i*half_k) = exp(i*phi) * exp(-i * (x,y,z) . sign_k)
    lhs = np.hstack([-_SIGNS, np.ones((4, 1))])
    x, y, z, _ = np.linalg.solve(lhs, half)

    left = MAGIC @ k1 @ MAGIC.conj().T
    right = MAGIC @ k2 @ MAGIC.conj().T
    a1, a2 = _split_local(left)
    b1, b2 = _split_local(right)
    return np.concatenate([euler_zyz(a1), euler_zyz(a2), euler_zyz(b1), euler_zyz(b2), [x, y, z]])


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    overlap = np.vdot(b.ravel(), a.ravel())
    if abs(overlap) < 1e-15:
        return False
    phase = overlap / abs(overlap)
    return np.allclose(a, phase * b, rtol=0, atol=atol)
