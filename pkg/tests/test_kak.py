import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from peaked import kak
from peaked.kak import XX, YY, ZZ, equal_up_to_phase, kak_decompose, kak_gate, kak_gate_derivatives
from peaked.oracle import schmidt_two_qubit
from peaked.qsim import haar_random_unitaries

I2 = np.eye(2)
Xp = np.array([[0, 1], [1, 0]], dtype=complex)
Yp = np.array([[0, -1j], [1j, 0]])
Zp = np.diag([1.0 + 0j, -1.0])


def rz(t):
    return expm(-0.5j * t * Zp)


def ry(t):
    return expm(-0.5j * t * Yp)


def reference_gate(theta):
    """Independent construction from matrix exponentials."""
    e = [rz(theta[k]) @ ry(theta[k + 1]) @ rz(theta[k + 2]) for k in (0, 3, 6, 9)]
    x, y, z = theta[12:15]
    core = expm(-1j * (x * XX + y * YY + z * ZZ))
    return np.kron(e[0], e[1]) @ core @ np.kron(e[2], e[3])


angles = st.lists(st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False), min_size=15, max_size=15)


def test_zero_params_identity():
    assert np.allclose(kak_gate(np.zeros(15)).matrix, np.eye(4), atol=1e-15)


def test_maximally_entangling_core():
    theta = np.zeros(15)
    theta[12] = np.pi / 4
    u = kak_gate(theta).matrix
    assert np.allclose(u, expm(-1j * np.pi / 4 * XX), atol=1e-12)
    sf = schmidt_two_qubit(u[:, 0])
    assert sf.alpha == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    assert sf.beta == pytest.approx(1 / np.sqrt(2), abs=1e-12)


@settings(max_examples=100)
@given(angles)
def test_matches_exponential_form_and_unitary(theta):
    theta = np.array(theta)
    g = kak_gate(theta)
    assert g.kind == "parameterized"
    assert g.is_unitary(1e-10)
    assert np.allclose(g.matrix, reference_gate(theta), atol=1e-10)


@settings(max_examples=40)
@given(angles)
def test_derivatives_match_finite_differences(theta):
    theta = np.array(theta)
    ders = kak_gate_derivatives(theta)
    h = 1e-5
    for k in range(15):
        e = np.zeros(15)
        e[k] = h
        fd = (kak.kak_gate_matrix(theta + e) - kak.kak_gate_matrix(theta - e)) / (2 * h)
        assert np.max(np.abs(ders[k] - fd)) < 1e-7


def test_derivatives_at_zero():
    ders = kak_gate_derivatives(np.zeros(15))
    assert np.allclose(ders[12], -1j * XX, atol=1e-15)
    assert np.allclose(ders[13], -1j * YY, atol=1e-15)
    assert np.allclose(ders[14], -1j * ZZ, atol=1e-15)
    # a pure Z rotation only touches the diagonal
    for k in (0, 2, 3, 5, 6, 8, 9, 11):
        off = ders[k] - np.diag(np.diag(ders[k]))
        assert np.all(off == 0)


def test_batched_matrices():
    rng = np.random.default_rng(0)
    theta = rng.normal(size=(3, 5, 15))
    u, d = kak.kak_gate_and_derivatives(theta)
    assert u.shape == (3, 5, 4, 4) and d.shape == (3, 5, 15, 4, 4)
    assert np.allclose(u[1, 2], kak.kak_gate_matrix(theta[1, 2]), atol=1e-14)


def test_wrong_angle_count():
    with pytest.raises(ValueError):
        kak.kak_gate_matrix(np.zeros(14))


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


@pytest.mark.parametrize(
    "u",
    [np.eye(4), XX, np.kron(Xp, I2), CNOT, np.diag([1, 1, 1, -1]).astype(complex), SWAP, expm(-0.3j * ZZ)],
    ids=["identity", "XX", "X-local", "CNOT", "CZ", "SWAP", "ZZ-rotation"],
)
def test_decompose_special_gates(u):
    assert equal_up_to_phase(kak_gate(kak_decompose(u)).matrix, u, atol=1e-9)


@settings(max_examples=100)
@given(seed=st.integers(0, 2**63 - 1))
def test_decompose_haar_gates(seed):
    u = haar_random_unitaries(np.random.default_rng(seed), 1)[0]
    assert equal_up_to_phase(kak_gate(kak_decompose(u)).matrix, u, atol=1e-9)


def test_equal_up_to_phase():
    rng = np.random.default_rng(2)
    u = haar_random_unitaries(rng, 2)
    assert equal_up_to_phase(np.exp(0.7j) * u[0], u[0])
    assert not equal_up_to_phase(u[0], u[1])
