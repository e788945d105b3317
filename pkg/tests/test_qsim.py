import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peaked.qsim import (
    MAX_QUBITS,
    QubitIndexError,
    SizeError,
    StateVector,
    TwoQubitGate,
    apply_matrix,
    apply_two_qubit_gate,
    bitstring_to_index,
    dagger,
    haar_random_unitaries,
    haar_random_unitary,
    index_to_bitstring,
    zero_state,
)

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def basis(n, bits):
    amps = np.zeros(1 << n, dtype=complex)
    amps[bitstring_to_index(bits, n)] = 1
    return StateVector(n, amps)


def random_state(n, rng):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return StateVector(n, v / np.linalg.norm(v))


def dense_two_qubit(n, u, a, b):
    """Reference embedding via permutation of tensor axes."""
    others = [q for q in range(n) if q not in (a, b)]
    op = np.kron(u, np.eye(1 << len(others))).reshape([2] * (2 * n))
    order = [a, b] + others
    perm = np.argsort(order)
    op = op.transpose(list(perm) + [n + p for p in perm])
    return op.reshape(1 << n, 1 << n)


def test_zero_state_examples():
    assert np.array_equal(zero_state(2).amps, [1, 0, 0, 0])
    s = zero_state(3)
    assert s.norm() == 1.0 and s.amps[0] == 1
    with pytest.raises(SizeError):
        zero_state(1)
    with pytest.raises(SizeError):
        zero_state(MAX_QUBITS + 1)


def test_statevector_rejects_wrong_length():
    with pytest.raises(SizeError):
        StateVector(3, np.zeros(4))


def test_identity_gate_leaves_state():
    rng = np.random.default_rng(0)
    s = random_state(5, rng)
    out = apply_two_qubit_gate(s, TwoQubitGate(np.eye(4)), 1, 3)
    assert np.array_equal(out.amps, s.amps)


def test_cnot_truth_table():
    out = apply_two_qubit_gate(basis(2, "10"), TwoQubitGate(CNOT), 0, 1)
    assert np.allclose(out.amps, basis(2, "11").amps)
    # control is the first listed qubit even when it is the lower-order one
    out = apply_two_qubit_gate(basis(3, "001"), TwoQubitGate(CNOT), 2, 0)
    assert np.allclose(out.amps, basis(3, "101").amps)


def test_swap():
    out = apply_two_qubit_gate(basis(2, "01"), TwoQubitGate(SWAP), 0, 1)
    assert np.allclose(out.amps, basis(2, "10").amps)


def test_bad_qubit_indices():
    s = zero_state(3)
    with pytest.raises(QubitIndexError):
        apply_two_qubit_gate(s, TwoQubitGate(np.eye(4)), 1, 1)
    with pytest.raises(QubitIndexError):
        apply_two_qubit_gate(s, TwoQubitGate(np.eye(4)), 0, 3)


def test_gate_rejects_bad_shape():
    with pytest.raises(ValueError):
        TwoQubitGate(np.eye(2))


@settings(max_examples=60)
@given(n=st.integers(2, 7), data=st.data(), seed=st.integers(0, 2**32 - 1))
def test_apply_matches_dense_embedding(n, data, seed):
    a = data.draw(st.integers(0, n - 1))
    b = data.draw(st.integers(0, n - 1).filter(lambda q: q != a))
    rng = np.random.default_rng(seed)
    u = haar_random_unitaries(rng, 1)[0]
    s = random_state(n, rng)
    expected = dense_two_qubit(n, u, a, b) @ s.amps
    assert np.allclose(apply_matrix(s.amps, u, a, b, n), expected, atol=1e-12)


@settings(max_examples=40)
@given(n=st.integers(2, 8), data=st.data(), seed=st.integers(0, 2**32 - 1))
def test_gate_then_dagger_restores(n, data, seed):
    a = data.draw(st.integers(0, n - 1))
    b = data.draw(st.integers(0, n - 1).filter(lambda q: q != a))
    rng = np.random.default_rng(seed)
    g = haar_random_unitary(rng)
    s = random_state(n, rng)
    back = apply_two_qubit_gate(apply_two_qubit_gate(s, g, a, b), dagger(g), a, b)
    assert np.max(np.abs(back.amps - s.amps)) < 1e-10


def test_batched_application_matches_loop():
    rng = np.random.default_rng(3)
    n = 6
    psi = np.stack([random_state(n, rng).amps for _ in range(4)])
    us = haar_random_unitaries(rng, 4)
    for a, b in ((2, 3), (4, 1)):
        batched = apply_matrix(psi, us, a, b, n)
        for r in range(4):
            assert np.allclose(batched[r], apply_matrix(psi[r], us[r], a, b, n), atol=1e-14)


def test_norm_preservation_long_sequence():
    rng = np.random.default_rng(11)
    n = 12
    psi = zero_state(n).amps
    us = haar_random_unitaries(rng, 1000)
    for u in us:
        a, b = rng.choice(n, size=2, replace=False)
        psi = apply_matrix(psi, u, int(a), int(b), n)
    assert abs(np.linalg.norm(psi) - 1) < 1e-8


def test_dagger_properties():
    rng = np.random.default_rng(1)
    g = haar_random_unitary(rng)
    assert np.array_equal(dagger(dagger(g)).matrix, g.matrix)
    assert np.array_equal(dagger(TwoQubitGate(np.eye(4))).matrix, np.eye(4))
    assert np.allclose(g.matrix @ dagger(g).matrix, np.eye(4), atol=1e-10)
    assert dagger(g).kind == g.kind


@settings(max_examples=50)
@given(seed=st.integers(0, 2**63 - 1))
def test_haar_unitary_and_deterministic(seed):
    g = haar_random_unitary(np.random.default_rng(seed))
    assert g.is_unitary(1e-10)
    h = haar_random_unitary(np.random.default_rng(seed))
    assert np.array_equal(g.matrix, h.matrix)


def test_haar_moments():
    us = haar_random_unitaries(np.random.default_rng(2024), 100_000)
    p = np.abs(us[:, 0, 0]) ** 2
    se1 = p.std(ddof=1) / np.sqrt(p.size)
    se2 = (p ** 2).std(ddof=1) / np.sqrt(p.size)
    assert abs(p.mean() - 1 / 4) < 3 * se1
    assert abs((p ** 2).mean() - 1 / 10) < 3 * se2


def test_naive_qr_fails_moment_check():
    # without the phase fix the diagonal entries are biased; the same check must catch it
    rng = np.random.default_rng(5)
    z = (rng.standard_normal((100_000, 4, 4)) + 1j * rng.standard_normal((100_000, 4, 4))) / np.sqrt(2)
    q, _ = np.linalg.qr(z)
    p = np.abs(q[:, 0, 0]) ** 2
    se = p.std(ddof=1) / np.sqrt(p.size)
    phase_haar = np.angle(haar_random_unitaries(rng, 100_000)[:, 0, 0])
    phase_naive = np.angle(q[:, 0, 0])
    # magnitude moments agree, but the naive phase of U00 is not uniform
    assert abs(p.mean() - 1 / 4) < 5 * se
    assert abs(np.mean(np.cos(phase_haar))) < 0.01
    assert abs(np.mean(np.cos(phase_naive))) > 0.5


def test_bitstring_roundtrip():
    assert bitstring_to_index("100", 3) == 4
    assert index_to_bitstring(1, 4) == "0001"
    for i in range(16):
        assert bitstring_to_index(index_to_bitstring(i, 4), 4) == i
