import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peaked.circuits import (
    ParameterError,
    apply_peaking,
    PeakWeight,
    UnsupportedSizeError,
    attach_peaking_layers,
    brickwall_layout,
    circuit_from_dict,
    circuit_to_dict,
    inverse_params,
    layer_pairs,
    load_circuit,
    max_peak,
    peak_weight,
    peaking_start_parity,
    run,
    sample_random_circuit,
    save_circuit,
    with_params,
)
from peaked.qsim import StateVector, apply_matrix, haar_random_unitaries, zero_state

H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


def test_brickwall_examples():
    assert [list(layer) for layer in brickwall_layout(4, 2).layers] == [[(0, 1), (2, 3)], [(1, 2)]]
    assert [list(layer) for layer in brickwall_layout(6, 1).layers] == [[(0, 1), (2, 3), (4, 5)]]
    with pytest.raises(UnsupportedSizeError):
        brickwall_layout(5, 1)


def test_layout_counts():
    lay = brickwall_layout(8, 5)
    assert lay.depth == 5
    assert lay.num_gates == 4 + 3 + 4 + 3 + 4
    assert list(lay.pairs()[:5]) == [(0, 1), (2, 3), (4, 5), (6, 7), (1, 2)]
    assert layer_pairs(2, 1) == ()


def test_sampling_is_deterministic():
    a = sample_random_circuit(6, 4, 77)
    b = sample_random_circuit(6, 4, 77)
    c = sample_random_circuit(6, 4, 78)
    assert all(np.array_equal(x.matrix, y.matrix) for x, y in zip(a.fixed_gates, b.fixed_gates))
    assert not np.array_equal(a.fixed, c.fixed)
    assert a.seed == 77
    assert np.array_equal(run(a).amps, run(b).amps)


def test_sampling_accepts_generator():
    inst = sample_random_circuit(4, 3, np.random.default_rng(0))
    assert inst.seed is None
    assert inst.fixed.shape == (5, 4, 4)
    with pytest.raises(ValueError):
        inst.fixed[0, 0, 0] = 1


def test_single_layer_mean_peak_n4():
    peaks = np.array([run(sample_random_circuit(4, 1, s)).probabilities().max() for s in range(2000)])
    se = peaks.std(ddof=1) / np.sqrt(peaks.size)
    assert abs(peaks.mean() - (25 / 48) ** 2) < 3 * se


def test_empty_circuit_is_zero_state():
    inst = attach_peaking_layers(sample_random_circuit(4, 0, 0), 0)
    assert np.array_equal(run(inst).amps, zero_state(4).amps)


def test_zero_angles_leave_random_output():
    inst = sample_random_circuit(6, 5, 3)
    peaked = attach_peaking_layers(inst, 3)
    assert np.allclose(run(peaked).amps, inst.random_state, atol=1e-14)


def test_tau_p_zero_returns_instance():
    inst = sample_random_circuit(6, 5, 3)
    assert attach_peaking_layers(inst, 0) is inst


def test_attach_errors():
    inst = attach_peaking_layers(sample_random_circuit(4, 2, 0), 1)
    with pytest.raises(ParameterError):
        attach_peaking_layers(inst, 1)
    with pytest.raises(ParameterError):
        attach_peaking_layers(sample_random_circuit(4, 2, 0), 1, theta_init=np.zeros(3))
    with pytest.raises(ParameterError):
        run(inst, np.zeros(4))


def test_peaking_parity():
    assert peaking_start_parity(3, "continue") == 1
    assert peaking_start_parity(3, "mirror") == 0
    inst = attach_peaking_layers(sample_random_circuit(6, 3, 0), 2)
    assert inst.layout_p.layers[0] == layer_pairs(6, 1)
    with pytest.raises(ValueError):
        peaking_start_parity(3, "sideways")


@pytest.mark.parametrize("n,tau_r", [(4, 2), (6, 3), (6, 4), (8, 5)])
def test_exact_inverse_mirror(n, tau_r):
    inst = attach_peaking_layers(sample_random_circuit(n, tau_r, 10 + tau_r), tau_r, parity="mirror")
    theta = inverse_params(inst)
    assert run(inst, theta).probabilities()[0] == pytest.approx(1.0, abs=1e-8)


def test_exact_inverse_continue_needs_extra_layer():
    base = sample_random_circuit(6, 4, 5)
    with pytest.raises(ParameterError):
        inverse_params(attach_peaking_layers(base, 4))
    inst = attach_peaking_layers(base, 5)
    assert run(inst, inverse_params(inst)).probabilities()[0] == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1))
def test_max_probability_bounded(seed):
    state = run(sample_random_circuit(4, 2, seed))
    _, pw = max_peak(state)
    assert 2.0 ** -4 <= pw.value <= 1.0
    assert abs(state.norm() - 1) < 1e-12


@settings(max_examples=30)
@given(n=st.sampled_from([2, 4, 6]), seed=st.integers(0, 2**32 - 1))
def test_max_peak_at_least_uniform(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    _, pw = max_peak(StateVector(n, v / np.linalg.norm(v)))
    assert pw.value >= 2.0 ** -n


def test_layer_then_dagger_restores():
    inst = sample_random_circuit(6, 3, 8)
    psi = inst.random_state
    us = haar_random_unitaries(np.random.default_rng(1), 3)
    pairs = layer_pairs(6, 0)
    out = psi
    for u, (a, b) in zip(us, pairs):
        out = apply_matrix(out, u, a, b, 6)
    for u, (a, b) in zip(us, pairs):
        out = apply_matrix(out, u.conj().T, a, b, 6)
    assert np.max(np.abs(out - psi)) < 1e-10


def test_inserting_gate_dagger_pairs():
    inst = attach_peaking_layers(sample_random_circuit(6, 3, 21), 2)
    theta = np.random.default_rng(4).normal(size=inst.num_params)
    reference = run(inst, theta).amps
    extra = haar_random_unitaries(np.random.default_rng(5), 4)
    inserted = with_params(inst, theta)
    # splice U U^dagger after every random layer, then finish with the peaking layers
    psi = zero_state(6).amps
    k = 0
    for layer, u in zip(inst.layout_r.layers, extra):
        for a, b in layer:
            psi = apply_matrix(psi, inst.fixed[k], a, b, 6)
            k += 1
        psi = apply_matrix(apply_matrix(psi, u, 2, 3, 6), u.conj().T, 2, 3, 6)
    out = apply_peaking(psi, inserted, theta)
    assert np.max(np.abs(out - reference)) < 1e-9


def test_peak_weight_examples():
    assert peak_weight(zero_state(3), "000").value == 1.0
    # uniform superposition from Hadamard pairs
    n = 4
    hh = np.kron(H, H)
    psi = zero_state(n).amps
    for a in (0, 2):
        psi = apply_matrix(psi, hh, a, a + 1, n)
    s, pw = max_peak(StateVector(n, psi))
    assert pw.value == pytest.approx(2.0 ** -n, abs=1e-15)
    assert s == "0000"  # tie broken toward the smallest index


def test_peak_weight_of_schmidt_product():
    alphas = np.array([0.9, 0.6, 0.8])
    psi = np.ones(1, dtype=complex)
    for a in alphas:
        psi = np.kron(psi, np.array([a, 0, 0, np.sqrt(1 - a * a)]))
    pw = peak_weight(StateVector(6, psi), "000000")
    assert pw.value == pytest.approx(np.prod(alphas ** 2), abs=1e-15)


def test_peak_weight_validates():
    with pytest.raises(ValueError):
        PeakWeight(1.5, "00")


def test_serialization_roundtrip(tmp_path):
    inst = attach_peaking_layers(sample_random_circuit(6, 3, 99), 2)
    inst = with_params(inst, np.random.default_rng(0).normal(size=inst.num_params))
    back = circuit_from_dict(circuit_to_dict(inst))
    assert np.array_equal(back.fixed, inst.fixed)
    assert np.array_equal(back.params, inst.params)
    assert back.layout_p == inst.layout_p and back.seed == 99
    save_circuit(inst, tmp_path / "c.json")
    again = load_circuit(tmp_path / "c.json")
    assert np.array_equal(run(again).amps, run(inst).amps)


def test_serialization_rejects_unknown_format():
    with pytest.raises(ValueError):
        circuit_from_dict({"format": "something-else"})
