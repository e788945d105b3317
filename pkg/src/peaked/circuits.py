"""Brick-wall layouts and the random + peaking circuit model.

A circuit has ``tau_r`` layers of fixed Haar-random two-qubit gates followed
by ``tau_p`` layers of KAK-parameterized gates.  Layers alternate between the
even pairing ``(0,1),(2,3),...`` and the odd pairing ``(1,2),(3,4),...`` with
open boundaries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kak
from .qsim import (
    StateVector,
    TwoQubitGate,
    apply_matrix,
    bitstring_to_index,
    haar_random_unitaries,
    index_to_bitstring,
    zero_state,
    _check_n,
)

PARITIES = ("continue", "mirror")


class UnsupportedSizeError(ValueError):
    pass


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class CircuitLayout:
    n: int
    layers: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def num_gates(self) -> int:
        return sum(len(layer) for layer in self.layers)

    def pairs(self) -> list[tuple[int, int]]:
        return [pair for layer in self.layers for pair in layer]


def layer_pairs(n: int, parity: int) -> tuple[tuple[int, int], ...]:
    return tuple((q, q + 1) for q in range(parity % 2, n - 1, 2))


def brickwall_layout(n: int, depth: int, start_parity: int = 0) -> CircuitLayout:
    if n % 2:
        raise UnsupportedSizeError(f"brick-wall circuits need an even qubit count, got n={n}")
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    return CircuitLayout(n, tuple(layer_pairs(n, start_parity + k) for k in range(depth)))


@dataclass(frozen=True, eq=False)
class PeakedCircuitInstance:
    """Fixed random layers plus (optionally) parameterized peaking layers.

    ``fixed`` holds the random gates stacked in layout order, shape
    ``(num_gates, 4, 4)``; the array is read-only.  ``params`` is the current
    peaking parameter vector, 15 angles per peaking gate in layout order.
    """

    layout_r: CircuitLayout
    fixed: np.ndarray
    layout_p: CircuitLayout
    params: np.ndarray
    seed: int | None = None
    parity: str = "continue"

    def __post_init__(self):
        fixed = np.array(self.fixed, dtype=np.complex128).reshape(-1, 4, 4)
        fixed.flags.writeable = False
        object.__setattr__(self, "fixed", fixed)
        if fixed.shape[0] != self.layout_r.num_gates:
            raise ParameterError(f"{fixed.shape[0]} fixed gates for {self.layout_r.num_gates} random-layer pairs")
        params = np.array(self.params, dtype=np.float64).ravel()
        object.__setattr__(self, "params", params)
        if params.size != self.num_params:
            raise ParameterError(f"expected {self.num_params} parameters, got {params.size}")

    @property
    def n(self) -> int:
        return self.layout_r.n

    @property
    def tau_r(self) -> int:
        return self.layout_r.depth

    @property
    def tau_p(self) -> int:
        return self.layout_p.depth

    @property
    def num_params(self) -> int:
        return kak.NUM_PARAMS * self.layout_p.num_gates

    @property
    def fixed_gates(self) -> tuple[TwoQubitGate, ...]:
        return tuple(TwoQubitGate(m, "fixed") for m in self.fixed)

    @cached_property
    def random_state(self) -> np.ndarray:
        """Output amplitudes of the random layers alone (read-only, cached)."""
        psi = zero_state(self.n).amps
        for m, (a, b) in zip(self.fixed, self.layout_r.pairs()):
            psi = apply_matrix(psi, m, a, b, self.n)
        psi.flags.writeable = False
        return psi

    def check_params(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[-1:] != (self.num_params,):
            raise ParameterError(f"expected {self.num_params} parameters, got shape {theta.shape}")
        return theta


def sample_random_circuit(n: int, tau_r: int, rng) -> PeakedCircuitInstance:
    """Random brick-wall circuit with an independent Haar gate on every pair.

    ``rng`` is an integer seed (recorded on the instance) or a numpy Generator.
    Gates are drawn in layout order, layer by layer.
    """
    _check_n(n)
    if tau_r < 0:
        raise ValueError(f"tau_r must be >= 0, got {tau_r}")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    layout = brickwall_layout(n, tau_r)
    fixed = haar_random_unitaries(rng, layout.num_gates)
    return PeakedCircuitInstance(layout, fixed, brickwall_layout(n, 0), np.zeros(0), seed)


def peaking_start_parity(tau_r: int, parity: str) -> int:
    """Parity of the first peaking layer.

    ``continue`` keeps the brick wall uniform.  ``mirror`` repeats the parity of
    the last random layer so that peaking layer ``j`` can undo random layer
    ``tau_r - 1 - j`` gate by gate.
    """
    if parity == "continue":
        return tau_r % 2
    if parity == "mirror":
        return (tau_r - 1) % 2
    raise ValueError(f"parity must be one of {PARITIES}, got {parity!r}")


def attach_peaking_layers(
    instance: PeakedCircuitInstance, tau_p: int, theta_init=None, parity: str = "continue"
) -> PeakedCircuitInstance:
    if instance.tau_p != 0:
        raise ParameterError("instance already has peaking layers")
    if tau_p < 0:
        raise ValueError(f"tau_p must be >= 0, got {tau_p}")
    if tau_p == 0:
        return instance
    layout_p = brickwall_layout(instance.n, tau_p, peaking_start_parity(instance.tau_r, parity))
    count = kak.NUM_PARAMS * layout_p.num_gates
    theta = np.zeros(count) if theta_init is None else np.asarray(theta_init, dtype=np.float64).ravel()
    if theta.size != count:
        raise ParameterError(f"theta_init has {theta.size} entries, peaking layers need {count}")
    new = replace(instance, layout_p=layout_p, params=theta, parity=parity)
    if "random_state" in instance.__dict__:
        new.__dict__["random_state"] = instance.__dict__["random_state"]
    return new


def with_params(instance: PeakedCircuitInstance, theta) -> PeakedCircuitInstance:
    theta = instance.check_params(theta)
    new = replace(instance, params=theta)
    if "random_state" in instance.__dict__:
        new.__dict__["random_state"] = instance.__dict__["random_state"]
    return new


def peaking_matrices(instance: PeakedCircuitInstance, theta) -> np.ndarray:
    theta = instance.check_params(theta)
    return kak.kak_gate_matrix(theta.reshape(theta.shape[:-1] + (-1, kak.NUM_PARAMS)))


def apply_peaking(psi: np.ndarray, instance: PeakedCircuitInstance, theta) -> np.ndarray:
    mats = peaking_matrices(instance, theta)
    for k, (a, b) in enumerate(instance.layout_p.pairs()):
        psi = apply_matrix(psi, mats[..., k, :, :], a, b, instance.n)
    return psi


def run(instance: PeakedCircuitInstance, theta=None) -> StateVector:
    """Return ``C(theta)|0^n>``; ``theta`` defaults to ``instance.params``."""
    theta = instance.params if theta is None else theta
    return StateVector(instance.n, apply_peaking(instance.random_state, instance, theta))


def inverse_params(instance: PeakedCircuitInstance) -> np.ndarray:
    """Peaking parameters that undo the random layers exactly.

    Random layer ``k`` is matched with the first later peaking layer of the same
    parity, walking backwards through the random circuit; unmatched peaking
    layers stay at the identity.  Raises :class:`ParameterError` when the
    peaking depth is too shallow for an exact inverse under the instance's
    parity convention (``mirror`` needs ``tau_p >= tau_r``, ``continue`` needs
    ``tau_p >= tau_r + 1``).
    """
    theta = np.zeros(instance.num_params).reshape(-1, kak.NUM_PARAMS)
    r_layers = instance.layout_r.layers
    offsets_r = np.cumsum([0] + [len(layer) for layer in r_layers])
    offsets_p = np.cumsum([0] + [len(layer) for layer in instance.layout_p.layers])
    start = peaking_start_parity(instance.tau_r, instance.parity)
    j = 0
    for k in reversed(range(len(r_layers))):
        while j < instance.tau_p and (start + j) % 2 != k % 2:
            j += 1
        if j >= instance.tau_p:
            raise ParameterError(
                f"tau_p={instance.tau_p} cannot invert tau_r={instance.tau_r} layers with {instance.parity!r} parity"
            )
        for g in range(len(r_layers[k])):
            u = instance.fixed[offsets_r[k] + g]
            theta[offsets_p[j] + g] = kak.kak_decompose(u.conj().T)
        j += 1
    return theta.ravel()


@dataclass(frozen=True)
class PeakWeight:
    value: float
    target: str

    def __post_init__(self):
        if not -1e-12 <= self.value <= 1 + 1e-12:
            raise ValueError(f"peak weight {self.value} outside [0, 1]")


def peak_weight(state: StateVector, s: str) -> PeakWeight:
    idx = bitstring_to_index(s, state.n)
    a = state.amps[idx]
    return PeakWeight(float(a.real ** 2 + a.imag ** 2), s)


def max_peak(state: StateVector) -> tuple[str, PeakWeight]:
    """Most likely output string; ties go to the smallest basis index."""
    probs = state.probabilities()
    idx = int(np.argmax(probs))
    s = index_to_bitstring(idx, state.n)
    return s, PeakWeight(float(probs[idx]), s)


# -- serialization ----------------------------------------------------------

CIRCUIT_FORMAT = "peaked-circuit/1"


def _hex_list(values) -> list[str]:
    return [float(v).hex() for v in np.asarray(values, dtype=np.float64).ravel()]


def _from_hex(values) -> np.ndarray:
    return np.array([float.fromhex(v) for v in values], dtype=np.float64)


def circuit_to_dict(instance: PeakedCircuitInstance) -> dict:
    """JSON-ready dict; every float is a hexadecimal string (exact round trip).

    Schema::

        format     "peaked-circuit/1"
        n, tau_r, tau_p, seed, parity
        fixed      list of gates; each gate is 16 [re, im] pairs in row-major order
        theta      list of hex floats, 15 per peaking gate in layout order
    """
    gates = []
    for m in instance.fixed:
        flat = m.ravel()
        gates.append([[float(z.real).hex(), float(z.imag).hex()] for z in flat])
    return {
        "format": CIRCUIT_FORMAT,
        "n": instance.n,
        "tau_r": instance.tau_r,
        "tau_p": instance.tau_p,
        "seed": instance.seed,
        "parity": instance.parity,
        "fixed": gates,
        "theta": _hex_list(instance.params),
    }


def circuit_from_dict(data: dict) -> PeakedCircuitInstance:
    if data.get("format") != CIRCUIT_FORMAT:
        raise ValueError(f"unsupported circuit format {data.get('format')!r}")
    n, tau_r, tau_p = int(data["n"]), int(data["tau_r"]), int(data["tau_p"])
    parity = data.get("parity", "continue")
    fixed = np.array(
        [[complex(float.fromhex(re), float.fromhex(im)) for re, im in gate] for gate in data["fixed"]],
        dtype=np.complex128,
    ).reshape(-1, 4, 4)
    layout_r = brickwall_layout(n, tau_r)
    layout_p = brickwall_layout(n, tau_p, peaking_start_parity(tau_r, parity)) if tau_p else brickwall_layout(n, 0)
    return PeakedCircuitInstance(layout_r, fixed, layout_p, _from_hex(data["theta"]), data.get("seed"), parity)


def save_circuit(instance: PeakedCircuitInstance, path) -> None:
    Path(path).write_text(json.dumps(circuit_to_dict(instance), indent=1) + "\n")


def load_circuit(path) -> PeakedCircuitInstance:
    return circuit_from_dict(json.loads(Path(path).read_text()))
