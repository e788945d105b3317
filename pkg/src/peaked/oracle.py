"""Independent checks for the simulator and optimizer.

Three kinds of oracle live here:

* the two-layer construction: after one even layer ``R1`` and one odd layer
  ``R2``, a single extra layer undoes ``R2`` and rotates every pair of ``R1``
  into its Schmidt basis, leaving ``prod_i (alpha_i|00> + beta_i|11>)``;
* a dense simulator that builds full ``2^n x 2^n`` circuit matrices from
  Kronecker products and shares no code with the statevector kernels;
* :func:`brute_force_max_peak`, a slow search for the best attainable
  all-zero peak weight on tiny registers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from . import kak
from .circuits import (
    PeakedCircuitInstance,
    ParameterError,
    attach_peaking_layers,
    inverse_params,
    layer_pairs,
    max_peak,
    peaking_start_parity,
    run,
)
from .qsim import SizeError

BRUTE_FORCE_MAX_QUBITS = 6


class StructuralError(RuntimeError):
    """The two-layer peaking construction does not fit the requested layer shape."""


# -- closed-form laws ---------------------------------------------------------

def haar_mean_max_probability(d: int) -> float:
    """Mean of ``max_i |<i|psi>|^2`` for a Haar-random state in dimension ``d``: ``H_d / d``."""
    return sum(1.0 / k for k in range(1, d + 1)) / d


def single_layer_peak_law(n: int) -> float:
    """Mean max output probability after one random brick-wall layer: ``(25/48)^(n/2)``."""
    return haar_mean_max_probability(4) ** (n // 2)


MEAN_MAX_SCHMIDT_WEIGHT = 7.0 / 8.0


def peaking_layer_law(n: int) -> float:
    """Mean peak weight after the two-layer construction: ``(7/8)^(n/2)``."""
    return MEAN_MAX_SCHMIDT_WEIGHT ** (n // 2)


# -- Schmidt forms --------------------------------------------------------------

@dataclass(frozen=True)
class SchmidtForm:
    """``(u_a (x) u_b)(alpha|00> + beta|11>)`` with ``alpha >= beta >= 0``."""

    alpha: float
    beta: float
    u_a: np.ndarray
    u_b: np.ndarray

    def state(self) -> np.ndarray:
        core = np.array([self.alpha, 0, 0, self.beta], dtype=np.complex128)
        return np.kron(self.u_a, self.u_b) @ core


def schmidt_two_qubit(state4) -> SchmidtForm:
    """Schmidt decomposition of a two-qubit state (first qubit = high bit).

    Left singular vectors are phased so their first nonzero entry is real and
    positive; the compensating phase goes into the right vectors.
    """
    psi = np.asarray(state4, dtype=np.complex128)
    if psi.shape != (4,):
        raise ValueError(f"expected 4 amplitudes, got shape {psi.shape}")
    u, s, vh = np.linalg.svd(psi.reshape(2, 2))
    for k in range(2):
        col = u[:, k]
        lead = col[np.argmax(np.abs(col) > 1e-12)]
        phase = lead / abs(lead)
        u[:, k] /= phase
        vh[k, :] *= phase
    return SchmidtForm(float(s[0]), float(s[1]), u, vh.T.copy())


# -- the two-layer construction -------------------------------------------------

def _is_identity_up_to_phase(m: np.ndarray, atol: float = 1e-9) -> bool:
    return kak.equal_up_to_phase(m, np.eye(m.shape[0], dtype=np.complex128), atol)


@dataclass
class AnalyticPeakingLayer:
    """A depth-one layer: two-qubit gates on R2's pairs plus single-qubit frames.

    With open boundaries ``R2`` leaves qubits ``0`` and ``n-1`` idle, so their
    Schmidt frames stay as single-qubit gates.  All supports are disjoint.
    """

    n: int
    pair_gates: list[tuple[tuple[int, int], np.ndarray]]
    single_gates: list[tuple[int, np.ndarray]]
    schmidt: list[SchmidtForm]
    notes: list[str] = field(default_factory=list)

    @property
    def predicted_peak(self) -> float:
        return float(np.prod([sf.alpha ** 2 for sf in self.schmidt]))

    def target_state(self) -> np.ndarray:
        out = np.ones(1, dtype=np.complex128)
        for sf in self.schmidt:
            out = np.kron(out, np.array([sf.alpha, 0, 0, sf.beta], dtype=np.complex128))
        return out

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return dense_layer(self.n, self.pair_gates, self.single_gates) @ psi

    def brickwall_parity(self) -> int | None:
        """Parity of the brick-wall layer this layer equals, or None."""
        for parity in (0, 1):
            try:
                self.as_brickwall_layer(parity)
                return parity
            except StructuralError:
                continue
        return None

    def as_brickwall_layer(self, parity: int) -> list[np.ndarray]:
        """Gates of one open-boundary brick-wall layer of ``parity``.

        Single-qubit frames are folded into the pair that contains them; a
        nontrivial gate whose support lies in no pair of the layer makes the
        construction inexpressible and raises :class:`StructuralError`.
        """
        pairs = layer_pairs(self.n, parity)
        gates = {p: np.eye(4, dtype=np.complex128) for p in pairs}
        owner = {q: p for p in pairs for q in p}
        for p, g in self.pair_gates:
            if p in gates:
                gates[p] = g @ gates[p]
            elif not _is_identity_up_to_phase(g):
                raise StructuralError(f"two-qubit gate on {p} does not belong to a parity-{parity} layer")
        for q, g in self.single_gates:
            if q in owner:
                p = owner[q]
                lift = np.kron(g, np.eye(2)) if q == p[0] else np.kron(np.eye(2), g)
                gates[p] = lift @ gates[p]
            elif not _is_identity_up_to_phase(g):
                raise StructuralError(
                    f"single-qubit frame on boundary qubit {q} is not covered by a parity-{parity} layer"
                )
        return [gates[p] for p in pairs]


def analytic_peaking_layer(r1_gates, r2_gates, n: int, strict: bool = False) -> AnalyticPeakingLayer:
    """Peaking layer ``(prod_q U_q^dagger) R2^{-1}`` for a two-layer circuit.

    ``r1_gates`` are the ``n/2`` gates of the even layer, ``r2_gates`` the
    ``n/2 - 1`` gates of the odd layer, each in pair order.  The result is
    checked against the predicted product state; ``strict=True`` further
    requires it to be a single brick-wall layer of the parity that would
    follow ``R2`` and raises :class:`StructuralError` otherwise.
    """
    if n % 2 or n < 2:
        raise SizeError(f"the two-layer construction needs even n >= 2, got {n}")
    even, odd = layer_pairs(n, 0), layer_pairs(n, 1)
    r1 = np.asarray(r1_gates, dtype=np.complex128).reshape(-1, 4, 4)
    r2 = np.asarray(r2_gates, dtype=np.complex128).reshape(-1, 4, 4)
    if len(r1) != len(even) or len(r2) != len(odd):
        raise ParameterError(f"need {len(even)} + {len(odd)} gates for n={n}, got {len(r1)} + {len(r2)}")

    schmidt = [schmidt_two_qubit(g[:, 0]) for g in r1]
    frames = {}
    for (qa, qb), sf in zip(even, schmidt):
        frames[qa] = sf.u_a.conj().T
        frames[qb] = sf.u_b.conj().T
    pair_gates = [((qa, qb), np.kron(frames[qa], frames[qb]) @ g.conj().T) for (qa, qb), g in zip(odd, r2)]
    covered = {q for p in odd for q in p}
    single_gates = [(q, frames[q]) for q in range(n) if q not in covered]
    layer = AnalyticPeakingLayer(n, pair_gates, single_gates, schmidt)

    psi = dense_layer(n, list(zip(odd, r2)), []) @ (dense_layer(n, list(zip(even, r1)), []) @ _basis0(n))
    if not np.allclose(layer.apply(psi), layer.target_state(), rtol=0, atol=1e-9):
        raise StructuralError("peaking layer failed to reproduce the Schmidt product state")
    parity = layer.brickwall_parity()
    if parity is None:
        layer.notes.append("depth-one layer with boundary single-qubit frames; not a pure brick-wall layer")
    if strict:
        layer.as_brickwall_layer(peaking_start_parity(2, "continue"))
    return layer


def analytic_peaking_for(instance: PeakedCircuitInstance, strict: bool = False) -> AnalyticPeakingLayer:
    if instance.tau_r != 2:
        raise ParameterError(f"the two-layer construction needs tau_r=2, got {instance.tau_r}")
    k = len(instance.layout_r.layers[0])
    return analytic_peaking_layer(instance.fixed[:k], instance.fixed[k:], instance.n, strict)


# -- dense reference simulator --------------------------------------------------

def _basis0(n: int) -> np.ndarray:
    e = np.zeros(1 << n, dtype=np.complex128)
    e[0] = 1.0
    return e


def embed(n: int, gate: np.ndarray, qubits: tuple[int, ...]) -> np.ndarray:
    """Full ``2^n`` matrix of a gate on contiguous ``qubits`` (high bit first)."""
    q0, k = qubits[0], len(qubits)
    if tuple(qubits) != tuple(range(q0, q0 + k)):
        raise ValueError(f"dense embedding needs contiguous qubits, got {qubits}")
    return np.kron(np.kron(np.eye(1 << q0), gate), np.eye(1 << (n - q0 - k)))


def dense_layer(n: int, pair_gates, single_gates) -> np.ndarray:
    m = np.eye(1 << n, dtype=np.complex128)
    for (qa, qb), g in pair_gates:
        m = embed(n, g, (qa, qb)) @ m
    for q, g in single_gates:
        m = embed(n, g, (q,)) @ m
    return m


def dense_random_unitary(instance: PeakedCircuitInstance) -> np.ndarray:
    n = instance.n
    m = np.eye(1 << n, dtype=np.complex128)
    for g, pair in zip(instance.fixed, instance.layout_r.pairs()):
        m = embed(n, g, pair) @ m
    return m


def dense_peaking_unitary(instance: PeakedCircuitInstance, theta) -> np.ndarray:
    n = instance.n
    gates = kak.kak_gate_matrix(np.asarray(theta, dtype=np.float64).reshape(-1, kak.NUM_PARAMS))
    m = np.eye(1 << n, dtype=np.complex128)
    for g, pair in zip(gates, instance.layout_p.pairs()):
        m = embed(n, g, pair) @ m
    return m


def dense_state(instance: PeakedCircuitInstance, theta=None) -> np.ndarray:
    theta = instance.params if theta is None else theta
    return dense_peaking_unitary(instance, theta) @ (dense_random_unitary(instance) @ _basis0(instance.n))


# -- brute force ----------------------------------------------------------------

def _best_product_overlap(psi: np.ndarray, n: int, pairs, rng: np.random.Generator, starts: int) -> float:
    """``max |<0...0| (G_1 (x) G_2 ...) |psi>|^2`` over one layer of arbitrary gates.

    Since ``G^dagger|00>`` ranges over all two-qubit states, this is the best
    overlap of ``psi`` with a product of pair states times ``|0>`` on idle
    qubits.  One or two blocks are solved exactly; more blocks use
    alternating maximisation from ``starts`` random points.
    """
    t = psi.reshape([2] * n)
    covered = {q for p in pairs for q in p}
    idle = [q for q in range(n) if q not in covered]
    index = tuple(0 if q in idle else slice(None) for q in range(n))
    t = t[index]  # remaining axes follow the pairs in order
    blocks = len(pairs)
    t = t.reshape([4] * blocks)
    if blocks == 0:
        return float(abs(t) ** 2)
    if blocks == 1:
        return float(np.sum(np.abs(t) ** 2))
    if blocks == 2:
        return float(np.linalg.norm(t, 2) ** 2)

    best = 0.0
    for _ in range(starts):
        vecs = [v / np.linalg.norm(v) for v in rng.normal(size=(blocks, 4)) + 1j * rng.normal(size=(blocks, 4))]
        value, prev = 0.0, -1.0
        for _ in range(500):
            for b in range(blocks):
                c = t
                for other in reversed(range(blocks)):
                    if other == b:
                        continue
                    c = np.moveaxis(c, other, -1) @ vecs[other].conj()
                vecs[b] = c / np.linalg.norm(c)
                value = float(np.linalg.norm(c) ** 2)
            if value - prev < 1e-14:
                break
            prev = value
        best = max(best, value)
    return best


def brute_force_max_peak(
    instance: PeakedCircuitInstance,
    tau_p: int,
    resolution: int = 8,
    seed: int = 0,
    parity: str = "continue",
) -> float:
    """Best attainable peak weight found by slow, independent search.

    * ``tau_p == 0``: the largest output probability of the random circuit.
    * ``tau_p == 1``: a layer of arbitrary gates reduces to a best product-state
      overlap (exact for at most two gates, multi-start otherwise).
    * ``tau_p >= 2``: the exact inverse when the depth allows it, plus
      ``resolution`` random starts polished by L-BFGS on the dense simulator.

    The result is a lower bound on the true optimum (exact in the first two
    cases for ``n <= 4``).
    """
    n = instance.n
    if n > BRUTE_FORCE_MAX_QUBITS:
        raise SizeError(f"brute force is limited to n <= {BRUTE_FORCE_MAX_QUBITS}, got {n}")
    if tau_p == 0:
        return max_peak(run(instance))[1].value
    psi_r = dense_random_unitary(instance) @ _basis0(n)
    rng = np.random.default_rng(seed)
    inst = attach_peaking_layers(instance, tau_p, parity=parity) if instance.tau_p == 0 else instance
    if tau_p == 1:
        return _best_product_overlap(psi_r, n, inst.layout_p.layers[0], rng, max(resolution, 1))

    def loss(theta):
        amp = (dense_peaking_unitary(inst, theta) @ psi_r)[0]
        return -(amp.real ** 2 + amp.imag ** 2)

    best = 0.0
    try:
        best = -loss(inverse_params(inst))
    except ParameterError:
        pass
    for _ in range(resolution):
        x0 = rng.uniform(-math.pi, math.pi, inst.num_params)
        res = sopt.minimize(loss, x0, method="L-BFGS-B", options={"maxiter": 500})
        best = max(best, -float(res.fun))
    return best
