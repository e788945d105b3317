"""Output-distribution diagnostics and ensemble statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .circuits import PeakedCircuitInstance, UnsupportedSizeError, peaking_matrices
from .qsim import StateVector, apply_matrix, zero_state


@dataclass(frozen=True)
class OutputDistribution:
    probs: np.ndarray

    @property
    def n(self) -> int:
        return int(self.probs.size).bit_length() - 1


@dataclass(frozen=True)
class CollisionProbability:
    value: float


def output_distribution(state: StateVector) -> OutputDistribution:
    return OutputDistribution(state.probabilities())


def sorted_distribution(state: StateVector) -> np.ndarray:
    return np.sort(state.probabilities())[::-1]


def collision_probability(state: StateVector) -> CollisionProbability:
    p = state.probabilities()
    return CollisionProbability(float(np.dot(p, p)))


def entanglement_entropy_halfchain(state: StateVector) -> float:
    """Von Neumann entropy (bits) of the left ``n/2`` qubits."""
    return _halfchain(state.amps, state.n)


def _halfchain(amps: np.ndarray, n: int) -> float:
    if n % 2:
        raise UnsupportedSizeError(f"half-chain entropy needs even n, got {n}")
    half = 1 << (n // 2)
    s = np.linalg.svd(amps.reshape(half, half), compute_uv=False)
    lam = s * s
    lam = lam[lam > 1e-300]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


@dataclass
class EntropyProfile:
    """Half-chain entropy (bits) after each layer; entry 0 is the input state."""

    depths: np.ndarray
    entropy: np.ndarray


def entropy_profile(instance: PeakedCircuitInstance, theta=None) -> EntropyProfile:
    n = instance.n
    psi = zero_state(n).amps
    values = [_halfchain(psi, n)]
    k = 0
    for layer in instance.layout_r.layers:
        for a, b in layer:
            psi = apply_matrix(psi, instance.fixed[k], a, b, n)
            k += 1
        values.append(_halfchain(psi, n))
    if instance.tau_p:
        mats = peaking_matrices(instance, instance.params if theta is None else theta)
        k = 0
        for layer in instance.layout_p.layers:
            for a, b in layer:
                psi = apply_matrix(psi, mats[k], a, b, n)
                k += 1
            values.append(_halfchain(psi, n))
    return EntropyProfile(np.arange(len(values)), np.array(values))


def page_entropy(n: int) -> float:
    """Mean half-chain entropy (bits) of a Haar-random state on ``n`` qubits.

    Exact Page formula for equal halves of dimension ``m = 2**(n/2)``:
    ``sum_{k=m+1}^{m^2} 1/k - (m - 1)/(2m)`` nats.
    """
    m = 1 << (n // 2)
    k = np.arange(m + 1, m * m + 1, dtype=np.float64)
    return float((np.sum(1.0 / k) - (m - 1) / (2 * m)) / math.log(2))


def porter_thomas_collision(n: int) -> float:
    """Haar-average collision probability ``2 / (2**n + 1)``."""
    return 2.0 / ((1 << n) + 1)


@dataclass
class InstanceRecord:
    delta: float
    pi: float
    max_peak: float | None = None
    entropy: np.ndarray | None = None


@dataclass
class ExponentialFit:
    c: float
    a: float
    residuals: np.ndarray

    def __call__(self, n):
        return self.c * self.a ** (-np.asarray(n, dtype=np.float64))


@dataclass
class EnsembleStats:
    n: int
    samples: list[InstanceRecord]
    mean_delta: float
    var_delta: float
    max_delta: float
    mean_pi: float
    gamma_hat: float
    fit: ExponentialFit | None = field(default=None)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def stderr_delta(self) -> float:
        return math.sqrt(self.var_delta / self.count) if self.count > 1 else float("nan")

    @property
    def max_peaks(self) -> np.ndarray:
        return np.array([s.max_peak if s.max_peak is not None else s.delta for s in self.samples])


def ensemble_stats(n: int, samples: Sequence[InstanceRecord]) -> EnsembleStats:
    if not samples:
        raise ValueError("empty ensemble")
    d = np.array([s.delta for s in samples])
    pi = np.array([s.pi for s in samples])
    mean_pi = float(pi.mean())
    return EnsembleStats(
        n=n,
        samples=list(samples),
        mean_delta=float(d.mean()),
        var_delta=float(d.var(ddof=1)) if d.size > 1 else 0.0,
        max_delta=float(d.max()),
        mean_pi=mean_pi,
        gamma_hat=float((1 << n) * mean_pi),
    )


def wilson_interval(successes: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    if total <= 0:
        raise ValueError("Wilson interval needs at least one trial")
    z = sps.norm.ppf(0.5 + confidence / 2)
    p = successes / total
    denom = 1 + z * z / total
    centre = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == total else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class RarityEstimate:
    delta: float
    count: int
    total: int
    p_hat: float
    ci_low: float
    ci_high: float


def rarity_estimate(ensemble, delta: float, confidence: float = 0.95) -> RarityEstimate:
    """Fraction of circuits whose max output probability reaches ``delta``.

    ``ensemble`` is an :class:`EnsembleStats` or a sequence of max-peak values.
    """
    peaks = ensemble.max_peaks if isinstance(ensemble, EnsembleStats) else np.asarray(ensemble, dtype=np.float64)
    if peaks.size == 0:
        raise ValueError("empty ensemble")
    k = int(np.count_nonzero(peaks >= delta))
    lo, hi = wilson_interval(k, peaks.size, confidence)
    return RarityEstimate(float(delta), k, int(peaks.size), k / peaks.size, lo, hi)


def collision_bound(gamma_hat: float, delta: float, n: int) -> float:
    """Markov-type ceiling ``gamma / (delta^2 2^n)`` on the chance of a delta-peaked circuit."""
    return gamma_hat / (delta * delta * (1 << n))


def rarity_consistent(ensemble: EnsembleStats, delta: float, confidence: float = 0.95) -> bool:
    """Empirical rarity sits below the collision bound, up to the CI slack."""
    est = rarity_estimate(ensemble, delta, confidence)
    slack = est.ci_high - est.p_hat
    return est.p_hat <= collision_bound(ensemble.gamma_hat, delta, ensemble.n) + slack


class DomainError(ValueError):
    pass


def fit_exponential_decay(points: Sequence[tuple[float, float]]) -> ExponentialFit:
    """Least-squares fit of ``log(delta) = log(c) - n log(a)``.

    Residuals are in log space, one per point.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (n, delta) points")
    if np.any(pts[:, 1] <= 0):
        raise DomainError("all peak weights must be positive for a log-linear fit")
    x, y = pts[:, 0], np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    return ExponentialFit(float(np.exp(intercept)), float(np.exp(-slope)), resid)


def improvement_exponent(peaked_mean: float, unpeaked_mean: float) -> float:
    """``alpha`` with ``peaked = unpeaked ** alpha``; in (0, 1) when peaking helps."""
    return math.log(peaked_mean) / math.log(unpeaked_mean)
