"""Adjoint gradients of the all-zero peak weight and multi-restart Adam ascent."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kak
from .circuits import PeakedCircuitInstance, ParameterError, attach_peaking_layers
from .qsim import apply_matrix
from .seeds import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iters: int = 2000
    restarts: int = 10
    plateau_tol: float = 1e-6
    plateau_window: int = 100
    init_scale: float = 0.1

    def __post_init__(self):
        for name in ("learning_rate", "eps", "max_iters", "restarts", "plateau_tol", "plateau_window", "init_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"OptimizerConfig.{name} must be positive, got {getattr(self, name)!r}")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"OptimizerConfig.{name} must lie in (0, 1), got {getattr(self, name)!r}")


@dataclass
class RestartTrace:
    final_delta: float
    iterations: int
    converged: bool
    seed: int
    trace: np.ndarray | None = None

    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(self.trace)


@dataclass
class OptimizationResult:
    best_theta: np.ndarray
    best_delta: float
    per_restart: list[RestartTrace]
    instance_seed: int | None
    optimizer_seed: int | None
    instance: PeakedCircuitInstance | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.per_restart)


def _batched(instance: PeakedCircuitInstance, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Objective and adjoint gradient for a batch of parameter vectors ``(R, P)``.

    One forward sweep, then a backward sweep that uncomputes the ket while
    pulling the amplitude-weighted costate ``<0^n|C|0^n> |0^n>`` back through
    the peaking gates.  Two statevector workspaces per batch row.
    """
    n = instance.n
    pairs = instance.layout_p.pairs()
    batch = thetas.shape[0]
    u, du = kak.kak_gate_and_derivatives(thetas.reshape(batch, -1, kak.NUM_PARAMS))
    udag = np.conj(np.swapaxes(u, -1, -2))

    psi = np.repeat(instance.random_state[None, :], batch, axis=0)
    for k, (a, b) in enumerate(pairs):
        psi = apply_matrix(psi, u[:, k], a, b, n)
    amp = psi[:, 0].copy()
    delta = amp.real ** 2 + amp.imag ** 2

    lam = np.zeros_like(psi)
    lam[:, 0] = amp
    grads = np.empty((batch, len(pairs), kak.NUM_PARAMS))
    for k in reversed(range(len(pairs))):
        a, b = pairs[k]
        if b != a + 1:
            raise ParameterError(f"adjoint sweep needs adjacent qubit pairs, got {(a, b)}")
        psi = apply_matrix(psi, udag[:, k], a, b, n)
        shape = (batch, 1 << a, 4, 1 << (n - a - 2))
        env = (lam.reshape(shape).conj() @ np.swapaxes(psi.reshape(shape), -1, -2)).sum(axis=1)
        grads[:, k, :] = 2.0 * np.einsum("rkij,rij->rk", du[:, k], env).real
        lam = apply_matrix(lam, udag[:, k], a, b, n)
    return delta, grads.reshape(batch, -1)


def objective_and_gradient(instance: PeakedCircuitInstance, theta) -> tuple[float, np.ndarray]:
    """``delta = |<0^n|C(theta)|0^n>|^2`` and its exact gradient."""
    theta = instance.check_params(theta)
    if theta.size == 0:
        amp = instance.random_state[0]
        return float(abs(amp) ** 2), np.zeros(0)
    delta, grad = _batched(instance, theta[None, :])
    return float(delta[0]), grad[0]


@dataclass
class AdamMoments:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamMoments":
        return cls(np.zeros(shape), np.zeros(shape), 0)


def adam_step(theta: np.ndarray, moments: AdamMoments, grad: np.ndarray, config: OptimizerConfig):
    """One bias-corrected Adam step that *ascends* the objective."""
    t = moments.t + 1
    m = config.beta1 * moments.m + (1 - config.beta1) * grad
    v = config.beta2 * moments.v + (1 - config.beta2) * grad * grad
    m_hat = m / (1 - config.beta1 ** t)
    v_hat = v / (1 - config.beta2 ** t)
    theta = theta + config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return theta, AdamMoments(m, v, t)


def _plateaued(trace: list[float], config: OptimizerConfig) -> bool:
    w = config.plateau_window
    if len(trace) <= w:
        return False
    now, before = max(trace), max(trace[:-w])
    return now - before <= config.plateau_tol * before


def optimize_peaking(
    instance: PeakedCircuitInstance,
    tau_p: int,
    config: OptimizerConfig | None = None,
    seed: int | None = None,
    parity: str = "continue",
    keep_traces: bool = True,
) -> OptimizationResult:
    """Best-of-restarts Adam ascent of the all-zero peak weight.

    Restart ``r`` draws its initial angles from ``N(0, init_scale^2)`` using
    ``derive_seed(seed, r)``; ``seed`` defaults to the instance seed.  A restart
    stops at ``max_iters`` or once its running best improves by less than
    ``plateau_tol`` (relative) over ``plateau_window`` iterations.  Each
    restart reports the best peak weight it visited.
    """
    config = config or OptimizerConfig()
    if seed is None:
        seed = instance.seed if instance.seed is not None else 0
    if instance.tau_p == 0:
        instance = attach_peaking_layers(instance, tau_p, parity=parity)
    elif instance.tau_p != tau_p:
        raise ParameterError(f"instance already has tau_p={instance.tau_p}, asked for {tau_p}")

    if instance.num_params == 0:
        delta, _ = objective_and_gradient(instance, np.zeros(0))
        traces = [RestartTrace(delta, 0, True, derive_seed(seed, r), np.array([delta])) for r in range(config.restarts)]
        return OptimizationResult(np.zeros(0), delta, traces, instance.seed, seed, instance)

    P = instance.num_params
    R = config.restarts
    restart_seeds = [derive_seed(seed, r) for r in range(R)]
    theta = np.stack([np.random.default_rng(s).normal(0.0, config.init_scale, P) for s in restart_seeds])
    moments = AdamMoments.zeros(theta.shape)
    best_theta = theta.copy()
    best_delta = np.full(R, -1.0)
    traces: list[list[float]] = [[] for _ in range(R)]
    converged = np.zeros(R, dtype=bool)
    active = np.arange(R)

    for it in range(config.max_iters):
        delta, grad = _batched(instance, theta[active])
        improved = delta > best_delta[active]
        best_delta[active[improved]] = delta[improved]
        best_theta[active[improved]] = theta[active[improved]]
        for r, d in zip(active, delta):
            traces[r].append(float(d))
        new_theta, new_m = adam_step(theta[active], AdamMoments(moments.m[active], moments.v[active], moments.t), grad, config)
        theta[active] = new_theta
        moments.m[active] = new_m.m
        moments.v[active] = new_m.v
        moments.t = new_m.t

        done = np.array([_plateaued(traces[r], config) for r in active], dtype=bool)
        if done.any():
            converged[active[done]] = True
            active = active[~done]
            if active.size == 0:
                break
        if it % 500 == 0:
            log.debug("iter %d: best %s", it, np.round(best_delta, 4))

    per_restart = [
        RestartTrace(float(best_delta[r]), len(traces[r]), bool(converged[r]), restart_seeds[r],
                     np.array(traces[r]) if keep_traces else None)
        for r in range(R)
    ]
    top = int(np.argmax(best_delta))
    return OptimizationResult(best_theta[top].copy(), float(best_delta[top]), per_restart, instance.seed, seed, instance)
