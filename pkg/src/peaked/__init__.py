"""Peaked random circuits: dense simulation, peaking-layer optimization and ensemble statistics."""

__version__ = "0.1.0"

from .qsim import StateVector, TwoQubitGate, apply_two_qubit_gate, haar_random_unitary, zero_state
from .kak import kak_decompose, kak_gate
from .circuits import (
    PeakedCircuitInstance,
    attach_peaking_layers,
    brickwall_layout,
    max_peak,
    peak_weight,
    run,
    sample_random_circuit,
)
from .optimize import OptimizerConfig, objective_and_gradient, optimize_peaking
from .stats import collision_probability, ensemble_stats, fit_exponential_decay, rarity_estimate
from .seeds import derive_seed

__all__ = [
    "StateVector", "TwoQubitGate", "apply_two_qubit_gate", "haar_random_unitary", "zero_state",
    "kak_decompose", "kak_gate",
    "PeakedCircuitInstance", "attach_peaking_layers", "brickwall_layout", "max_peak", "peak_weight", "run",
    "sample_random_circuit",
    "OptimizerConfig", "objective_and_gradient", "optimize_peaking",
    "collision_probability", "ensemble_stats", "fit_exponential_decay", "rarity_estimate",
    "derive_seed",
]
