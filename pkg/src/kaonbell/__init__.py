"""Generalized CHSH/CH Bell tests for decaying neutral-kaon pairs."""

from kaonbell.physics import (
    K0,
    K0BAR,
    K1,
    K2,
    Measurement,
    PhysicalConstants,
    Quasispin,
    evolution_operator,
    load_constants,
    mass_eigenstates,
    propagator,
    survival_norm,
)
from kaonbell.observables import (
    EffectiveObservable,
    JointProbs,
    TwoQubitState,
    chi_state,
    correlation,
    effective_observable,
    lambda_eigenvalue,
    oracle_correlation,
    oracle_joint_probs,
    psi_minus,
    psi_minus_vector,
)
from kaonbell.witness import (
    BellSetting,
    ScanPoint,
    ScanResult,
    WitnessResult,
    ch_function,
    optimize_times,
    reference_setting,
    product_state,
    s_function,
    separable_extrema,
    time_scan,
    violation,
)
from kaonbell.simulate import Estimate, EventBatch, EventRecord, estimate_s, generate_events

__version__ = "0.1.0"

__all__ = [
    "K0",
    "K0BAR",
    "K1",
    "K2",
    "BellSetting",
    "EffectiveObservable",
    "Estimate",
    "EventBatch",
    "EventRecord",
    "JointProbs",
    "Measurement",
    "PhysicalConstants",
    "Quasispin",
    "ScanPoint",
    "ScanResult",
    "TwoQubitState",
    "WitnessResult",
    "ch_function",
    "chi_state",
    "correlation",
    "effective_observable",
    "estimate_s",
    "evolution_operator",
    "generate_events",
    "lambda_eigenvalue",
    "load_constants",
    "mass_eigenstates",
    "optimize_times",
    "oracle_correlation",
    "oracle_joint_probs",
    "reference_setting",
    "product_state",
    "propagator",
    "psi_minus",
    "psi_minus_vector",
    "s_function",
    "separable_extrema",
    "survival_norm",
    "time_scan",
    "violation",
]
