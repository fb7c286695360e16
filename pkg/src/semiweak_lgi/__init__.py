"""Generalized two-party Leggett-Garg inequalities with semi-weak measurements.

Party 1 (the photon that meets the semi-weak meter) is the left tensor factor
throughout.
"""

from .exceptions import (
    DegenerateMeter,
    EmptyData,
    InsufficientSettings,
    LgiError,
    NonConvergence,
    ScenarioError,
    UnsupportedSize,
    ZeroConditioningProbability,
)
from .lgi import (
    BASIC_TERMS,
    FIG4_TERMS,
    FIG5_TERMS,
    DetectorChain,
    LgiSpec,
    chain_for_size,
    conditioned_average,
    convex_sum_constraint,
    correlation_vector,
    enumerate_lgis,
    evaluate_lgi,
    standard_chain,
    joint_distribution,
    joint_probability,
    make_spec,
    mr_bounds,
    projective,
    semi_weak,
    spec_from_terms,
)
from .meter import SemiWeakMeter, apply_meter, meter_from_reflectivities, calibrated_meter
from .qstate import ideal_state, partial_trace, stokes_theta, tensor
from .simulate import CountTable, MrModel, estimate_correlations, sample_counts, sample_mr
from .tomography import concurrence, fidelity, mle_reconstruct, purity

__version__ = "0.1.0"

__all__ = [
    "BASIC_TERMS",
    "CountTable",
    "DegenerateMeter",
    "DetectorChain",
    "EmptyData",
    "FIG4_TERMS",
    "FIG5_TERMS",
    "InsufficientSettings",
    "LgiError",
    "LgiSpec",
    "MrModel",
    "NonConvergence",
    "ScenarioError",
    "SemiWeakMeter",
    "UnsupportedSize",
    "ZeroConditioningProbability",
    "apply_meter",
    "calibrated_meter",
    "chain_for_size",
    "concurrence",
    "conditioned_average",
    "convex_sum_constraint",
    "correlation_vector",
    "enumerate_lgis",
    "estimate_correlations",
    "evaluate_lgi",
    "fidelity",
    "ideal_state",
    "joint_distribution",
    "joint_probability",
    "make_spec",
    "meter_from_reflectivities",
    "mle_reconstruct",
    "mr_bounds",
    "partial_trace",
    "projective",
    "purity",
    "sample_counts",
    "sample_mr",
    "semi_weak",
    "spec_from_terms",
    "standard_chain",
    "stokes_theta",
    "tensor",
]
