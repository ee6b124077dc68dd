"""Noisy-control simulation and lower bounds for su(2) quantum systems."""

from .kernels import BACKEND
from .spinalg import (
    ModelSystem,
    Operator,
    commutator,
    double_well_model,
    lie_closure_rank,
    max_abs_eigenvalue,
    su2_generators,
)
from .states import (
    AmplitudePhaseState,
    DensityMatrix,
    TransformationSpec,
    aux_operator,
    delta_r_norm,
    purity,
    purity_loss_rate,
    spin_coherent_state,
    to_eigenbasis,
    variance,
)
from .lindblad import (
    ControlPulse,
    PulseStatistics,
    TrajectoryRecord,
    first_passage_time,
    propagate_lindblad,
    propagate_schrodinger,
    propagate_stochastic,
    pulse_statistics,
)
from .bounds import (
    BoundReport,
    eigenstate_initial_condition,
    evaluate_bounds,
    min_variance_over_phases,
    purity_lower_bound,
    scaling_bound,
    time_lower_bound,
    variance_gradient_bound_check,
)
from .grape import SynthesisConfig, SynthesisResult, fidelity, fidelity_gradient, synthesize

__version__ = "0.1.0"

__all__ = [
    "AmplitudePhaseState",
    "BACKEND",
    "BoundReport",
    "ControlPulse",
    "DensityMatrix",
    "ModelSystem",
    "Operator",
    "PulseStatistics",
    "SynthesisConfig",
    "SynthesisResult",
    "TrajectoryRecord",
    "TransformationSpec",
    "aux_operator",
    "commutator",
    "delta_r_norm",
    "double_well_model",
    "eigenstate_initial_condition",
    "evaluate_bounds",
    "fidelity",
    "fidelity_gradient",
    "first_passage_time",
    "lie_closure_rank",
    "max_abs_eigenvalue",
    "min_variance_over_phases",
    "propagate_lindblad",
    "propagate_schrodinger",
    "propagate_stochastic",
    "pulse_statistics",
    "purity",
    "purity_loss_rate",
    "purity_lower_bound",
    "scaling_bound",
    "spin_coherent_state",
    "su2_generators",
    "synthesize",
    "time_lower_bound",
    "to_eigenbasis",
    "variance",
    "variance_gradient_bound_check",
    "__version__",
]
