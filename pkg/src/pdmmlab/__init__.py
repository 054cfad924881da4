"""Simulator for synchronous and asynchronous PDMM with subspace-perturbation
privacy diagnostics."""

__version__ = "0.1.0"

from .algebra import (
    BoundCurve,
    ConstraintSystem,
    SubspaceProjector,
    bound_curve,
    build_constraint_system,
    expected_zperp,
    subspace_projector,
)
from .graph import Graph, GraphError, directed_slot, generate_rgg, is_connected, load_graph, save_graph
from .pdmm import (
    ConsensusCost,
    LinearRegressionCost,
    PdmmConfig,
    PdmmState,
    Schedule,
    Scheme,
    Transcript,
    initial_state,
    local_x_solve,
    make_schedule,
    run,
    run_batch,
    stochastic_step,
    sync_step,
)
from .privacy import (
    EnsembleSpec,
    EnsembleStats,
    MiEstimate,
    VacuousSubspaceWarning,
    adversary_observation,
    estimate_mi,
    mean_trajectory_check,
    run_ensemble,
    subspace_variance,
    verify_bound,
)
