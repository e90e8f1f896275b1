"""Reflected interacting diffusions on [0,1] with a prescribed ensemble mean.

Two independent computational routes to the same object: an N-particle
projected Euler scheme whose per-step projection enforces the box and the
empirical-mean constraint exactly, and a finite-volume solver for the
limiting nonlinear Fokker-Planck equation.  Metrics and scenario runners
compare the two.
"""

__version__ = "0.1.0"

from .fpe import DensityGrid, fpe_step, kdot_from_density, solve_fpe, solve_neumann_fpe
from .metrics import (
    BVReport,
    ContractionResult,
    RateTable,
    bv_holder_report,
    contraction_test,
    rate_study,
    w2_density_density,
    w2_empirical_density,
    w2_empirical_empirical,
)
from .model import (
    DriftModel,
    InitialLaw,
    MeanSchedule,
    ProblemSpec,
    ValidationReport,
    constant_schedule,
    double_well_log_drift,
    linear_drift,
    one_sided_lipschitz_constant,
    recenter_initial,
    regularize,
    tabulated_drift,
    validate_conditions,
    zero_drift,
)
from .particles import (
    ParticleEnsemble,
    RunRecord,
    StepReport,
    simulate,
    simulate_coupled,
    simulate_no_interaction,
    step,
)
from .projection import (
    ConeDecomposition,
    FaceNormal,
    ProjectionResult,
    decompose_as_cone,
    face_normal,
    project_constrained,
)

__all__ = [name for name in dir() if not name.startswith("_")]
