"""Local times of continuous semimartingales: estimators, transforms, SDE solvers, experiments."""

from .coefficients import Coefficient, CoefficientSpec, parse_coefficient
from .experiments import ExperimentReport, ExperimentSpec, experiment_names, run
from .localtime import (
    DominationReport,
    EstimatorConfig,
    LocalTimeCurve,
    balayage_transform,
    domination_diagnostic,
    excursion_comparison,
    local_time,
    lt_boundary,
    lt_occupation,
    lt_tanaka,
    lt_upcrossing,
    occupation_formula_check,
    rn_liminf,
)
from .measure import SignedMeasure, drift_to_measure, parse_measure, scale_function
from .paths import SamplePath, SeedSpec, TimeGrid, sample_brownian, sample_correlated_pair
from .solvers import (
    barlow_phi,
    barlow_residual,
    euler_maruyama,
    lipschitz_envelope,
    local_time_drift_solver,
    min_max_solutions,
    mn_transform,
    perturbed_tanaka_solver,
    reflected_euler,
    skew_walk,
)

__version__ = "0.1.0"
