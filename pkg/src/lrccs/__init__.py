"""Low-rank column-wise compressive sensing and phase retrieval solvers."""
from .baselines import run_altmin
from .exceptions import (
    ContractViolation,
    DimensionError,
    InfeasibleLSError,
    InfeasibleSplitError,
    LrccsError,
    SingularStepError,
    SolverError,
)
from .federated import CommLedger, Topology, closed_form_comm, partition_columns, run_federated
from .gdmin import FactoredEstimate, GdConfig, run_altgdmin
from .initialization import InitConfig, lrpr_init, truncated_init
from .lrpr import RwfConfig, run_altgdmin_lrpr
from .metrics import RunTrace, matrix_rel_err, subspace_distance
from .model import (
    GroundTruth,
    MagnitudeSet,
    MeasurementSet,
    Problem,
    ProblemDims,
    gen_ground_truth,
    gen_measurements,
    load_problem,
    magnitudes_of,
    save_problem,
    split_for_sampling,
)

__version__ = "0.1.0"

__all__ = [
    "CommLedger", "ContractViolation", "DimensionError", "FactoredEstimate", "GdConfig",
    "GroundTruth", "InfeasibleLSError", "InfeasibleSplitError", "InitConfig", "LrccsError",
    "MagnitudeSet", "MeasurementSet", "Problem", "ProblemDims", "RunTrace", "RwfConfig",
    "SingularStepError", "SolverError", "Topology", "closed_form_comm", "gen_ground_truth",
    "gen_measurements", "load_problem", "lrpr_init", "magnitudes_of", "matrix_rel_err",
    "partition_columns", "run_altgdmin", "run_altgdmin_lrpr", "run_altmin", "run_federated",
    "save_problem", "split_for_sampling", "subspace_distance", "truncated_init",
]
