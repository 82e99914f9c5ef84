"""Matrix-geometric performance model of PBFT consensus as a QBD process."""

from .errors import (
    IterationLimitError,
    ParameterError,
    PBFTModelError,
    SimConfigError,
    SingularSystemError,
    StabilityError,
    TruncationError,
)
from .metrics import PerformanceMetrics, evaluate_all
from .model import GeneratorBlocks, ModelParams, build_blocks, build_params, utilization
from .oracle import TruncatedSolution, oracle_metrics, truncated_stationary
from .simulator import SimConfig, SimEstimates, simulate
from .solver import (
    RateMatrix,
    StabilityReport,
    StationarySolution,
    check_stability,
    compute_rate_matrix,
    solve_boundary,
    stationary_level,
)

__version__ = "0.1.0"
