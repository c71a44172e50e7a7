"""Community recovery for mean-field interacting binary chains."""

from .estimator import RecoveryResult, RecoveryScore, kmeans2, recover, score, sigma_hat
from .model import (
    DEFAULT_PARAMS,
    CommunityLayout,
    Environment,
    ModelParams,
    ParameterError,
    build_layout,
    sample_environment,
    signed_matrix,
    theoretical_constants,
    validate_params,
)
from .oracle import OracleQuantities, compute_oracle
from .simulator import SimConfig, Trajectory, simulate, summarize

__version__ = "0.1.0"
