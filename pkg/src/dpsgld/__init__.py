""" Differentially private training by noisy projected SGD (DP-SGLD), with a Rényi accountant whose bound converges
in the number of iterations, and the oracles that check it. """

from ._accountant import (
    Calibration,
    PrivacyParams,
    PrivacyReport,
    alpha_grid,
    asymptote,
    calibrate_decreasing,
    calibrate_dp,
    calibrate_dp_decreasing,
    calibrate_rdp,
    closed_form_alpha,
    composition_baseline,
    composition_report,
    optimize_alpha,
    privacy_report,
    rdp_clsi,
    rdp_constant,
    rdp_decreasing,
    rdp_general,
    rdp_recursion,
    rdp_recursion_path,
    regime_ratio,
    to_dp,
    utility_bound_dp,
    utility_bound_dp_decreasing,
    utility_bound_rdp,
    utility_bound_rdp_decreasing,
)
from ._commands import (
    ReportBundle,
    VerifyReport,
    cmd_account,
    cmd_bench,
    cmd_calibrate,
    cmd_schema,
    cmd_train,
    cmd_verify,
    prepare,
)
from ._config import RunConfigFile, load_config
from ._errors import (
    ConfigurationError,
    ConvergenceError,
    DpsgldError,
    InfeasibleCalibrationError,
    InvalidInputError,
    NumericDivergenceError,
    NumericError,
    ParseError,
    PreconditionError,
    VerificationError,
)
from ._io import load_csv, make_blobs
from ._losses import LogisticModel, LossConstants, LossModel, QuadraticModel, default_radius
from ._oracle import (
    GaussianState,
    PrivacyOracleReport,
    UtilityReport,
    avg_risk_mc,
    excess_risk_mc,
    gaussian_moments,
    privacy_oracle_check,
    renyi_gaussian_isotropic,
    risk_bound_decreasing,
    risk_bound_fixed,
    risk_envelope_fixed,
    solve_optimum,
    xi_squared,
)
from ._sgld import Method, TrainConfig, Trajectory, dp_sgd_train, dp_sgld_train, sgd_train, train
from ._types import (
    Batch,
    Constant,
    Dataset,
    Decreasing,
    Explicit,
    L2Ball,
    RunSeed,
    StepSchedule,
    check_schedule,
    project,
    schedule_eta,
    schedule_sum,
)

__version__ = "0.1.0"

__all__ = [
    "Calibration",
    "PrivacyParams",
    "PrivacyReport",
    "alpha_grid",
    "asymptote",
    "calibrate_decreasing",
    "calibrate_dp",
    "calibrate_dp_decreasing",
    "calibrate_rdp",
    "closed_form_alpha",
    "composition_baseline",
    "composition_report",
    "optimize_alpha",
    "privacy_report",
    "rdp_clsi",
    "rdp_constant",
    "rdp_decreasing",
    "rdp_general",
    "rdp_recursion",
    "rdp_recursion_path",
    "regime_ratio",
    "to_dp",
    "utility_bound_dp",
    "utility_bound_dp_decreasing",
    "utility_bound_rdp",
    "utility_bound_rdp_decreasing",
    "ReportBundle",
    "VerifyReport",
    "cmd_account",
    "cmd_bench",
    "cmd_calibrate",
    "cmd_schema",
    "cmd_train",
    "cmd_verify",
    "prepare",
    "RunConfigFile",
    "load_config",
    "ConfigurationError",
    "ConvergenceError",
    "DpsgldError",
    "InfeasibleCalibrationError",
    "InvalidInputError",
    "NumericDivergenceError",
    "NumericError",
    "ParseError",
    "PreconditionError",
    "VerificationError",
    "load_csv",
    "make_blobs",
    "LogisticModel",
    "LossConstants",
    "LossModel",
    "QuadraticModel",
    "default_radius",
    "GaussianState",
    "PrivacyOracleReport",
    "UtilityReport",
    "avg_risk_mc",
    "excess_risk_mc",
    "gaussian_moments",
    "privacy_oracle_check",
    "renyi_gaussian_isotropic",
    "risk_bound_decreasing",
    "risk_bound_fixed",
    "risk_envelope_fixed",
    "solve_optimum",
    "xi_squared",
    "Method",
    "TrainConfig",
    "Trajectory",
    "dp_sgd_train",
    "dp_sgld_train",
    "sgd_train",
    "train",
    "Batch",
    "Constant",
    "Dataset",
    "Decreasing",
    "Explicit",
    "L2Ball",
    "RunSeed",
    "StepSchedule",
    "check_schedule",
    "project",
    "schedule_eta",
    "schedule_sum",
]
