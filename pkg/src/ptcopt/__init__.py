"""Predict-then-calibrate robust contextual linear programming."""

from .calibrate import (
    BoxCalibration,
    EllipsoidCalibration,
    SplitIndices,
    box_scores,
    buq_fit,
    conformal_eta,
    ellipsoid_scores,
    euq_fit,
    individual_fit,
    load_calibration,
    residuals,
    sample_conditional,
    save_calibration,
    set_at,
    split_validation,
)
from .dro import (
    DroConfig,
    KernelSpec,
    default_bandwidth,
    dro_center,
    kernel_weights,
    solve_dro,
)
from .predictors import (
    Dataset,
    PredictorConfig,
    QuantileConfig,
    QuantileModel,
    fit_predictor,
    fit_quantile,
    load_model,
    predict,
    predict_batch,
    save_model,
)
from .problems import (
    ProblemInstance,
    gen_knapsack,
    gen_knapsack_constraints,
    gen_shortest_path,
    gen_toy,
    oracle_prob_zero,
    oracle_toy_set,
    oracle_toy_solution,
    regularized_gamma_p,
    shortest_path_constraints,
)
from .robust import (
    Constraints,
    CvarSolution,
    RobustProblem,
    RobustSolution,
    check_guarantee,
    solve_cvar_lp,
    solve_robust,
    worst_case_objective,
)
from .sets import Box, Ellipsoid, NormBall, UncertaintySet
from .solver import (
    FwOptions,
    LpProblem,
    LpSolution,
    LpStatus,
    PsdFactor,
    cholesky_jittered,
    mahalanobis,
    solve_lin_plus_norm,
    solve_lp_simplex,
)

__version__ = "0.1.0"
