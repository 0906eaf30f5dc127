"""drcurve: demand-response price-amount curve estimation for data centers.

Samples data-center operation under uncertainty with a two-stage robust
dispatch model and fits Gaussian-process regression models to the resulting
(DR price, DR amount) pairs, with confidence bands and baselines.
"""

__version__ = "0.1.0"

from .casefile import case_digest, load_case, reference_case_path
from .curve import (
    CurveModel,
    CurveQueryResult,
    ErrorReport,
    RegressionTree,
    error_metrics,
    fit_curve,
    fit_tree,
    predict_tree,
    query_curve,
    slice_curve,
)
from .gp import (
    GprModel,
    HyperFit,
    JitterPolicy,
    KernelSpec,
    fit,
    fit_hyperparameters,
    kernel_eval,
    log_marginal_likelihood,
    predict_mean,
    predict_var,
)
from .idc import (
    EssParams,
    FirstStageDecision,
    FlexibleWorkload,
    IdcCase,
    IdcParams,
    SecondStageDecision,
    TimeGrid,
    build_first_stage_program,
    it_power_demand,
    total_power_demand,
)
from .lp import (
    LinearProgram,
    LpSolution,
    MixedBinaryProgram,
    SolverConfig,
    solve_lp,
    solve_milp,
)
from .robust import (
    OperationOutcome,
    operate,
    second_stage_closed_form,
    solve_first_stage,
    solve_second_stage,
)
from .sampling import (
    CandidateGrid,
    SampleSet,
    draw_realization,
    generate_dataset,
    next_price_point,
)
from .uncertainty import QuantityBand, ScenarioRealization, UncertaintyModel

__all__ = [name for name in dir() if not name.startswith("_")]
