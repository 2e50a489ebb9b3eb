"""Security games, advantage estimation and reduction wrappers."""

from .actions import (
    AdversaryProgram,
    DecQuery,
    EncQuery,
    Finish,
    Guess,
    Measure,
    Note,
    OracleQuery,
    Response,
    TrialContext,
    TrialSeeds,
)
from .estimate import (
    AdvantageEstimate,
    ExperimentConfig,
    TrialError,
    estimate_advantage,
    hoeffding_half_width,
    run_arm,
    run_trial,
)
from .games import (
    BudgetExceeded,
    DecSnapshot,
    RestrictionViolation,
    TrialRecord,
    Violation,
    run_qprf_trial,
    run_rop_qscca_trial,
    run_rop_qscpa_trial,
)
from .reductions import ReductionB, ReductionError, ReductionJ, wrap_reduction_B, wrap_reduction_J
