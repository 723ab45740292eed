"""doobkit: supermartingale calculus on finite scenario trees under
multiple priors, with decomposition certificates, superhedge pricing, and
instance-level audits of the envelope identities."""

from .space import (
    AdaptedProcess,
    BadCover,
    BadWeights,
    FilteredSpace,
    LengthMismatch,
    Measure,
    MeasureFamily,
    NonRefining,
    ShapeMismatch,
    SpaceError,
    TrivialRootMissing,
    build_space,
    cond_exp,
    cond_exp_cells,
    cond_exp_change_of_measure,
    cond_exp_mixture,
    contract,
    ess_sup_cond_exp,
    ess_sup_cond_exp_cells,
    mixture,
    rho_metric,
    rn_bounds,
)
from .lp import LinearProgram, LpOutcome, NumericalBreakdown, feasible_point, solve
from .regularity import (
    A0Element,
    AlphaInterval,
    Classification,
    CompletenessReport,
    DecompositionReport,
    GapBoundReport,
    MartingaleDelta,
    NotInA0,
    NotLocallyRegular,
    NotSupermartingale,
    OptionalDecomposition,
    PreconditionFailed,
    StepFailure,
    Xi0Step,
    a0_membership,
    alpha_interval,
    classify,
    completeness_check,
    find_a0_element,
    make_a0_element,
    martingale_increments,
    one_step_ratio_cells,
    optional_decompose,
    uniform_gap_bound,
    verify_decomposition,
    xi0_step_alpha,
    xi0_step_lp,
)
from .claims import (
    CLAIM_IDS,
    AuditInstance,
    AuditResult,
    ClaimPreconditionUnmet,
    audit,
    envelope_process,
    search_counterexample,
)
from .pricing import (
    BadBounds,
    EmmReport,
    EmmResult,
    FamilyNotEmm,
    GeneratorNotInA0,
    MarketModel,
    NotMeasurable,
    NotRepresentable,
    PricingInfeasible,
    PricingResult,
    TradingStrategy,
    closed_form_call,
    closed_form_put,
    fair_price_a0,
    fair_price_generators,
    find_emm,
    martingale_representation,
    price_slice_generators,
    superhedge_strategy,
    verify_emm,
)
from .scenario import ClaimSpec, Scenario, SchemaError, load_scenario, parse_scenario

__version__ = "0.1.0"
