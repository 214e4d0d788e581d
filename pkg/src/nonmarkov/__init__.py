"""Non-Markov multi-state transition probabilities and their inference."""

from .errors import (
    DegenerateWeight,
    DomainError,
    EmptySubgroup,
    NonMarkovError,
    NonpositiveSE,
    ParseError,
    TooManyFailures,
    UndefinedProportion,
    ValidationError,
    ZeroRiskSet,
)
from .model import (
    Cause,
    CompetingRisksRecord,
    Sample,
    StateSpace,
    SubjectPath,
    derive_absorbing_sets,
    illness_death_space,
    reduce_sample,
    reduce_to_competing_risks,
    state_at,
)
from .stepfun import StepFunction
from .estimators import (
    SubgroupEstimate,
    TransitionCurve,
    aj_markov_transition,
    aj_transition_curve,
    aj_cif,
    empirical_proportion,
    estimate_transition,
    kaplan_meier,
    select_subgroup,
    subgroup_estimate,
)
from .simulator import (
    SwitchModel,
    TruthOracle,
    default_model,
    markov_variant,
    matrix_exp,
    simulate_sample,
    simulate_subject,
)

__version__ = "0.1.0"
