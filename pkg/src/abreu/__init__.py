"""Radial (O(n)-invariant) solutions of Abreu's equation: integration,
branch-point classification and finite-difference verification."""

__version__ = "0.1.0"

from .model import (
    ClosedFormN1Params,
    DomainError,
    ModelParams,
    State,
    closed_form_n1,
    exact_lambda0,
    first_integral_residual,
    inner_expression,
    rhs_log_form,
    rhs_second_order,
    third_order_residual,
)
from .series import (
    Algebraic,
    ConstAsymptote,
    DecayAsymptote,
    ExactPole,
    Logarithmic,
    RegularA,
    RegularB,
    UnidentifiedBehavior,
    Vanishing,
    branch_series_eval,
    fit_origin_behavior,
    infinity_series_eval,
    log_branch_coefficient,
    origin_series_eval,
)
from .integrate import (
    BlowUp,
    IntegrationError,
    IntegratorConfig,
    ReachedBound,
    StationaryF,
    StepCollapse,
    Trajectory,
    VanishingF,
    detect_asymptote,
    integrate,
    potential,
    seed_from_origin,
)
from .singularity import SingularityReport, UnclassifiedBranch, branch_sign_check, classify_branch
from .classify import (
    ClassificationOutcome,
    TheoremCase,
    check_lemma,
    classify,
    classify_backward,
    classify_forward,
    scan,
    theorem_case,
)
from .geometry import (
    HessianPair,
    PolytopePotential,
    curvature_scan,
    hessian_from_radial,
    pde_residual_radial,
    polytope_hessian,
    radial_inverse_hessian,
)
