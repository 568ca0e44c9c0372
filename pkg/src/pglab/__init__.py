"""Performance gradients of parameterized Markov chains and POMDPs.

Three layers: exact linear-algebra gradients (chain), single-path trace
estimators for the same quantities (estimators), and diagnostics relating
the two (analysis). The modelfile/cli pair wraps them for batch runs.
"""

from .analysis import (
    AppendixAReport,
    BoundReport,
    SpectralReport,
    SweepRecord,
    appendix_a_scenario,
    bias_angle_deg,
    bias_variance_sweep,
    check_bound,
    grad_sqrt_pi,
    spectral_report,
    td1_fixed_point,
)
from .chain import (
    ParamChain,
    average_reward,
    check_stochastic,
    discounted_value,
    exact_grad_eta,
    grad_beta_eta,
    grad_j_beta,
    grad_pi,
    likelihood_ratios,
    make_constant_chain,
    make_softmax_table_chain,
    stationary_distribution,
)
from .errors import (
    CycleTimeout,
    DecompositionFailure,
    DegenerateFeatures,
    DegenerateGradient,
    DimensionMismatch,
    InvalidDiscount,
    MissingSecondDerivatives,
    NonUniqueStationary,
    NotDistinct,
    ParseError,
    PglabError,
    RewardKindMismatch,
    SingularSystem,
    UnboundedRewardGradient,
    ValidationError,
    WindowTooLarge,
    ZeroProbabilityTransition,
)
from .estimators import (
    GradientEstimate,
    ParamReward,
    control_reward_run,
    gpomdp_run,
    hessian_run,
    mcg_run,
    multi_agent_run,
    param_reward_run,
    reinforce_regenerative_run,
    simulate_chain_states,
    simulate_pomdp_path,
    truncated_trace_run,
    vaps_reward,
)
from .modelfile import (
    ModelSpecFile,
    build_model,
    bundled_model_path,
    parse_model,
    parse_model_text,
    serialize_model,
)
from .numdiff import central_difference, relative_error
from .pomdp import (
    MultiAgentPomdp,
    PomdpModel,
    PomdpStep,
    SoftmaxPolicy,
    expected_reward_bar,
    induced_chain,
    multi_agent_induced_chain,
    sample_step,
)
from .rng import RunRng, categorical_index, draw_categorical

__version__ = "0.1.0"
