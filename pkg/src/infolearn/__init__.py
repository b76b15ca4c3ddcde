"""Information-theoretic bounds for supervised learning, executable.

Closed-form regret / rate-distortion / sample-complexity evaluators, exact
conjugate-Gaussian learners verified by Monte Carlo, and desk-scale
teacher-student SGD sample-complexity experiments.
"""

from .bayes import (
    BayesianLinearModel,
    GaussianPosterior,
    RegretCurve,
    exact_cumulative_info,
    expected_step_kl,
    posterior_update,
    predictive,
    simulate_regret,
)
from .bounds import (
    Bracket,
    RdFunction,
    VacuousBound,
    entropy_bounds,
    linreg_rd,
    linreg_t_eps,
    multilayer_compose,
    multilayer_distortion,
    network_bounds,
    proxy_check,
    regret_bracket,
    sample_complexity_bracket,
    scalar_rd,
    single_layer_rd,
    stability,
)
from .dgp import (
    DirichletNetSpec,
    IndepNetSpec,
    LinRegSpec,
    ScalarEnvSpec,
    TeacherNetwork,
    multinomial_quantize_rows,
    sample_env,
    sample_pair,
    teacher_forward,
)
from .experiment import Gamma, TrialRecord, fit_scaling, q_report, run_trial, sweep
from .info import GaussianDist, kl_from_mse_lower, kl_from_mse_upper, kl_gaussian, max_diff_entropy
from .misspec import (
    excess_kl_bound_mean,
    excess_kl_pathwise_mean,
    missing_feature_agent,
    missing_feature_asymptote,
)
from .nn import MlpModel, QueryCounter, TrainConfig, golden_width_search, mlp_init, train, width_range

__version__ = "0.1.0"
