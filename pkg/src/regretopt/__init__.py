"""Regret-optimal filtering and control for finite-horizon linear time-varying systems.

Causal policies are synthesized to minimize the worst-case excess cost over
a clairvoyant policy that sees the whole disturbance in advance. H-infinity,
H2 and noncausal baselines, lookahead/delay reductions and nonlinear
benchmarks are included.
"""

from types import ModuleType as _ModuleType

from .exceptions import ConfigurationError, FactorizationError, Infeasible, UnboundedGamma, ValidationError
from .estimators import (
    HinfControllerEstimator,
    HinfFilterEstimator,
    RegretOptimalController,
    RegretOptimalFilter,
)
from .extensions import AugmentationMap, augment, augment_delay, augment_predictions, simulate_delayed
from .factorization import (
    FactorizationResult,
    backward_factor_dual,
    control_delta2,
    estimation_S_factor,
    estimation_T_factor,
    forward_factor,
)
from .hinf import (
    GammaCertificate,
    HinfController,
    HinfFilter,
    bisect_gamma,
    game_riccati,
    h2_controller,
    hinf_controller,
    hinf_estimator,
    kalman_estimator,
    optimal_hinf_controller,
    optimal_hinf_estimator,
)
from .noncausal import (
    RegretReport,
    noncausal_control,
    noncausal_estimate,
    regret_control,
    regret_estimation,
    worst_case_regret_ratio,
)
from .nonlinear import BenchmarkRun, NonlinearModel, ekf_style_loop, fm_model, mpc_loop, pendulum_model
from .regret_controller import RegretController, optimal_regret_controller, synthesize_regret_controller
from .regret_filter import RegretFilter, optimal_regret_filter, synthesize_regret_filter
from .statespace import CausalStateSpaceModel, invert_causal_ss
from .systems import (
    ControlSystem,
    DenseOperator,
    EstimationSystem,
    assemble_control_operators,
    assemble_estimation_operators,
    energy,
    load_system,
    simulate_control,
    simulate_estimation,
)

__version__ = "0.1.0"

__all__ = [name for name, obj in globals().items() if not name.startswith("_") and not isinstance(obj, _ModuleType)]
