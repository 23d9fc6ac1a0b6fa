"""Quadrotor trajectory tracking with learned disturbance forecasts.

Layers, bottom up:

- ``dynamics``: rigid-body quadrotor model, RK4 stepping, linearization and
  stacked prediction operators.
- ``wind``: episode disturbance scenarios (piecewise aero mean, bounded
  residual, noisy measurement).
- ``nets`` / ``quantiles`` / ``tabular``: minimal numpy MLPs, quantile
  distribution tools and the tabular distributional control oracle.
- ``agent`` / ``envs``: the quantile-critic forecaster and its training
  environments.
- ``qp`` / ``smpc`` / ``controller``: dense convex QP solver, the
  affine-recourse stochastic program, and the receding-horizon tracker.
- ``reference`` / ``harness`` / ``config`` / ``cli``: trajectories, the
  closed-loop benchmark, and the command line.
"""

from .agent import AgentConfig, EstimatorAgent, OptionSet, ReplayBuffer, reward, train
from .controller import ControllerConfig, RecedingHorizonController, receding_horizon_step
from .dynamics import (
    DISTURBANCE_DIM,
    INPUT_DIM,
    STATE_DIM,
    LinearPrediction,
    PhysicalParams,
    QuadState,
    continuous_dynamics,
    hover_state,
    linearize,
    stack_prediction,
    step_rk4,
)
from .envs import QuadrotorRegulationEnv, ToyIntegratorEnv, make_observation
from .harness import (
    BenchScenario,
    EpisodeConfig,
    EpisodeResult,
    compare_methods,
    default_scenarios,
    run_episode,
)
from .qp import QpProblem, QpSettings, QpSolution, check_kkt
from .qp import solve as solve_qp
from .quantiles import (
    QuantileDistribution,
    project_w1,
    quantile_huber_loss,
    quantile_midpoints,
    wasserstein_distance,
)
from .reference import ReferenceTrajectory, make_reference, validate_feasibility
from .smpc import (
    AffinePolicy,
    ConstraintSet,
    CostWeights,
    DisturbanceStats,
    policy_to_input,
    riccati_terminal_weight,
    solve_affine_policy,
)
from .wind import WindScenario, aero_force, measured_wind, sample_residual

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "AffinePolicy",
    "BenchScenario",
    "ConstraintSet",
    "ControllerConfig",
    "CostWeights",
    "DISTURBANCE_DIM",
    "DisturbanceStats",
    "EpisodeConfig",
    "EpisodeResult",
    "EstimatorAgent",
    "INPUT_DIM",
    "LinearPrediction",
    "OptionSet",
    "PhysicalParams",
    "QpProblem",
    "QpSettings",
    "QpSolution",
    "QuadState",
    "QuadrotorRegulationEnv",
    "QuantileDistribution",
    "RecedingHorizonController",
    "ReferenceTrajectory",
    "ReplayBuffer",
    "STATE_DIM",
    "ToyIntegratorEnv",
    "WindScenario",
    "aero_force",
    "check_kkt",
    "compare_methods",
    "continuous_dynamics",
    "default_scenarios",
    "hover_state",
    "linearize",
    "make_observation",
    "make_reference",
    "measured_wind",
    "policy_to_input",
    "project_w1",
    "quantile_huber_loss",
    "quantile_midpoints",
    "receding_horizon_step",
    "reward",
    "riccati_terminal_weight",
    "run_episode",
    "sample_residual",
    "solve_qp",
    "solve_affine_policy",
    "stack_prediction",
    "step_rk4",
    "train",
    "validate_feasibility",
    "wasserstein_distance",
]
