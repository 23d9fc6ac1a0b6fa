"""Receding-horizon trajectory tracking built on the affine-recourse program.

Per control step the controller forms the deviation from the reference,
stacks the predicted disturbance mean (measured wind, optional learned
residual forecast, minus the reference acceleration feedforward), solves the
finite-horizon program and applies the first nominal input on top of the
trim input.

The model is linearized about a trim equilibrium: the tilted attitude and
collective thrust that balance gravity plus the measured wind. With no
velocity-dependent aerodynamics in the model the discrete Jacobians are
invariant to position and velocity, so one trim serves every step and every
reference point; the trim is rebuilt only when the measured wind drifts by
more than a threshold. Linearizing at the trim rather than at level hover
matters under strong wind: the vehicle flies tilted there, and a level-hover
model carries a constant second-order thrust error that shows up as steady
tracking bias no disturbance forecast can remove.

Between rebuilds the quadratic cost operators, the recourse Hessian and the
constraint rows are constant; only the linear cost term and (when finite
state boxes are active) some right-hand sides change per step, so a step
costs a few matrix-vector products plus the warm-started solve.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .dynamics import (
    DISTURBANCE_DIM,
    INPUT_DIM,
    QUAT,
    STATE_DIM,
    PhysicalParams,
    hover_state,
    linearize,
    stack_prediction,
)
from .agent import DEFAULT_H1, DEFAULT_H2
from .reference import ReferenceTrajectory
from .smpc import (
    AffinePolicy,
    ConstraintSet,
    CostWeights,
    DisturbanceStats,
    assemble_constraints,
    assemble_cost,
    cost_operators,
    policy_sizes,
    riccati_terminal_weight,
    split_decision,
)


def trim_for_wind(params: PhysicalParams, wind: np.ndarray):
    """Equilibrium (state, thrusts) balancing gravity plus a constant wind.

    The body z axis tilts onto the required specific-thrust direction with no
    yaw; all four rotors share the collective equally so the torque is zero.
    Returns (x_trim, thrusts_trim). Raises if the wind demands more collective
    than the rotors can give.
    """
    wind = np.asarray(wind, dtype=float)
    n_vec = np.array([0.0, 0.0, params.gravity]) - wind
    norm = float(np.linalg.norm(n_vec))
    collective = params.mass * norm
    per_rotor = collective / 4.0
    if not 0.0 < per_rotor < params.thrust_max:
        raise ValueError(
            f"wind {wind} needs {per_rotor:.2f} N per rotor; available (0, {params.thrust_max})"
        )
    n_hat = n_vec / norm
    axis = np.array([-n_hat[1], n_hat[0], 0.0])  # z_hat x n_hat
    s = float(np.linalg.norm(axis))
    if s < 1e-12:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    else:
        angle = float(np.arctan2(s, n_hat[2]))
        half = 0.5 * angle
        q = np.concatenate([[np.cos(half)], np.sin(half) * axis / s])
    x_trim = hover_state()
    x_trim[QUAT] = q
    return x_trim, np.full(4, per_rotor)


@dataclass
class ControllerConfig:
    """Horizon, weights, residual model and solver settings for tracking."""

    horizon: int = 8
    dt: float = 0.05
    q_state: np.ndarray = field(default_factory=lambda: DEFAULT_H1.copy())
    r_input: np.ndarray = field(default_factory=lambda: DEFAULT_H2.copy())
    residual_std: np.ndarray = field(default_factory=lambda: np.full(3, 0.25))
    w_box: np.ndarray = field(default_factory=lambda: np.zeros(3))
    x_max: np.ndarray = field(default_factory=lambda: np.full(STATE_DIM, np.inf))
    xf_max: np.ndarray = field(default_factory=lambda: np.full(STATE_DIM, np.inf))
    solver: qp.QpSettings = field(default_factory=qp.QpSettings)
    trim_to_wind: bool = True
    trim_threshold: float = 0.3

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.trim_threshold <= 0.0:
            raise ValueError("trim_threshold must be positive")
        self.q_state = np.asarray(self.q_state, dtype=float)
        self.r_input = np.asarray(self.r_input, dtype=float)
        self.residual_std = np.asarray(self.residual_std, dtype=float)
        if self.residual_std.shape != (DISTURBANCE_DIM,) or np.any(self.residual_std < 0.0):
            raise ValueError("residual_std must be three non-negative entries")


@dataclass
class StepInfo:
    """Telemetry for one control step."""

    status: str
    solve_time: float
    iterations: int
    value: float
    used_fallback: bool
    retrimmed: bool = False
    policy: AffinePolicy | None = field(repr=False, default=None)


class RecedingHorizonController:
    """Tracks a reference by repeatedly solving the affine-recourse program."""

    def __init__(
        self,
        params: PhysicalParams,
        reference: ReferenceTrajectory,
        config: ControllerConfig | None = None,
    ):
        self.params = params
        self.reference = reference
        self.config = config or ControllerConfig()
        c = self.config
        n = c.horizon
        self._cov = np.kron(np.eye(n), np.diag(c.residual_std**2))
        self._zero_mu = np.zeros(n * DISTURBANCE_DIM)
        self._warm_x: np.ndarray | None = None
        self._warm_y: np.ndarray | None = None
        self._fallback: AffinePolicy | None = None
        self._fallback_stage = 0
        self._rebuild(np.zeros(3))

    # -- trim-dependent assembly ------------------------------------------
    def _rebuild(self, trim_wind: np.ndarray) -> None:
        """Relinearize about the wind-trim equilibrium and rebuild operators."""
        c = self.config
        self._trim_wind = np.asarray(trim_wind, dtype=float).copy()
        self._x_trim, self._u_trim = trim_for_wind(self.params, self._trim_wind)
        a, b, g = linearize(
            self._x_trim,
            self._u_trim,
            c.dt,
            self.params,
            e_f=self.params.mass * self._trim_wind,
        )
        self.pred = stack_prediction(a, b, g, c.horizon)
        p_term = riccati_terminal_weight(a, b, np.diag(c.q_state), np.diag(c.r_input))
        self.weights = CostWeights(np.diag(c.q_state), np.diag(c.r_input), p_term)
        self.cons = ConstraintSet(
            x_max=c.x_max,
            u_min=-self._u_trim,
            u_max=self.params.thrust_max - self._u_trim,
            xf_max=c.xf_max,
            w_box=c.w_box,
        )

        stats0 = DisturbanceStats(self._zero_mu, self._cov)
        zero_x = np.zeros(STATE_DIM)
        self._p_core, self._q_cov, self._c0_cov = assemble_cost(
            zero_x, self.pred, self.weights, stats0
        )
        self._h_x, self._h_u, self._h_w = cost_operators(self.pred, self.weights)
        self._n_m, self._n_v = policy_sizes(self.pred)
        self._state_rows_static = not (
            np.any(np.isfinite(c.x_max)) or np.any(np.isfinite(c.xf_max))
        )
        mats = assemble_constraints(zero_x, self.pred, self.cons, stats0)
        self._static_mats = mats
        width = self._n_m + self._n_v + mats.n_aux
        p_full = np.zeros((width, width))
        p_full[: self._p_core.shape[0], : self._p_core.shape[1]] = self._p_core
        self._p_full = p_full
        self._width = width
        self._warm_x = None
        self._warm_y = None

    def _maybe_retrim(self, wind_meas: np.ndarray) -> bool:
        if not self.config.trim_to_wind:
            return False
        if np.max(np.abs(wind_meas - self._trim_wind)) <= self.config.trim_threshold:
            return False
        self._rebuild(wind_meas)
        return True

    def internal_reference(self, t: float) -> np.ndarray:
        """Reference state with the trim attitude substituted.

        The vehicle must hold the trim tilt to fight the wind, so deviations
        are measured about it; position and velocity still come from the
        commanded trajectory.
        """
        ref = self.reference.state(t)
        ref[QUAT] = self._x_trim[QUAT]
        return ref

    # -- per-step assembly -------------------------------------------------
    def disturbance_mean(
        self,
        t: float,
        wind_meas: np.ndarray,
        residual_forecast: np.ndarray | None,
    ) -> np.ndarray:
        """Stacked per-stage channel mean: untrimmed wind + forecast - ref accel."""
        c = self.config
        n = c.horizon
        wind_meas = np.asarray(wind_meas, dtype=float)
        if residual_forecast is None:
            forecast = np.zeros((n, DISTURBANCE_DIM))
        else:
            forecast = np.asarray(residual_forecast, dtype=float).reshape(n, DISTURBANCE_DIM)
        base = wind_meas - self._trim_wind
        mu = np.empty((n, DISTURBANCE_DIM))
        for i in range(n):
            mu[i] = base + forecast[i] - self.reference.acceleration(t + i * c.dt)
        return mu.ravel()

    def step(
        self,
        x: np.ndarray,
        t: float,
        wind_meas: np.ndarray,
        residual_forecast: np.ndarray | None = None,
    ) -> tuple[np.ndarray, StepInfo]:
        """One control step; returns absolute rotor thrusts and telemetry."""
        t0 = time.perf_counter()
        x = np.asarray(x, dtype=float)
        wind_meas = np.asarray(wind_meas, dtype=float)
        retrimmed = self._maybe_retrim(wind_meas)
        dx0 = x - self.internal_reference(t)
        mu = self.disturbance_mean(t, wind_meas, residual_forecast)
        stats = DisturbanceStats(mu, self._cov)

        e_det = self._h_x @ dx0 + self._h_w @ mu
        q_vec = np.zeros(self._width)
        q_vec[: self._n_m + self._n_v] = self._q_cov
        q_vec[self._n_m : self._n_m + self._n_v] += 2.0 * self._h_u.T @ e_det
        c0 = self._c0_cov + float(e_det @ e_det)

        if self._state_rows_static:
            mats = self._static_mats
        else:
            mats = assemble_constraints(dx0, self.pred, self.cons, stats)
        problem = qp.QpProblem(self._p_full, q_vec, a_in=mats.a_in, b_in=mats.b_in)

        warm_x = self._warm_x if self._warm_x is not None and self._warm_x.size == self._width else None
        warm_y = self._warm_y if warm_x is not None else None
        if warm_y is not None and warm_y.size != mats.b_in.size:
            warm_y = None
        sol = qp.solve(problem, self.config.solver, warm_x=warm_x, warm_y=warm_y)

        if sol.status == qp.OPTIMAL:
            policy = split_decision(sol.x[: self._n_m + self._n_v], self.pred)
            u_dev = policy.nominal[0]
            self._warm_x = sol.x
            self._warm_y = sol.y_in
            self._fallback = policy
            self._fallback_stage = 1
            used_fallback = False
        else:
            policy = None
            used_fallback = True
            if self._fallback is not None and self._fallback_stage < self._fallback.horizon:
                u_dev = self._fallback.nominal[self._fallback_stage]
                self._fallback_stage += 1
            else:
                u_dev = np.zeros(INPUT_DIM)

        thrusts = np.clip(self._u_trim + u_dev, 0.0, self.params.thrust_max)
        info = StepInfo(
            status=sol.status,
            solve_time=time.perf_counter() - t0,
            iterations=sol.iterations,
            value=sol.objective + c0,
            used_fallback=used_fallback,
            retrimmed=retrimmed,
            policy=policy,
        )
        return thrusts, info

    def reset(self) -> None:
        """Drop warm starts and the fallback plan (new episode)."""
        self._warm_x = None
        self._warm_y = None
        self._fallback = None
        self._fallback_stage = 0


def receding_horizon_step(
    controller: RecedingHorizonController,
    x: np.ndarray,
    t: float,
    wind_meas: np.ndarray,
    residual_forecast: np.ndarray | None = None,
) -> tuple[np.ndarray, StepInfo]:
    """Functional wrapper over ``RecedingHorizonController.step``."""
    return controller.step(x, t, wind_meas, residual_forecast)
