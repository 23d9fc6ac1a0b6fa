"""Training environments for the disturbance estimator.

Both environments follow the same protocol: ``reset() -> s``,
``step(a) -> (s_next, reward, done)``, plus ``episode_len``. The agent's
action is a horizon-long forecast of the unmodeled disturbance; the
environment consumes only its effect on the next step (closed loop consumes
one block per step), rewarding forecasts that cancel the real residual.

The quadrotor environment flies a cascade PD controller rather than the
receding-horizon optimizer so that training rollouts are cheap; the
controller compensates the measured wind plus the agent's first forecast
block, which gives the agent the same credit-assignment structure it faces
under the optimizer: residual left uncancelled shows up as tracking error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import DEFAULT_H1, DEFAULT_H2, reward
from .dynamics import (
    DISTURBANCE_DIM,
    POS,
    QUAT,
    RATES,
    VEL,
    PhysicalParams,
    hover_state,
    quat_rotate,
    step_rk4,
)


def make_observation(x: np.ndarray, x_ref: np.ndarray, wind_meas: np.ndarray) -> np.ndarray:
    """Estimator observation: tracking deviation stacked with measured wind."""
    return np.concatenate([np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float),
                           np.asarray(wind_meas, dtype=float)])


class ToyIntegratorEnv:
    """Scalar leaky integrator with a constant per-episode disturbance.

    x+ = x + dt * (u + w), with u = -k*x - a where ``a`` is the agent's
    forecast of w. Perfect forecasting (a = w) cancels the disturbance and
    the regulated return approaches the disturbance-free optimum, which is
    computable in closed form for testing.
    """

    def __init__(
        self,
        dt: float = 0.1,
        k: float = 1.0,
        episode_len: int = 40,
        disturbance_bound: float = 2.0,
        meas_std: float = 0.05,
        h1: float = 1.0,
        h2: float = 0.05,
        seed: int = 0,
    ):
        self.dt = dt
        self.k = k
        self.episode_len = episode_len
        self.disturbance_bound = disturbance_bound
        self.meas_std = meas_std
        self.h1 = h1
        self.h2 = h2
        self.rng = np.random.default_rng(seed)
        self.state_dim = 2  # [x, measured w]
        self.action_dim = 1
        self._x = 0.0
        self._w = 0.0
        self._w_meas = 0.0

    def _obs(self) -> np.ndarray:
        return np.array([self._x, self._w_meas])

    def reset(self) -> np.ndarray:
        self._x = float(self.rng.uniform(-1.0, 1.0))
        self._w = float(self.rng.uniform(-self.disturbance_bound, self.disturbance_bound))
        self._w_meas = self._w + float(self.rng.normal(0.0, self.meas_std))
        return self._obs()

    def step(self, action: np.ndarray):
        a = float(np.asarray(action).ravel()[0])
        u = -self.k * self._x - a
        r = -self.h1 * self._x * self._x - self.h2 * u * u
        self._x = self._x + self.dt * (u + self._w)
        self._w_meas = self._w + float(self.rng.normal(0.0, self.meas_std))
        return self._obs(), r, False

    def rollout_return(self, policy, x0: float, w: float) -> float:
        """Deterministic return of ``policy(x, w) -> a`` from a known start."""
        x = x0
        total = 0.0
        for _ in range(self.episode_len):
            a = float(policy(x, w))
            u = -self.k * x - a
            total += -self.h1 * x * x - self.h2 * u * u
            x = x + self.dt * (u + w)
        return total


@dataclass
class CascadeGains:
    """Position/attitude PD gains for the training-time flight controller."""

    kp_pos: float = 8.0
    kd_pos: float = 4.0
    k_att: float = 150.0
    k_rate: float = 25.0


def _quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


class CascadeController:
    """Geometric PD flight controller with acceleration feedforward.

    The position loop produces a desired world-frame thrust vector (gravity
    plus PD plus feedforward minus the compensated disturbance estimate); the
    attitude loop tilts the body z axis onto it and damps yaw.
    """

    def __init__(self, params: PhysicalParams, gains: CascadeGains | None = None):
        self.params = params
        self.gains = gains or CascadeGains()
        self._mixer = params.full_mixer()

    def command(
        self,
        x: np.ndarray,
        pos_ref: np.ndarray,
        vel_ref: np.ndarray,
        acc_ref: np.ndarray,
        disturbance_est: np.ndarray,
    ) -> np.ndarray:
        g = self.gains
        p = self.params
        x = np.asarray(x, dtype=float)
        q = x[QUAT] / np.linalg.norm(x[QUAT])
        e_p = np.asarray(pos_ref, dtype=float) - x[POS]
        e_v = np.asarray(vel_ref, dtype=float) - x[VEL]
        a_des = g.kp_pos * e_p + g.kd_pos * e_v + np.asarray(acc_ref, dtype=float) - disturbance_est
        f_world = p.mass * (a_des + np.array([0.0, 0.0, p.gravity]))
        f_norm = float(np.linalg.norm(f_world))
        if f_norm < 1e-6:
            f_world = np.array([0.0, 0.0, 1e-6])
            f_norm = 1e-6
        z_des = f_world / f_norm
        z_body = quat_rotate(q, np.array([0.0, 0.0, 1.0]))
        collective = float(f_world @ z_body)

        tilt_axis_world = np.cross(z_body, z_des)
        tilt_axis_body = quat_rotate(_quat_conj(q), tilt_axis_world)
        e_att = np.array([tilt_axis_body[0], tilt_axis_body[1], 0.0])
        torque = np.asarray(p.inertia_diag) * (g.k_att * e_att - g.k_rate * x[RATES])

        wrench = np.concatenate([[collective], torque])
        thrusts = np.linalg.solve(self._mixer, wrench)
        return np.clip(thrusts, 0.0, p.thrust_max)


@dataclass
class RegulationEnvConfig:
    dt: float = 0.05
    episode_len: int = 60
    force_low: float = -3.0
    force_high: float = 3.0
    residual_frac: float = 0.25
    residual_noise_std: float = 0.25
    meas_std: float = 0.05
    init_pos_std: float = 0.2
    init_vel_std: float = 0.2
    h1: np.ndarray = field(default_factory=lambda: DEFAULT_H1.copy())
    h2: np.ndarray = field(default_factory=lambda: DEFAULT_H2.copy())
    seed: int = 0


class QuadrotorRegulationEnv:
    """Hover regulation under wind whose mean the wind sensor underestimates.

    Each episode draws a constant aerodynamic acceleration per axis from
    ``U[force_low, force_high]``. The wind sensor reports it with noise; on
    top the plant sees an unmodeled residual whose mean is ``residual_frac``
    of the aerodynamic value, so forecasting that residual is exactly what
    closes the remaining tracking gap. The observation is the deviation state
    stacked with the measured wind; the action is an ``n_horizon``-block
    residual forecast of which the first block is compensated each step.
    """

    def __init__(
        self,
        params: PhysicalParams | None = None,
        config: RegulationEnvConfig | None = None,
        n_horizon: int = 8,
    ):
        self.params = params or PhysicalParams()
        self.config = config or RegulationEnvConfig()
        self.n_horizon = n_horizon
        self.rng = np.random.default_rng(self.config.seed)
        self.controller = CascadeController(self.params)
        self.episode_len = self.config.episode_len
        self.state_dim = 13 + DISTURBANCE_DIM
        self.action_dim = n_horizon * DISTURBANCE_DIM
        self._hover = hover_state()
        self._x = self._hover.copy()
        self._aero = np.zeros(3)
        self._residual_mean = np.zeros(3)
        self._wind_meas = np.zeros(3)

    def _measure(self) -> None:
        self._wind_meas = self._aero + self.rng.normal(0.0, self.config.meas_std, size=3)

    def _obs(self) -> np.ndarray:
        return make_observation(self._x, self._hover, self._wind_meas)

    def reset(self) -> np.ndarray:
        c = self.config
        self._aero = self.rng.uniform(c.force_low, c.force_high, size=3)
        self._residual_mean = c.residual_frac * self._aero
        x = self._hover.copy()
        x[POS] += self.rng.normal(0.0, c.init_pos_std, size=3)
        x[VEL] += self.rng.normal(0.0, c.init_vel_std, size=3)
        self._x = x
        self._measure()
        return self._obs()

    def step(self, action: np.ndarray):
        c = self.config
        forecast = np.asarray(action, dtype=float).reshape(self.n_horizon, DISTURBANCE_DIM)
        compensated = self._wind_meas + forecast[0]
        thrusts = self.controller.command(
            self._x,
            self._hover[POS],
            self._hover[VEL],
            np.zeros(3),
            compensated,
        )
        residual = self._residual_mean + self.rng.normal(0.0, c.residual_noise_std, size=3)
        force = self.params.mass * (self._aero + residual)
        r = reward(
            self._x,
            self._hover,
            thrusts - self.params.hover_thrusts(),
            c.h1,
            c.h2,
        )
        self._x = step_rk4(self._x, thrusts, force, c.dt, self.params)
        self._measure()
        return self._obs(), r, False

    @property
    def residual_mean(self) -> np.ndarray:
        return self._residual_mean.copy()
