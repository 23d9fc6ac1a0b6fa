"""Rigid-body quadrotor dynamics with an injectable aerodynamic force.

State vector layout (13 entries):

    x = [p_x, p_y, p_z,          world-frame position [m]
         v_x, v_y, v_z,          world-frame velocity [m/s]
         q_w, q_x, q_y, q_z,     attitude quaternion, scalar first, body->world
         w_x, w_y, w_z]          body-frame angular rates [rad/s]

Frames: world is z-up with gravity along -z; body is front-left-up (FLU).
The quaternion rotates body-frame vectors into the world frame and is kept
unit-norm by every discrete step.

Rotor layout (X configuration, viewed from above, x forward / y left):

    rotor 0: (+d, +d)  spins CCW        d = arm_length / sqrt(2)
    rotor 1: (+d, -d)  spins CW
    rotor 2: (-d, -d)  spins CCW
    rotor 3: (-d, +d)  spins CW

Each rotor produces thrust T_i along body +z and a reaction torque about
body z of -+ torque_coeff * T_i (CCW rotors drag the body CW, hence negative).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81

POS = slice(0, 3)
VEL = slice(3, 6)
QUAT = slice(6, 10)
RATES = slice(10, 13)

STATE_DIM = 13
INPUT_DIM = 4
DISTURBANCE_DIM = 3


@dataclass
class PhysicalParams:
    """Mass/geometry constants of the vehicle.

    Attributes
    ----------
    mass : float
        Vehicle mass [kg].
    inertia_diag : ndarray, shape (3,)
        Diagonal of the body inertia matrix [kg m^2].
    gravity : float
        Gravitational acceleration [m/s^2].
    arm_length : float
        Distance from the body centre to each rotor [m].
    torque_coeff : float
        Yaw drag-torque per unit thrust [m].
    thrust_max : float
        Upper thrust bound per rotor [N].
    """

    mass: float = 1.0
    inertia_diag: np.ndarray = field(default_factory=lambda: np.array([0.01, 0.01, 0.02]))
    gravity: float = GRAVITY
    arm_length: float = 0.17
    torque_coeff: float = 0.016
    thrust_max: float = 8.0

    def __post_init__(self) -> None:
        self.inertia_diag = np.asarray(self.inertia_diag, dtype=float)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.inertia_diag.shape != (3,) or np.any(self.inertia_diag <= 0.0):
            raise ValueError("inertia_diag must be three positive entries")
        if self.arm_length <= 0.0 or self.torque_coeff <= 0.0:
            raise ValueError("arm_length and torque_coeff must be positive")
        if self.thrust_max <= 0.0:
            raise ValueError("thrust_max must be positive")

    def hover_thrusts(self) -> np.ndarray:
        """Per-rotor thrust that balances gravity exactly."""
        return np.full(4, self.mass * self.gravity / 4.0)

    def torque_mixer(self) -> np.ndarray:
        """3x4 map from rotor thrusts to body torque [tau_x, tau_y, tau_z]."""
        d = self.arm_length / np.sqrt(2.0)
        c = self.torque_coeff
        return np.array(
            [
                [d, -d, -d, d],
                [-d, -d, d, d],
                [-c, c, -c, c],
            ]
        )

    def full_mixer(self) -> np.ndarray:
        """4x4 map from thrusts to [collective thrust, tau_x, tau_y, tau_z]."""
        return np.vstack([np.ones(4), self.torque_mixer()])


@dataclass
class QuadState:
    """Structured view of the 13-entry state vector."""

    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    body_rates: np.ndarray

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.attitude = np.asarray(self.attitude, dtype=float)
        self.body_rates = np.asarray(self.body_rates, dtype=float)
        vec = self.as_vector()
        if vec.shape != (STATE_DIM,) or not np.all(np.isfinite(vec)):
            raise ValueError("state entries must be finite with shapes (3,3,4,3)")
        if abs(np.linalg.norm(self.attitude) - 1.0) > 1e-9:
            raise ValueError("attitude quaternion must be unit norm to 1e-9")

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.position, self.velocity, self.attitude, self.body_rates]
        )

    @staticmethod
    def from_vector(x: np.ndarray) -> "QuadState":
        x = np.asarray(x, dtype=float)
        return QuadState(x[POS], x[VEL], x[QUAT], x[RATES])


@dataclass
class RotorCommand:
    """Four rotor thrusts [N]."""

    thrusts: np.ndarray

    def __post_init__(self) -> None:
        self.thrusts = np.asarray(self.thrusts, dtype=float)
        if self.thrusts.shape != (4,) or not np.all(np.isfinite(self.thrusts)):
            raise ValueError("thrusts must be four finite values")
        if np.any(self.thrusts < 0.0):
            raise ValueError("thrusts must be non-negative")


def hover_state(position=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Level hover state at ``position`` with identity attitude."""
    x = np.zeros(STATE_DIM)
    x[POS] = np.asarray(position, dtype=float)
    x[6] = 1.0
    return x


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` by the unit quaternion ``q`` (scalar first, body->world)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise ValueError("quaternion must be unit norm to 1e-9")
    u = q[1:]
    t = np.cross(u, v)
    return v + 2.0 * (q[0] * t + np.cross(u, t))


def quat_kinematics(omega: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Quaternion rate 0.5 * Lambda(omega) q for body rates ``omega``."""
    wx, wy, wz = omega
    qw, qx, qy, qz = q
    return 0.5 * np.array(
        [
            -wx * qx - wy * qy - wz * qz,
            wx * qw + wz * qy - wy * qz,
            wy * qw - wz * qx + wx * qz,
            wz * qw + wy * qx - wx * qy,
        ]
    )


def continuous_dynamics(
    x: np.ndarray,
    thrusts: np.ndarray,
    aero_force: np.ndarray,
    params: PhysicalParams,
) -> np.ndarray:
    """Time derivative of the state vector.

    ``aero_force`` is an additional world-frame force [N] applied at the
    centre of mass (aerodynamic disturbance). Thrust acts along body +z.
    """
    x = np.asarray(x, dtype=float)
    thrusts = np.asarray(thrusts, dtype=float)
    aero_force = np.asarray(aero_force, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(thrusts)) and np.all(np.isfinite(aero_force))):
        raise ValueError("non-finite input to continuous_dynamics")

    q = x[QUAT]
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("zero quaternion")
    q = q / qn
    omega = x[RATES]

    collective = np.array([0.0, 0.0, float(np.sum(thrusts))])
    u = q[1:]
    t = np.cross(u, collective)
    thrust_world = collective + 2.0 * (q[0] * t + np.cross(u, t))

    accel = np.array([0.0, 0.0, -params.gravity]) + (thrust_world + aero_force) / params.mass

    tau = params.torque_mixer() @ thrusts
    J = params.inertia_diag
    omega_dot = (tau - np.cross(omega, J * omega)) / J

    dx = np.empty(STATE_DIM)
    dx[POS] = x[VEL]
    dx[VEL] = accel
    dx[QUAT] = quat_kinematics(omega, x[QUAT])
    dx[RATES] = omega_dot
    return dx


def step_rk4(
    x: np.ndarray,
    thrusts: np.ndarray,
    aero_force: np.ndarray,
    dt: float,
    params: PhysicalParams,
) -> np.ndarray:
    """One classical RK4 step with zero-order-hold inputs.

    The quaternion block is renormalized after the update so repeated
    stepping cannot drift off the unit sphere.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k1 = continuous_dynamics(x, thrusts, aero_force, params)
    k2 = continuous_dynamics(x + 0.5 * dt * k1, thrusts, aero_force, params)
    k3 = continuous_dynamics(x + 0.5 * dt * k2, thrusts, aero_force, params)
    k4 = continuous_dynamics(x + dt * k3, thrusts, aero_force, params)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[QUAT] = out[QUAT] / np.linalg.norm(out[QUAT])
    return out


@dataclass
class LinearPrediction:
    """Discrete linearization and its stacked prediction matrices.

    ``a``, ``b``, ``g`` are the one-step Jacobians; ``a_stack`` has N+1 block
    rows (identity first), ``b_stack``/``g_stack`` have zero first block rows
    so that

        x_stack = a_stack @ x0 + b_stack @ u_stack + g_stack @ w_stack.
    """

    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    a_stack: np.ndarray
    b_stack: np.ndarray
    g_stack: np.ndarray
    horizon: int

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.b.shape[1]

    @property
    def n_w(self) -> int:
        return self.g.shape[1]


def linearize(
    x_ref: np.ndarray,
    thrusts_ref: np.ndarray,
    dt: float,
    params: PhysicalParams,
    e_f: np.ndarray | None = None,
    fd_step: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Jacobians (A, B, G) of ``step_rk4`` about a reference state and input.

    A and B come from central finite differences of the discrete step with
    the aerodynamic force held at ``e_f`` (default zero); at an active thrust
    bound the difference degrades to one-sided so the probe never leaves
    [0, thrust_max]. G maps an additive world-frame acceleration disturbance
    on the velocity block, scaled by dt (zero-order hold).
    """
    x_ref = np.asarray(x_ref, dtype=float)
    thrusts_ref = np.asarray(thrusts_ref, dtype=float)
    force = np.zeros(3) if e_f is None else np.asarray(e_f, dtype=float)

    a = np.empty((STATE_DIM, STATE_DIM))
    for i in range(STATE_DIM):
        dx = np.zeros(STATE_DIM)
        dx[i] = fd_step
        plus = step_rk4(x_ref + dx, thrusts_ref, force, dt, params)
        minus = step_rk4(x_ref - dx, thrusts_ref, force, dt, params)
        a[:, i] = (plus - minus) / (2.0 * fd_step)

    b = np.empty((STATE_DIM, INPUT_DIM))
    for i in range(INPUT_DIM):
        lo = max(thrusts_ref[i] - fd_step, 0.0)
        hi = min(thrusts_ref[i] + fd_step, params.thrust_max)
        if hi <= lo:
            raise ValueError("cannot linearize: degenerate thrust interval")
        t_hi = thrusts_ref.copy()
        t_hi[i] = hi
        t_lo = thrusts_ref.copy()
        t_lo[i] = lo
        plus = step_rk4(x_ref, t_hi, force, dt, params)
        minus = step_rk4(x_ref, t_lo, force, dt, params)
        b[:, i] = (plus - minus) / (hi - lo)

    g = np.zeros((STATE_DIM, DISTURBANCE_DIM))
    g[VEL, :] = dt * np.eye(3)
    return a, b, g


def stack_prediction(a: np.ndarray, b: np.ndarray, g: np.ndarray, horizon: int) -> LinearPrediction:
    """Stack one-step matrices into horizon-long prediction operators."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    g = np.asarray(g, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n or g.shape[0] != n:
        raise ValueError("inconsistent matrix shapes")
    n_u = b.shape[1]
    n_w = g.shape[1]
    N = horizon

    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(a @ powers[-1])

    a_stack = np.vstack(powers)
    b_stack = np.zeros(((N + 1) * n, N * n_u))
    g_stack = np.zeros(((N + 1) * n, N * n_w))
    for i in range(1, N + 1):
        for k in range(i):
            blk = powers[i - 1 - k]
            b_stack[i * n : (i + 1) * n, k * n_u : (k + 1) * n_u] = blk @ b
            g_stack[i * n : (i + 1) * n, k * n_w : (k + 1) * n_w] = blk @ g
    return LinearPrediction(a, b, g, a_stack, b_stack, g_stack, N)
