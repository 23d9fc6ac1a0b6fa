"""Reference trajectories with analytic velocity and acceleration.

Every trajectory exposes position/velocity/acceleration as functions of time
and a full 13-entry reference state (identity attitude, zero body rates) so
that controllers can form deviations directly. Beyond ``duration`` the
reference freezes at its endpoint with zero velocity, which turns every
finite maneuver into "fly there, then hold".
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import GRAVITY, POS, STATE_DIM, VEL, PhysicalParams


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Callable bundle (position, velocity, acceleration) plus duration."""

    name: str
    duration: float
    _pos: callable
    _vel: callable
    _acc: callable

    def _clock(self, t: float) -> tuple[float, bool]:
        if self.duration <= 0.0 or t < self.duration:
            return max(t, 0.0), False
        return self.duration, True

    def position(self, t: float) -> np.ndarray:
        tc, _ = self._clock(t)
        return np.asarray(self._pos(tc), dtype=float)

    def velocity(self, t: float) -> np.ndarray:
        tc, frozen = self._clock(t)
        if frozen:
            return np.zeros(3)
        return np.asarray(self._vel(tc), dtype=float)

    def acceleration(self, t: float) -> np.ndarray:
        tc, frozen = self._clock(t)
        if frozen:
            return np.zeros(3)
        return np.asarray(self._acc(tc), dtype=float)

    def state(self, t: float) -> np.ndarray:
        x = np.zeros(STATE_DIM)
        x[POS] = self.position(t)
        x[VEL] = self.velocity(t)
        x[6] = 1.0
        return x


def hover_reference(position=(0.0, 0.0, 0.0), duration: float = 0.0) -> ReferenceTrajectory:
    p = np.asarray(position, dtype=float)
    zero = np.zeros(3)
    return ReferenceTrajectory("hover", duration, lambda t: p, lambda t: zero, lambda t: zero)


def line_reference(
    start=(0.0, 0.0, 0.0),
    end=(5.0, 0.0, 0.0),
    duration: float = 10.0,
) -> ReferenceTrajectory:
    """Straight line with a smooth quintic (rest-to-rest) time profile."""
    p0 = np.asarray(start, dtype=float)
    p1 = np.asarray(end, dtype=float)
    if duration <= 0.0:
        raise ValueError("line duration must be positive")
    d = p1 - p0

    def s(t):
        tau = t / duration
        return 10 * tau**3 - 15 * tau**4 + 6 * tau**5

    def sdot(t):
        tau = t / duration
        return (30 * tau**2 - 60 * tau**3 + 30 * tau**4) / duration

    def sddot(t):
        tau = t / duration
        return (60 * tau - 180 * tau**2 + 120 * tau**3) / duration**2

    return ReferenceTrajectory(
        "line",
        duration,
        lambda t: p0 + s(t) * d,
        lambda t: sdot(t) * d,
        lambda t: sddot(t) * d,
    )


def circle_reference(
    radius: float = 2.0,
    period: float = 8.0,
    center=(0.0, 0.0, 0.0),
    laps: float = 2.0,
) -> ReferenceTrajectory:
    """Constant-speed horizontal circle starting at angle 0 on the +x axis."""
    if radius <= 0.0 or period <= 0.0 or laps <= 0.0:
        raise ValueError("radius, period and laps must be positive")
    c = np.asarray(center, dtype=float)
    omega = 2.0 * np.pi / period

    def pos(t):
        a = omega * t
        return c + radius * np.array([np.cos(a), np.sin(a), 0.0])

    def vel(t):
        a = omega * t
        return radius * omega * np.array([-np.sin(a), np.cos(a), 0.0])

    def acc(t):
        a = omega * t
        return -radius * omega**2 * np.array([np.cos(a), np.sin(a), 0.0])

    return ReferenceTrajectory("circle", laps * period, pos, vel, acc)


def lemniscate_reference(
    scale: float = 2.0,
    period: float = 12.0,
    center=(0.0, 0.0, 0.0),
    laps: float = 1.0,
) -> ReferenceTrajectory:
    """Figure-eight (Lissajous 1:2) in the horizontal plane."""
    if scale <= 0.0 or period <= 0.0 or laps <= 0.0:
        raise ValueError("scale, period and laps must be positive")
    c = np.asarray(center, dtype=float)
    omega = 2.0 * np.pi / period

    def pos(t):
        a = omega * t
        return c + scale * np.array([np.sin(a), 0.5 * np.sin(2.0 * a), 0.0])

    def vel(t):
        a = omega * t
        return scale * omega * np.array([np.cos(a), np.cos(2.0 * a), 0.0])

    def acc(t):
        a = omega * t
        return scale * omega**2 * np.array([-np.sin(a), -2.0 * np.sin(2.0 * a), 0.0])

    return ReferenceTrajectory("lemniscate", laps * period, pos, vel, acc)


def make_reference(name: str, **kwargs) -> ReferenceTrajectory:
    factories = {
        "hover": hover_reference,
        "line": line_reference,
        "circle": circle_reference,
        "lemniscate": lemniscate_reference,
    }
    if name not in factories:
        raise ValueError(f"unknown reference '{name}' (choose from {sorted(factories)})")
    return factories[name](**kwargs)


def validate_feasibility(
    ref: ReferenceTrajectory,
    params: PhysicalParams,
    margin_accel: float = 3.0,
    dt: float = 0.05,
) -> None:
    """Reject references whose thrust demand cannot be met with margin.

    Samples the trajectory and checks the commanded specific thrust
    ``||a_ref + g z|| + margin`` stays within the collective thrust envelope.
    ``margin_accel`` reserves authority for disturbance rejection [m/s^2].
    """
    t_end = ref.duration if ref.duration > 0.0 else dt
    times = np.arange(0.0, t_end + dt, dt)
    g_vec = np.array([0.0, 0.0, GRAVITY])
    max_specific = 4.0 * params.thrust_max / params.mass
    for t in times:
        demand = float(np.linalg.norm(ref.acceleration(t) + g_vec)) + margin_accel
        if demand > max_specific:
            raise ValueError(
                f"reference '{ref.name}' needs {demand:.2f} m/s^2 at t={t:.2f}"
                f" but the vehicle tops out at {max_specific:.2f} m/s^2"
            )
        if demand < margin_accel + 1e-9:
            raise ValueError(
                f"reference '{ref.name}' demands free-fall at t={t:.2f};"
                " thrust cannot point downward"
            )
