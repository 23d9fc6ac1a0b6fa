"""Wind scenarios: piecewise-constant aerodynamic accelerations plus a
bounded stochastic residual and a noisy measurement channel.

All quantities are world-frame accelerations [m/s^2]; callers that need a
force multiply by mass.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class WindScenario:
    """Disturbance model for one episode.

    ``segments`` is a list of (start_time, accel_3vec) pairs; the active
    acceleration at time t is the last segment with start_time <= t
    (right-continuous), zero before the first segment. The residual term is a
    truncated Gaussian: mean ``residual_mean``, per-axis std ``noise_std``,
    rejected until every component is within ``residual_bound``.
    ``measurement_std`` is the per-axis std of the wind-measurement noise.
    """

    segments: list = field(default_factory=list)
    noise_std: float = 0.0
    residual_mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    residual_bound: float = 3.0
    measurement_std: float = 0.0

    def __post_init__(self) -> None:
        cleaned = []
        prev = -np.inf
        for start, accel in self.segments:
            accel = np.asarray(accel, dtype=float)
            if accel.shape != (3,) or not np.all(np.isfinite(accel)):
                raise ValueError("segment acceleration must be a finite 3-vector")
            if not np.isfinite(start) or start < prev:
                raise ValueError("segment start times must be finite and sorted")
            prev = float(start)
            cleaned.append((float(start), accel))
        self.segments = cleaned
        self.residual_mean = np.asarray(self.residual_mean, dtype=float)
        if self.residual_mean.shape != (3,):
            raise ValueError("residual_mean must be a 3-vector")
        if self.noise_std < 0.0 or self.measurement_std < 0.0:
            raise ValueError("noise stds must be non-negative")
        if self.residual_bound <= 0.0:
            raise ValueError("residual_bound must be positive")
        if np.any(np.abs(self.residual_mean) > self.residual_bound):
            raise ValueError("residual_mean must lie inside the residual bound")


def aero_force(scenario: WindScenario, t: float) -> np.ndarray:
    """Piecewise-constant aerodynamic acceleration at time ``t``."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    active = np.zeros(3)
    for start, accel in scenario.segments:
        if t >= start:
            active = accel
        else:
            break
    return active.copy()


def sample_residual(scenario: WindScenario, rng: np.random.Generator) -> np.ndarray:
    """One bounded residual draw (truncated Gaussian via rejection)."""
    if scenario.noise_std == 0.0:
        return scenario.residual_mean.copy()
    for _ in range(10_000):
        w = scenario.residual_mean + scenario.noise_std * rng.standard_normal(3)
        if np.all(np.abs(w) <= scenario.residual_bound):
            return w
    raise RuntimeError("residual rejection sampling failed; bound too tight for the configured std")


def measured_wind(scenario: WindScenario, t: float, rng: np.random.Generator) -> np.ndarray:
    """Noisy measurement of the current aerodynamic acceleration."""
    truth = aero_force(scenario, t)
    if scenario.measurement_std == 0.0:
        return truth
    return truth + scenario.measurement_std * rng.standard_normal(3)
