"""Closed-loop episodes, tracking metrics and the method-comparison bench.

An episode flies one reference under one wind scenario with the
receding-horizon controller, optionally aided by a trained residual
forecaster. The plant integrates the true disturbance (piecewise aero mean
plus bounded stochastic residual); the controller only ever sees the noisy
wind measurement and the forecaster's output, so improvements measured here
come from information, not leakage.

Telemetry rows carry time, position, reference, per-axis and norm errors,
the world-frame lateral thrust component, solver status and timing so runs
can be plotted or diffed offline. All randomness flows from one seed per
episode.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import DEFAULT_H1, DEFAULT_H2, EstimatorAgent, reward
from .controller import ControllerConfig, RecedingHorizonController
from .dynamics import POS, QUAT, PhysicalParams, quat_rotate, step_rk4
from .envs import make_observation
from .reference import ReferenceTrajectory, make_reference
from .wind import WindScenario, aero_force, measured_wind, sample_residual

TELEMETRY_COLUMNS = (
    "t",
    "px",
    "py",
    "pz",
    "ref_x",
    "ref_y",
    "ref_z",
    "err_x",
    "err_y",
    "err_z",
    "pos_err",
    "u_y",
    "solve_ms",
    "solver_ok",
    "reward",
)
_COL = {name: i for i, name in enumerate(TELEMETRY_COLUMNS)}


@dataclass
class EpisodeConfig:
    """Episode length, seed and the success thresholds (config-exposed)."""

    duration: float = 10.0
    dt: float = 0.05
    seed: int = 0
    err_max: float = 2.0
    goal_tol: float = 0.3
    tail_frac: float = 0.2


@dataclass
class EpisodeResult:
    """Metrics plus the full telemetry table for one closed-loop run.

    ``cumulative_error`` is the sum over steps of the position-error norm
    times the sampling period [m*s... reported in meters of accumulated
    error]; ``completion_time`` is the first simulated time the vehicle is
    within ``goal_tol`` of the reference endpoint (inf if never);
    ``final_offset`` is the norm of the mean error vector over the trailing
    fraction of the flight — a bias measure that averages out zero-mean
    scatter and exposes uncompensated constant disturbance.
    """

    cumulative_error: float
    cumulative_cost: float
    mean_pos_err: float
    max_pos_err: float
    final_offset: float
    completion_time: float
    completion: float
    success: bool
    solver_ok_frac: float
    mean_solve_ms: float
    max_solve_ms: float
    telemetry: np.ndarray = field(repr=False, default=None)

    def metrics(self) -> dict:
        return {
            "cumulative_error": self.cumulative_error,
            "cumulative_cost": self.cumulative_cost,
            "mean_pos_err": self.mean_pos_err,
            "max_pos_err": self.max_pos_err,
            "final_offset": self.final_offset,
            "completion_time": self.completion_time,
            "completion": self.completion,
            "success": self.success,
            "solver_ok_frac": self.solver_ok_frac,
            "mean_solve_ms": self.mean_solve_ms,
            "max_solve_ms": self.max_solve_ms,
        }

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(TELEMETRY_COLUMNS)
            for row in self.telemetry:
                writer.writerow([f"{v:.9g}" for v in row])


def run_episode(
    params: PhysicalParams,
    reference: ReferenceTrajectory,
    scenario: WindScenario,
    controller: RecedingHorizonController,
    agent: EstimatorAgent | None = None,
    episode: EpisodeConfig | None = None,
) -> EpisodeResult:
    """Fly the reference once and score it.

    Success requires the position error never exceeding ``err_max`` and the
    final position landing within ``goal_tol`` of the reference endpoint.
    A breach of ``err_max`` aborts the episode (counted in ``completion``).
    """
    ep = episode or EpisodeConfig()
    controller.reset()
    rng = np.random.default_rng(ep.seed)
    n_steps = max(1, int(round(ep.duration / ep.dt)))
    x = reference.state(0.0)
    hover = params.hover_thrusts()
    goal = reference.position(ep.duration)

    rows = []
    rewards = []
    crashed = False
    completion_time = np.inf
    for k in range(n_steps):
        t = k * ep.dt
        ref_state = reference.state(t)
        wind_meas = measured_wind(scenario, t, rng)
        forecast = None
        if agent is not None:
            obs = make_observation(x, ref_state, wind_meas)
            forecast = agent.act(obs)
        thrusts, info = controller.step(x, t, wind_meas, forecast)

        err_vec = x[POS] - ref_state[POS]
        pos_err = float(np.linalg.norm(err_vec))
        if np.isinf(completion_time) and float(np.linalg.norm(x[POS] - goal)) <= ep.goal_tol:
            completion_time = t
        thrust_world = quat_rotate(
            x[QUAT] / np.linalg.norm(x[QUAT]), np.array([0.0, 0.0, float(np.sum(thrusts))])
        )
        r = reward(x, ref_state, thrusts - hover, DEFAULT_H1, DEFAULT_H2)
        rewards.append(r)
        rows.append(
            [
                t,
                *x[POS],
                *ref_state[POS],
                *err_vec,
                pos_err,
                float(thrust_world[1]),
                info.solve_time * 1e3,
                0.0 if info.used_fallback else 1.0,
                r,
            ]
        )
        if pos_err > ep.err_max:
            crashed = True
            break

        residual = sample_residual(scenario, rng)
        force = params.mass * (aero_force(scenario, t) + residual)
        x = step_rk4(x, thrusts, force, ep.dt, params)

    telemetry = np.asarray(rows)
    errs = telemetry[:, _COL["pos_err"]]
    solve_ms = telemetry[:, _COL["solve_ms"]]
    tail = max(1, int(round(ep.tail_frac * len(rows))))
    err_cols = telemetry[-tail:, _COL["err_x"] : _COL["err_z"] + 1]
    final_offset = float(np.linalg.norm(err_cols.mean(axis=0)))
    final_goal_err = float(np.linalg.norm(x[POS] - goal))
    success = (not crashed) and final_goal_err <= ep.goal_tol
    return EpisodeResult(
        cumulative_error=float(errs.sum() * ep.dt),
        cumulative_cost=float(-np.sum(rewards)),
        mean_pos_err=float(errs.mean()),
        max_pos_err=float(errs.max()),
        final_offset=final_offset,
        completion_time=float(completion_time),
        completion=len(rows) / n_steps,
        success=success,
        solver_ok_frac=float(telemetry[:, _COL["solver_ok"]].mean()),
        mean_solve_ms=float(solve_ms.mean()),
        max_solve_ms=float(solve_ms.max()),
        telemetry=telemetry,
    )


@dataclass
class BenchScenario:
    """One named cell of the benchmark grid."""

    name: str
    reference: ReferenceTrajectory
    wind: WindScenario
    duration: float


def default_scenarios(residual_frac: float = 0.25) -> list[BenchScenario]:
    """Hover plus the three maneuvers, each under gusty biased wind."""

    def gusty(force):
        force = np.asarray(force, dtype=float)
        return WindScenario(
            segments=[(0.0, force)],
            noise_std=0.25,
            residual_mean=residual_frac * force,
            residual_bound=3.0,
            measurement_std=0.05,
        )

    return [
        BenchScenario("hover", make_reference("hover"), gusty([2.0, -1.5, 0.5]), 8.0),
        BenchScenario(
            "line",
            make_reference("line", start=(0, 0, 0), end=(3.0, 0, 0), duration=6.0),
            gusty([1.5, 2.0, 0.0]),
            8.0,
        ),
        BenchScenario(
            "circle",
            make_reference("circle", radius=1.5, period=6.0, laps=1.0),
            gusty([-2.0, 1.0, 0.5]),
            8.0,
        ),
        BenchScenario(
            "lemniscate",
            make_reference("lemniscate", scale=1.5, period=8.0, laps=1.0),
            gusty([1.0, 1.0, -0.5]),
            8.0,
        ),
    ]


def compare_methods(
    params: PhysicalParams,
    scenarios: list[BenchScenario],
    methods: dict,
    seeds: list[int],
    controller_config: ControllerConfig | None = None,
    out_dir=None,
    episode_overrides: dict | None = None,
) -> list[dict]:
    """Run every (scenario, method, seed) cell and aggregate per pair.

    ``methods`` maps a display name to an ``EstimatorAgent`` or ``None`` for
    the forecast-free baseline. Returns one record per (scenario, method)
    with means and standard deviations across seeds; optionally writes
    ``summary.csv`` and per-cell telemetry under ``out_dir``.
    """
    cfg = controller_config or ControllerConfig()
    overrides = episode_overrides or {}
    records = []
    for scen in scenarios:
        controller = RecedingHorizonController(params, scen.reference, cfg)
        for method_name, agent in methods.items():
            errors, costs, offsets, successes, times, solve_ms = [], [], [], [], [], []
            for seed in seeds:
                result = run_episode(
                    params,
                    scen.reference,
                    scen.wind,
                    controller,
                    agent=agent,
                    episode=EpisodeConfig(
                        duration=scen.duration, seed=seed, dt=cfg.dt, **overrides
                    ),
                )
                errors.append(result.cumulative_error)
                costs.append(result.cumulative_cost)
                offsets.append(result.final_offset)
                successes.append(result.success)
                times.append(result.completion_time)
                solve_ms.append(result.mean_solve_ms)
                if out_dir is not None:
                    result.write_csv(
                        Path(out_dir) / f"{scen.name}_{method_name}_seed{seed}.csv"
                    )
            finite_times = [t for t in times if np.isfinite(t)]
            records.append(
                {
                    "scenario": scen.name,
                    "method": method_name,
                    "trials": len(seeds),
                    "success_rate": float(np.mean(successes)),
                    "time_mean": float(np.mean(finite_times)) if finite_times else float("inf"),
                    "error_mean": float(np.mean(errors)),
                    "error_std": float(np.std(errors)),
                    "cost_mean": float(np.mean(costs)),
                    "cost_std": float(np.std(costs)),
                    "offset_mean": float(np.mean(offsets)),
                    "offset_std": float(np.std(offsets)),
                    "solve_ms_mean": float(np.mean(solve_ms)),
                }
            )
    if out_dir is not None:
        write_summary(records, Path(out_dir) / "summary.csv")
    return records


def format_table(records: list[dict]) -> str:
    """Aligned text rendering of a compare_methods result."""
    if not records:
        return "(no records)"
    header = f"{'scenario':<12} {'method':<14} {'succ':>5} {'time(s)':>8} {'err(m)':>10} {'offset(m)':>10}"
    lines = [header, "-" * len(header)]
    for r in records:
        time_s = f"{r['time_mean']:.2f}" if np.isfinite(r["time_mean"]) else "-"
        lines.append(
            f"{r['scenario']:<12} {r['method']:<14} {r['success_rate']:>5.0%}"
            f" {time_s:>8} {r['error_mean']:>10.4f} {r['offset_mean']:>10.4f}"
        )
    return "\n".join(lines)


def write_summary(records: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not records:
        path.write_text("")
        return
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(records[0].keys()))
        writer.writeheader()
        writer.writerows(records)


def write_metrics_json(result: EpisodeResult, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {}
    for k, v in result.metrics().items():
        if isinstance(v, (bool, np.bool_)):
            payload[k] = bool(v)
        elif isinstance(v, float) and not np.isfinite(v):
            payload[k] = None
        else:
            payload[k] = v
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
