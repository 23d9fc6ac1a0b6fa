"""Command-line entry points: train the forecaster, fly a reference, run the bench.

Output location resolution: ``--out`` flag, else the QUADTRACK_OUT_DIR
environment variable, else the config's ``run.out_dir`` (default ``runs``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
from pathlib import Path

import numpy as np

from .agent import AgentConfig, EstimatorAgent, train
from .config import AppConfig, dump_config, load_config
from .controller import ControllerConfig, RecedingHorizonController
from .dynamics import DISTURBANCE_DIM
from .envs import QuadrotorRegulationEnv, RegulationEnvConfig
from .harness import (
    EpisodeConfig,
    compare_methods,
    default_scenarios,
    format_table,
    run_episode,
    write_metrics_json,
)
from .reference import make_reference, validate_feasibility
from .wind import WindScenario

log = logging.getLogger("quadtrack")


def resolve_out_dir(arg_value, config: AppConfig) -> Path:
    if arg_value:
        root = Path(arg_value)
    elif os.environ.get("QUADTRACK_OUT_DIR"):
        root = Path(os.environ["QUADTRACK_OUT_DIR"])
    else:
        root = Path(config.run.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    return root


def _agent_config_from(config: AppConfig, horizon: int, seed: int, multi_option: bool) -> AgentConfig:
    t = config.training
    return AgentConfig(
        state_dim=13 + DISTURBANCE_DIM,
        action_dim=horizon * DISTURBANCE_DIM,
        n_quantiles=t.n_quantiles,
        hidden=(t.hidden, t.hidden),
        gamma=t.gamma,
        actor_lr=t.learning_rate,
        critic_lr=t.learning_rate,
        option_lr=t.learning_rate,
        batch_size=t.batch_size,
        noise_std=t.noise_std,
        beta=t.beta,
        warmup=t.warmup,
        xi=t.early_stop_loss,
        seed=seed,
        multi_option=multi_option,
    )


def _build_env(config: AppConfig, horizon: int, seed: int) -> QuadrotorRegulationEnv:
    w = config.wind
    env_cfg = RegulationEnvConfig(
        dt=config.controller.dt,
        residual_frac=w.residual_frac,
        residual_noise_std=w.noise_std,
        meas_std=w.measurement_std,
        seed=seed + 1,
    )
    return QuadrotorRegulationEnv(config.vehicle.params(), env_cfg, n_horizon=horizon)


def cmd_train(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config.run.seed
    out = resolve_out_dir(args.out, config)
    horizon = config.controller.horizon
    multi_option = not args.mean_critic

    agent = EstimatorAgent(_agent_config_from(config, horizon, seed, multi_option))
    env = _build_env(config, horizon, seed)
    episodes = args.episodes if args.episodes is not None else config.training.episodes
    log.info("training %s forecaster: %d episodes, seed %d",
             "mean-critic" if args.mean_critic else "quantile", episodes, seed)
    curve = train(agent, env, episodes)

    tag = "mean_critic" if args.mean_critic else "quantile"
    ckpt = out / f"forecaster_{tag}_seed{seed}.npz"
    agent.save(ckpt)
    curve_path = out / f"curve_{tag}_seed{seed}.csv"
    with curve_path.open("w") as f:
        f.write("episode,return,critic_loss,actor_loss\n")
        for point in curve:
            f.write(f"{point.episode},{point.ep_return:.6g},{point.critic_loss:.6g},{point.actor_loss:.6g}\n")
    log.info("saved %s and %s (final return %.3f)", ckpt, curve_path, curve[-1].ep_return)
    print(f"checkpoint: {ckpt}")
    print(f"curve: {curve_path}")
    return 0


def _parse_wind(spec: str) -> np.ndarray:
    parts = [p for p in spec.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ValueError("--wind expects three numbers, e.g. '1.5,0,0'")
    return np.array([float(p) for p in parts])


def cmd_track(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else config.run.seed
    out = resolve_out_dir(args.out, config)
    params = config.vehicle.params()

    ref_cfg = config.reference
    ref_kwargs = {}
    name = args.reference or ref_cfg.name
    if name == "line":
        ref_kwargs = {"end": (ref_cfg.line_length, 0.0, 0.0), "duration": ref_cfg.duration}
    elif name == "circle":
        ref_kwargs = {"radius": ref_cfg.radius, "period": ref_cfg.period}
    elif name == "lemniscate":
        ref_kwargs = {"scale": ref_cfg.scale, "period": ref_cfg.period}
    reference = make_reference(name, **ref_kwargs)
    validate_feasibility(reference, params)

    w = config.wind
    force = _parse_wind(args.wind) if args.wind else np.array([w.force_x, w.force_y, w.force_z])
    scenario = WindScenario(
        segments=[(0.0, force)],
        noise_std=w.noise_std,
        residual_mean=w.residual_frac * force,
        residual_bound=w.residual_bound,
        measurement_std=w.measurement_std,
    )

    ctrl_cfg = ControllerConfig(
        horizon=config.controller.horizon,
        dt=config.controller.dt,
        residual_std=np.full(3, config.controller.residual_std),
        w_box=np.full(3, config.controller.w_box),
    )
    controller = RecedingHorizonController(params, reference, ctrl_cfg)

    agent = EstimatorAgent.load(args.agent) if args.agent else None
    duration = args.duration if args.duration is not None else max(reference.duration + 2.0, 5.0)
    result = run_episode(
        params,
        reference,
        scenario,
        controller,
        agent=agent,
        episode=EpisodeConfig(duration=duration, dt=ctrl_cfg.dt, seed=seed),
    )
    csv_path = out / f"track_{name}_seed{seed}.csv"
    result.write_csv(csv_path)
    write_metrics_json(result, out / f"track_{name}_seed{seed}.json")
    print(json.dumps(result.metrics(), indent=2, sort_keys=True))
    print(f"telemetry: {csv_path}")
    return 0 if result.success else 1


def cmd_bench(args) -> int:
    config = load_config(args.config)
    out = resolve_out_dir(args.out, config)
    params = config.vehicle.params()
    seeds = list(range(args.seeds))

    methods = {"nominal": None}
    if args.mean_critic_agent:
        methods["mean-critic"] = EstimatorAgent.load(args.mean_critic_agent)
    if args.quantile_agent:
        methods["quantile"] = EstimatorAgent.load(args.quantile_agent)

    ctrl_cfg = ControllerConfig(
        horizon=config.controller.horizon,
        dt=config.controller.dt,
        residual_std=np.full(3, config.controller.residual_std),
        w_box=np.full(3, config.controller.w_box),
    )
    scenarios = default_scenarios(config.wind.residual_frac)
    if args.scenario:
        scenarios = [s for s in scenarios if s.name == args.scenario]
        if not scenarios:
            raise ValueError(f"unknown scenario '{args.scenario}'")
    records = compare_methods(params, scenarios, methods, seeds, ctrl_cfg, out_dir=out)
    print(format_table(records))
    print(f"summary: {Path(out) / 'summary.csv'}")
    return 0


def cmd_show_config(args) -> int:
    config = load_config(args.config)
    print(dump_config(config))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadtrack",
        description="Quadrotor trajectory tracking with learned disturbance forecasts",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a residual forecaster")
    p_train.add_argument("--episodes", type=int, default=None)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--config", default=None)
    p_train.add_argument("--out", default=None)
    p_train.add_argument(
        "--mean-critic",
        action="store_true",
        help="train the single-window ablation instead of the full option set",
    )
    p_train.set_defaults(func=cmd_train)

    p_track = sub.add_parser("track", help="fly one reference and write telemetry")
    p_track.add_argument("--reference", choices=["hover", "line", "circle", "lemniscate"], default=None)
    p_track.add_argument("--agent", default=None, help="forecaster checkpoint (.npz)")
    p_track.add_argument("--wind", default=None, help="mean aero acceleration 'x,y,z'")
    p_track.add_argument("--duration", type=float, default=None)
    p_track.add_argument("--seed", type=int, default=None)
    p_track.add_argument("--config", default=None)
    p_track.add_argument("--out", default=None)
    p_track.set_defaults(func=cmd_track)

    p_bench = sub.add_parser("bench", help="compare methods across scenarios")
    p_bench.add_argument("--seeds", type=int, default=3)
    p_bench.add_argument("--scenario", default=None)
    p_bench.add_argument("--quantile-agent", default=None)
    p_bench.add_argument("--mean-critic-agent", default=None)
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_cfg = sub.add_parser("show-config", help="print the effective configuration")
    p_cfg.add_argument("--config", default=None)
    p_cfg.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
