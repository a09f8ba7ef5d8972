"""Command-line interface.

Subcommands: train-baseline, train-adversary, retrain, evaluate, compare,
plot, demo. Flag precedence: command line > config file > built-in
defaults. The ADVDRIVE_OUT_ROOT environment variable, when set, prefixes
relative output directories. Exit codes: 0 success, 1 runtime failure
(one machine-parseable ``error_class=...`` line on stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import pipeline
from .config import DEMO_BUDGETS, RunConfig, default_config, load_config
from .errors import AdvDriveError
from .metrics import MetricsReport, compare
from .orchestrator import EpisodeLog
from .plot import emit_trajectory_plot

OUT_ROOT_ENV = "ADVDRIVE_OUT_ROOT"


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML run config; unset keys use defaults")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="concurrent world instances for evaluation")
    p.add_argument("--episodes", type=int, help="episode budget override for this command")
    p.add_argument("--steps", type=int, help="per-episode step cap override")
    p.add_argument("--obs-mode", choices=("full84", "lite21"), dest="obs_mode")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advdrive", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-baseline", help="train victim policies with no adversary")
    _add_common(p)

    p = sub.add_parser("train-adversary", help="train an adversary against frozen victims")
    _add_common(p)
    p.add_argument("--reward", choices=("adv_collision", "adv_offroad"))
    p.add_argument("--victims", nargs="+", metavar="CKPT", required=True,
                   help="victim checkpoints as id=path or bare paths in scenario order")

    p = sub.add_parser("retrain", help="retrain victims against a frozen adversary")
    _add_common(p)
    p.add_argument("--victims", nargs="+", metavar="CKPT", required=True)
    p.add_argument("--adversary", metavar="CKPT", required=True)

    p = sub.add_parser("evaluate", help="run test episodes and write a metrics report")
    _add_common(p)
    p.add_argument("--victims", nargs="+", metavar="CKPT", required=True)
    p.add_argument("--adversary", metavar="CKPT")
    p.add_argument("--label", default="evaluation")
    p.add_argument("--greedy", action="store_true", help="argmax actions instead of sampling")
    p.add_argument("--dump-obs", action="store_true",
                   help="write each agent's first observation as a .ppm image")

    p = sub.add_parser("compare", help="compare metric reports side by side")
    p.add_argument("reports", nargs="+", help="report.json files; first is the reference")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("plot", help="render a saved episode log as SVG + CSV")
    _add_common(p)
    p.add_argument("episode_log", help="episode0.json produced by evaluate")

    p = sub.add_parser("demo", help="full pipeline at desk-scale budgets")
    _add_common(p)
    p.add_argument("--dump-obs", action="store_true")
    return parser


def _resolve_out(path: str) -> str:
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else default_config()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "obs_mode", None):
        cfg.obs_mode = args.obs_mode
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    cfg.out_dir = _resolve_out(cfg.out_dir)
    return cfg


def _victim_ckpts(paths, cfg) -> dict[str, str]:
    """Accepts id=path pairs, or bare paths assigned to victims in scenario order."""
    out = {}
    bare = []
    for item in paths:
        if "=" in item:
            aid, path = item.split("=", 1)
            out[aid] = path
        else:
            bare.append(item)
    if bare:
        from .config import build_scenario

        victim_ids = [v.agent_id for v in build_scenario(cfg).victims() if v.agent_id not in out]
        for aid, path in zip(victim_ids, bare):
            out[aid] = path
    return out


def _cmd_train_baseline(args) -> int:
    cfg = _load_cfg(args)
    if args.episodes is not None:
        cfg.phases.baseline_episodes = args.episodes
        cfg.phases.baseline_step_cap = None
    if args.steps is not None:
        cfg.scenario.max_steps = args.steps
    result = pipeline.train_baseline(cfg, cfg.out_dir)
    print(f"baseline complete: {result.episodes_run} episodes, {result.steps_run} steps")
    for aid, path in result.checkpoint_paths.items():
        print(f"  checkpoint {aid}: {path}")
    return 0


def _cmd_train_adversary(args) -> int:
    cfg = _load_cfg(args)
    if args.episodes is not None:
        cfg.phases.adversary_episodes = args.episodes
        cfg.phases.adversary_step_cap = None
    if args.steps is not None:
        cfg.scenario.max_steps = args.steps
    reward = args.reward or cfg.adversary.reward
    result = pipeline.train_adversary(cfg, _victim_ckpts(args.victims, cfg), reward, cfg.out_dir)
    print(f"adversary ({reward}) complete: {result.episodes_run} episodes")
    for aid, path in result.checkpoint_paths.items():
        print(f"  checkpoint {aid}: {path}")
    return 0


def _cmd_retrain(args) -> int:
    cfg = _load_cfg(args)
    if args.episodes is not None:
        cfg.phases.retrain_episodes = args.episodes
        cfg.phases.retrain_step_cap = None
    if args.steps is not None:
        cfg.scenario.max_steps = args.steps
    result = pipeline.retrain_victims(
        cfg, _victim_ckpts(args.victims, cfg), args.adversary, cfg.out_dir
    )
    print(f"retraining complete: {result.episodes_run} episodes")
    for aid, path in result.checkpoint_paths.items():
        print(f"  checkpoint {aid}: {path}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    if args.episodes is not None:
        cfg.eval.episodes = args.episodes
    if args.steps is not None:
        cfg.eval.max_steps = args.steps
    if args.greedy:
        cfg.eval.action_mode = "greedy"
    report = pipeline.evaluate_condition(
        cfg,
        args.label,
        _victim_ckpts(args.victims, cfg),
        args.adversary,
        cfg.out_dir,
        dump_obs=args.dump_obs,
    )
    print(report.text_table())
    print(f"report written to {os.path.join(cfg.out_dir, 'report.json')}")
    return 0


def _cmd_compare(args) -> int:
    reports = [MetricsReport.load(p) for p in args.reports]
    table = compare(reports)
    print(table.to_text())
    if args.out:
        out = _resolve_out(args.out)
        os.makedirs(out, exist_ok=True)
        table.save(os.path.join(out, "compare.json"), os.path.join(out, "compare.txt"))
        print(f"written to {out}")
    return 0


def _cmd_plot(args) -> int:
    cfg = _load_cfg(args)
    from .config import build_scenario

    with open(args.episode_log, "r", encoding="utf-8") as fh:
        log = EpisodeLog.from_dict(json.load(fh))
    scenario = build_scenario(cfg).subset(
        [a for a in log.agent_ids if a in build_scenario(cfg).agent_ids()]
    )
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    svg = os.path.join(out, "trajectories.svg")
    emit_trajectory_plot(log, scenario, svg, os.path.join(out, "trajectories.csv"))
    print(f"plot written to {svg}")
    return 0


def _cmd_demo(args) -> int:
    cfg = _load_cfg(args)
    # desk-scale defaults; explicit flags and config values still win
    if args.obs_mode is None and args.config is None:
        cfg.obs_mode = "lite21"
    if args.config is None:
        cfg.phases.baseline_episodes = DEMO_BUDGETS["baseline_episodes"]
        cfg.phases.adversary_episodes = DEMO_BUDGETS["adversary_episodes"]
        cfg.phases.retrain_episodes = DEMO_BUDGETS["retrain_episodes"]
        cfg.phases.baseline_step_cap = None
        cfg.phases.adversary_step_cap = None
        cfg.phases.retrain_step_cap = None
        cfg.eval.episodes = DEMO_BUDGETS["eval_episodes"]
        cfg.eval.max_steps = DEMO_BUDGETS["eval_max_steps"]
        cfg.scenario.max_steps = DEMO_BUDGETS["train_max_steps"]
    if args.episodes is not None:
        cfg.phases.baseline_episodes = args.episodes
    if args.steps is not None:
        cfg.scenario.max_steps = args.steps
    summary = pipeline.run_demo(cfg, cfg.out_dir, dump_obs=args.dump_obs)
    print(summary["compare_text"])
    print(f"demo artifacts under {summary['out_dir']}")
    return 0


_HANDLERS = {
    "train-baseline": _cmd_train_baseline,
    "train-adversary": _cmd_train_adversary,
    "retrain": _cmd_retrain,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "plot": _cmd_plot,
    "demo": _cmd_demo,
}


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except AdvDriveError as exc:
        print(f"error_class={type(exc).__name__} {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
