"""Command-line front end: train, eval, ablate, report, plot, trace.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 run failure.
Config overrides accept dotted keys (``--set train.gamma=0.5``); environment
variables with the SFSTACK_ prefix mirror the same keys (``SFSTACK_train__gamma``).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .harness import (
    ablation_matrix,
    eval_episode_seeds,
    eval_task,
    base_task,
    evaluate,
    experiment_label,
    make_agent,
    make_env,
    preset_matrix,
    run_experiment,
    run_seed,
    slugify,
    to_env_action,
)
from .metrics import METRIC_COLUMNS, load_series, normalized_auc
from .nn.checkpoint import load_into
from .svgplot import line_plot_svg


def _add_config_args(p):
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key")


def _load_cfg(args) -> ExperimentConfig:
    return load_config(args.config, args.overrides)


# ------------------------------------------------------------------ commands


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    run_dir = run_experiment(cfg, args.out, force=args.force)
    print(f"run complete: {run_dir}")
    return 0


def cmd_ablate(args) -> int:
    base = _load_cfg(args)
    configs = preset_matrix(base, args.preset) if args.preset else ablation_matrix(base)
    out_root = Path(args.out)
    for cfg in configs:
        label = experiment_label(cfg)
        run_experiment(cfg, out_root / slugify(label), force=args.force)
    print(f"ablation complete: {len(configs)} experiments under {out_root}")
    return 0


def _find_checkpoint(run_dir: Path, seed: int, step: int | None) -> Path:
    pattern = f"seed{seed}_step*.ckpt"
    candidates = sorted((run_dir / "checkpoints").glob(pattern))
    if not candidates:
        raise FileNotFoundError(f"no checkpoints for seed {seed} under {run_dir}")
    if step is None:
        return candidates[-1]
    for c in candidates:
        if c.stem.endswith(f"step{step:08d}"):
            return c
    raise FileNotFoundError(f"no checkpoint at step {step} for seed {seed}")


def _agent_from_run(run_dir: Path, seed: int, step: int | None):
    cfg = load_config(run_dir / "config.snapshot")
    env = make_env(cfg)
    agent = make_agent(cfg, env, np.random.default_rng(0))
    ckpt = _find_checkpoint(run_dir, seed, step)
    load_into(ckpt, agent.named_parameters())
    return cfg, agent, ckpt


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    cfg, agent, ckpt = _agent_from_run(run_dir, args.seed, args.step)
    if args.episodes:
        cfg.eval.episodes = args.episodes
    env = make_env(cfg)
    w_eval = eval_task(cfg, base_task(cfg, env))
    rows = evaluate(agent, cfg, w_eval, eval_episode_seeds(cfg.run.root_seed, cfg.eval.episodes))
    print(f"checkpoint: {ckpt.name}")
    for col in METRIC_COLUMNS:
        vals = [r[col] for r in rows]
        print(f"  {col:>15}: {np.mean(vals):.6g} +/- {np.std(vals):.6g}")
    return 0


def _gather(run_dirs, per_seed):
    out = {}
    for run in run_dirs:
        run = Path(run)
        metrics = run / "metrics.csv"
        if not metrics.exists():
            print(f"warning: {run} has no metrics.csv, skipped", file=sys.stderr)
            continue
        cfg = load_config(run / "config.snapshot")
        out[experiment_label(cfg)] = load_series(run, per_seed=per_seed)
    if not out:
        raise RuntimeError("no usable run directories")
    return out


def cmd_report(args) -> int:
    group = _gather(args.runs, args.per_seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    with open(out_dir / "report_summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "metric", "step", "mean", "std", "n"])
        for metric in args.metrics:
            lines.append(f"== {metric}")
            for label, series in group.items():
                mean = series.mean(metric)
                std = series.std(metric)
                n = series.n_samples()
                cells = " ".join(
                    f"{m:.2f}+/-{s:.2f}" for m, s in zip(mean, std)
                )
                steps = " ".join(str(int(s)) for s in series.steps)
                lines.append(f"  {label:<28} steps[{steps}] {cells}")
                for step, m, s in zip(series.steps, mean, std):
                    writer.writerow([label, metric, int(step), f"{m:.17g}", f"{s:.17g}", n])
    auc = normalized_auc(group, args.auc_metric, mode=args.normalization)
    lines.append(f"== normalized AUC ({args.auc_metric}, {args.normalization})")
    with open(out_dir / "report_auc.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "normalized_auc"])
        for label, value in sorted(auc.items(), key=lambda kv: kv[1]):
            lines.append(f"  {label:<28} {value:.2f}")
            writer.writerow([label, f"{value:.17g}"])
    text = "\n".join(lines)
    (out_dir / "report.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_plot(args) -> int:
    group = _gather(args.runs, args.per_seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for metric in args.metrics:
        series = []
        with open(out_dir / f"plot_{metric}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "step", "mean", "std", "n", "ci_half"])
            for label, es in group.items():
                mean = es.mean(metric)
                std = es.std(metric)
                n = es.n_samples()
                ci = 1.96 * std / np.sqrt(n)
                series.append({
                    "label": label, "x": es.steps, "y": mean,
                    "lo": mean - ci, "hi": mean + ci,
                })
                for step, m, s, c in zip(es.steps, mean, std, ci):
                    writer.writerow(
                        [label, int(step), f"{m:.17g}", f"{s:.17g}", n, f"{c:.17g}"]
                    )
        svg = line_plot_svg(series, title=metric, xlabel="environment steps", ylabel=metric)
        (out_dir / f"plot_{metric}.svg").write_text(svg)
    print(f"plots written to {out_dir}")
    return 0


def cmd_trace(args) -> int:
    if args.run:
        cfg, agent, _ = _agent_from_run(Path(args.run), args.seed, args.step)
    else:
        cfg = _load_cfg(args)
        agent = None
    env = make_env(cfg)
    env_mod = sys.modules[type(env).__module__]
    if args.dump_points:
        if cfg.env.id != "inspection":
            raise RuntimeError("--dump-points requires the inspection environment")
        with open(args.dump_points, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "z"])
            for u in env.cloud.units:
                writer.writerow([f"{c:.17g}" for c in u])
    w_eval = eval_task(cfg, base_task(cfg, env))
    rng = np.random.default_rng(args.trace_seed)
    env.reset(seed=args.trace_seed)
    obs = env.observe()
    rows = []
    done = False
    while not done:
        if agent is None:
            action = rng.uniform(-1.0, 1.0, size=env.act_dim)
        else:
            action = agent.act(obs, w_eval.values, deterministic=True, rng=None)
        state, phi, done, info = env.step(to_env_action(cfg.env.id, action))
        obs = env.observe()
        rows.append(env.trace_row(state, phi, info))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(env_mod.TRACE_FIELDS)
        for row in rows:
            writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    print(f"trace with {len(rows)} steps written to {args.out}")
    return 0


# ---------------------------------------------------------------- entrypoint


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfstack",
        description="successor-feature agents with intervening safety controllers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one experiment config")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--force", action="store_true", help="redo completed seeds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="run an ablation suite")
    _add_config_args(p)
    p.add_argument("--preset", choices=("rq1", "rq2", "rq3"))
    p.add_argument("--out", required=True, help="directory for the run subdirs")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="evaluate a stored checkpoint")
    p.add_argument("--run", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=int)
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="summary tables from completed runs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", nargs="+", default=["dv_usage", "inspect_reward", "return"])
    p.add_argument("--auc-metric", default="dv_usage")
    p.add_argument("--normalization", choices=("minmax", "max"), default="minmax")
    p.add_argument("--per-seed", action="store_true",
                   help="aggregate per-seed means instead of seed x episode samples")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", help="training-curve plots (SVG + data CSV)")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", nargs="+", default=["dv_usage"])
    p.add_argument("--per-seed", action="store_true")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("trace", help="roll one episode and export its trace CSV")
    _add_config_args(p)
    p.add_argument("--run", help="use a trained run's checkpoint instead of random actions")
    p.add_argument("--seed", type=int, default=0, help="checkpoint seed")
    p.add_argument("--step", type=int)
    p.add_argument("--trace-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-points", help="also dump the inspection point cloud CSV")
    p.set_defaults(func=cmd_trace)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
