"""Experiment orchestration: seeded train/eval loops, checkpoints, ablations.

A run directory holds one experiment (one config, several seeds):

    run_dir/
      config.snapshot            resolved config, key = value lines
      metrics.csv                merged raw eval rows (step, seed, episode, ...)
      metrics_seed<k>.csv        per-seed raw rows (presence marks completion)
      losses_seed<k>.csv         per-update loss log
      checkpoints/seed<k>_step<N>.ckpt

Training runs one gradient step per environment step after the uniform-random
warmup. Evaluation happens at step 0 and at every eval interval on a fixed
set of evaluation seeds with deterministic actions, and never touches the
agent or the replay buffer. Reruns with the same config and seeds rebuild a
bit-identical metrics.csv.
"""

from __future__ import annotations

import copy
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .agents import AgentHyperparams, ReplayBuffer, SacAgent, SusfaAgent
from .config import ExperimentConfig, snapshot_text
from .envs import InspectionConfig, InspectionEnv, LanderConfig, LanderEnv
from .envs import inspection as inspection_mod
from .metrics import CSV_HEADER, METRIC_COLUMNS, write_metrics_csv
from .nn.checkpoint import save_checkpoint
from .sfcore import TaskSamplerConfig, TaskWeights, normalize_weights


# --------------------------------------------------------------------- setup


def make_env(cfg: ExperimentConfig, seed=None):
    rta_on = cfg.env.rta in ("on", "on_no_penalty")
    if cfg.env.id == "lander":
        kwargs = {"controller_enabled": rta_on}
        if cfg.env.max_steps is not None:
            kwargs["max_steps"] = cfg.env.max_steps
        if cfg.env.dt is not None:
            kwargs["dt"] = cfg.env.dt
        return LanderEnv(LanderConfig(**kwargs), seed=seed)
    kwargs = {"rta_enabled": rta_on}
    for key in ("max_steps", "dt", "n_points", "tau_points", "thrust_limit"):
        value = getattr(cfg.env, key)
        if value is not None:
            kwargs[key] = value
    if cfg.env.preset == "small":
        return InspectionEnv(InspectionConfig.small(**kwargs), seed=seed)
    return InspectionEnv(InspectionConfig(**kwargs), seed=seed)


def base_task(cfg: ExperimentConfig, env) -> TaskWeights:
    """Unit base weights with the env's tunable mask; the RTA-penalty weight
    is forced to zero (and made non-tunable) in the no-penalty mode."""
    d = env.feature_dim
    values = np.ones(d)
    if cfg.env.id == "inspection":
        mask = inspection_mod.TUNABLE_MASK.copy()
        if cfg.env.rta == "on_no_penalty":
            rta_idx = inspection_mod.FEATURE_NAMES.index("rta")
            values[rta_idx] = 0.0
            mask[rta_idx] = False
    else:
        mask = np.ones(d, dtype=bool)
    return TaskWeights(values, mask)


def draw_training_task(cfg: ExperimentConfig, base: TaskWeights,
                       rng: np.random.Generator) -> TaskWeights:
    """Specialists keep the base weights; generalists draw the tunable entries
    uniformly from the configured range and normalize."""
    if cfg.agent.type == "specialist":
        return base
    values = base.values.copy()
    mask = base.tunable_mask
    values[mask] = rng.uniform(cfg.agent.weight_low, cfg.agent.weight_high,
                               size=int(mask.sum()))
    if values[mask].sum() <= 0.0:
        values[mask] = 1.0
    return normalize_weights(TaskWeights(values, mask))


def eval_task(cfg: ExperimentConfig, base: TaskWeights) -> TaskWeights:
    """Generalists are evaluated at the equal-weight center task."""
    if cfg.agent.type == "specialist":
        return base
    values = base.values.copy()
    values[base.tunable_mask] = 1.0
    return normalize_weights(TaskWeights(values, base.tunable_mask))


def make_agent(cfg: ExperimentConfig, env, rng: np.random.Generator):
    hp = AgentHyperparams(
        hidden_size=cfg.agent.hidden_size,
        hidden_layers=cfg.agent.hidden_layers,
        enc_layers=cfg.agent.enc_layers,
        head_layers=cfg.agent.head_layers,
        lr=cfg.train.lr,
        gamma=cfg.train.gamma,
        polyak_rho=cfg.train.polyak_rho,
        batch_size=cfg.train.batch_size,
        init_log_tau=cfg.train.init_log_tau,
        actor_q_on_true_task=cfg.agent.actor_q_on_true_task,
    )
    generalist = cfg.agent.type == "generalist"
    if cfg.agent.arch == "SAC":
        return SacAgent(env.obs_dim, env.act_dim, env.feature_dim, generalist, hp, rng)
    base = base_task(cfg, env)
    sampler = TaskSamplerConfig(
        n_alternatives=cfg.agent.n_z if generalist else 0,
        stddev=cfg.agent.z_stddev,
        clamp_range=(cfg.agent.weight_low, cfg.agent.weight_high),
    )
    return SusfaAgent(
        env.obs_dim, env.act_dim, env.feature_dim, hp, rng,
        collapsed=(cfg.agent.arch == "CUSFAS"),
        sampler=sampler, tunable_mask=base.tunable_mask,
    )


def to_env_action(env_id: str, action: np.ndarray) -> np.ndarray:
    """Map the policy's (-1, 1) outputs onto the env's action ranges."""
    if env_id == "lander":
        return np.array([(action[0] + 1.0) / 2.0, action[1]])
    return action


def experiment_label(cfg: ExperimentConfig) -> str:
    family = {"SAC": "SAC", "SUSFAS": "SUSFA", "CUSFAS": "CUSFA"}[cfg.agent.arch]
    if cfg.env.rta == "off":
        name = family
    else:
        name = family + ("-S" if family == "SAC" else "S")
        if cfg.env.rta == "on_no_penalty":
            name += " w/o R"
    if cfg.agent.type == "specialist":
        return f"{name} Specialist"
    return f"{name} Gen[{cfg.agent.weight_low:g},{cfg.agent.weight_high:g}]"


def slugify(label: str) -> str:
    out = []
    for ch in label.lower():
        out.append(ch if ch.isalnum() else "_")
    slug = "".join(out)
    while "__" in slug:
        slug = slug.replace("__", "_")
    return slug.strip("_")


# ---------------------------------------------------------------- evaluation


def _episode_metrics(env_id, w_eval, phi_sum, ret, length, state, last_info):
    if env_id == "lander":
        outcome = 1.0 if last_info.get("landed") else (-1.0 if last_info.get("crashed") else 0.0)
        return {
            "return": ret,
            "length": float(length),
            "dv_usage": state.fuel_used,
            "fuel_reward": float(phi_sum[2] + phi_sum[3]),
            "inspect_reward": 0.0,
            "rta_steps": float(last_info["controller_count"]),
            "outcome": outcome,
        }
    outcome = 1.0 if last_info.get("success") else (
        -1.0 if (last_info.get("crashed") or last_info.get("exited")) else 0.0
    )
    return {
        "return": ret,
        "length": float(length),
        "dv_usage": state.dv_used,
        "fuel_reward": float(phi_sum[3]),
        "inspect_reward": float(phi_sum[0]),
        "rta_steps": float(state.rta_steps),
        "outcome": outcome,
    }


def evaluate(agent, cfg: ExperimentConfig, w_eval: TaskWeights, episode_seeds):
    """Deterministic evaluation episodes on fresh env instances.

    Returns one metrics dict per episode; the agent is read-only here.
    """
    rows = []
    for ep_seed in episode_seeds:
        env = make_env(cfg)
        env.reset(seed=int(ep_seed))
        obs = env.observe()
        phi_sum = np.zeros(env.feature_dim)
        ret = 0.0
        length = 0
        controller_count = 0
        info = {}
        done = False
        while not done:
            action = agent.act(obs, w_eval.values, deterministic=True, rng=None)
            state, phi, done, info = env.step(to_env_action(cfg.env.id, action))
            obs = env.observe()
            phi_sum += phi.values
            ret += float(phi.values @ w_eval.values)
            length += 1
            controller_count += int(info["controller_active"])
        info = dict(info)
        info["controller_count"] = controller_count
        rows.append(_episode_metrics(cfg.env.id, w_eval, phi_sum, ret, length, state, info))
    return rows


# ------------------------------------------------------------------ training


def _seed_streams(root_seed: int, seed: int):
    ss = np.random.SeedSequence(entropy=(root_seed, seed))
    env_ss, agent_ss, action_ss, batch_ss, task_ss = ss.spawn(5)
    return {
        "env_seed": int(env_ss.generate_state(1)[0]),
        "agent_rng": np.random.default_rng(agent_ss),
        "action_rng": np.random.default_rng(action_ss),
        "batch_rng": np.random.default_rng(batch_ss),
        "task_rng": np.random.default_rng(task_ss),
    }


def eval_episode_seeds(root_seed: int, n_episodes: int):
    return [
        int(np.random.SeedSequence(entropy=(root_seed, 999983, ep)).generate_state(1)[0])
        for ep in range(n_episodes)
    ]


def run_seed(cfg: ExperimentConfig, seed: int, run_dir: Path) -> Path:
    """Train one seed; writes metrics_seed<k>.csv, losses, and checkpoints."""
    run_dir = Path(run_dir)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    streams = _seed_streams(cfg.run.root_seed, seed)

    env = make_env(cfg)
    agent = make_agent(cfg, env, streams["agent_rng"])
    base = base_task(cfg, env)
    w_eval = eval_task(cfg, base)
    ep_seeds = eval_episode_seeds(cfg.run.root_seed, cfg.eval.episodes)
    susfa_type = isinstance(agent, SusfaAgent)
    n_alt = agent.sampler.n_alternatives if susfa_type else 0

    capacity = min(cfg.train.buffer_capacity, cfg.train.total_steps)
    buffer = ReplayBuffer(capacity, env.obs_dim, env.act_dim, env.feature_dim, n_alt)

    label = experiment_label(cfg)
    metric_rows = []
    loss_path = run_dir / f"losses_seed{seed}.csv"
    loss_fh = open(loss_path, "w")
    loss_header = None

    def checkpoint(step):
        rows = evaluate(agent, cfg, w_eval, ep_seeds)
        for ep, row in enumerate(rows):
            metric_rows.append([step, seed, ep] + [row[c] for c in METRIC_COLUMNS])
        mean_ret = float(np.mean([r["return"] for r in rows]))
        mean_dv = float(np.mean([r["dv_usage"] for r in rows]))
        print(f"[{label}] seed {seed} step {step}: return={mean_ret:.4f} dv={mean_dv:.4f}",
              flush=True)
        save_checkpoint(
            ckpt_dir / f"seed{seed}_step{step:08d}.ckpt",
            agent.named_parameters(),
            meta={"step": step, "seed": seed, "label": label},
        )

    checkpoint(0)
    env.reset(seed=streams["env_seed"])
    obs = env.observe()
    w = draw_training_task(cfg, base, streams["task_rng"])
    action_rng = streams["action_rng"]
    batch_rng = streams["batch_rng"]

    for step in range(1, cfg.train.total_steps + 1):
        if susfa_type and n_alt > 0:
            alts = agent.sample_alternatives(w.values, action_rng)
        else:
            alts = []
        if step <= cfg.train.warmup_steps:
            action = action_rng.uniform(-1.0, 1.0, size=env.act_dim)
        elif susfa_type:
            action = agent.act_gpi(obs, w.values, alts, action_rng)
        else:
            action = agent.act(obs, w.values, deterministic=False, rng=action_rng)
        state, phi, done, info = env.step(to_env_action(cfg.env.id, action))
        obs_next = env.observe()
        buffer.add(obs, action, phi.values, obs_next, info["terminal"], w.values, alts)
        obs = obs_next

        if step > cfg.train.warmup_steps and len(buffer) >= cfg.train.batch_size:
            report = agent.update(buffer.sample(cfg.train.batch_size, batch_rng), batch_rng)
            if step % cfg.run.loss_log_every == 0:
                if loss_header is None:
                    loss_header = ["step"] + list(report.keys())
                    loss_fh.write(",".join(loss_header) + "\n")
                loss_fh.write(
                    ",".join([str(step)] + [format(report[k], ".10g") for k in loss_header[1:]])
                    + "\n"
                )

        if done:
            env.reset()
            obs = env.observe()
            w = draw_training_task(cfg, base, streams["task_rng"])
        if step % cfg.eval.interval == 0:
            checkpoint(step)

    loss_fh.close()
    part = run_dir / f"metrics_seed{seed}.csv.part"
    write_metrics_csv(part, metric_rows)
    final = run_dir / f"metrics_seed{seed}.csv"
    os.replace(part, final)
    return final


def _seed_worker(payload):
    cfg, seed, run_dir = payload
    run_seed(cfg, seed, Path(run_dir))
    return seed


def merge_seed_metrics(cfg: ExperimentConfig, run_dir: Path):
    lines = [",".join(CSV_HEADER)]
    for seed in cfg.run.seeds:
        text = (run_dir / f"metrics_seed{seed}.csv").read_text().strip().splitlines()
        lines.extend(text[1:])
    (run_dir / "metrics.csv").write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir, force: bool = False) -> Path:
    """Run (or resume) every seed of an experiment config.

    Completed seeds (their metrics_seed<k>.csv exists) are skipped unless
    force is set; an interrupted seed restarts from scratch, which reproduces
    the identical stream. Fails fast if the directory holds a different
    config.
    """
    if os.environ.get("SFSTACK_FORCE"):
        force = True
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    snap = run_dir / "config.snapshot"
    text = snapshot_text(cfg)
    if snap.exists() and not force:
        if snap.read_text() != text:
            raise RuntimeError(
                f"{run_dir} already holds a different config; pass force to overwrite"
            )
    if force:
        for old in run_dir.glob("metrics_seed*.csv"):
            old.unlink()
    snap.write_text(text)

    pending = [s for s in cfg.run.seeds if not (run_dir / f"metrics_seed{s}.csv").exists()]
    if pending:
        if cfg.run.workers > 1:
            # single-threaded BLAS inside workers; seeds are the parallel axis
            saved = {k: os.environ.get(k) for k in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS")}
            os.environ["OMP_NUM_THREADS"] = "1"
            os.environ["OPENBLAS_NUM_THREADS"] = "1"
            try:
                ctx = get_context("spawn")
                with ProcessPoolExecutor(max_workers=cfg.run.workers, mp_context=ctx) as pool:
                    jobs = [(cfg, s, str(run_dir)) for s in pending]
                    for _ in pool.map(_seed_worker, jobs):
                        pass
            finally:
                for key, old in saved.items():
                    if old is None:
                        os.environ.pop(key, None)
                    else:
                        os.environ[key] = old
        else:
            for seed in pending:
                run_seed(cfg, seed, run_dir)
    merge_seed_metrics(cfg, run_dir)
    return run_dir


# ------------------------------------------------------------------ ablation


def ablation_matrix(base_cfg: ExperimentConfig, architectures=(), agent_types=(),
                    rta_modes=(), weight_ranges=()):
    """Cartesian expansion of ablation dimensions over a base config.

    Empty dimension tuples keep the base config's value, so all-empty yields
    the single base config.
    """
    archs = architectures or (base_cfg.agent.arch,)
    types = agent_types or (base_cfg.agent.type,)
    modes = rta_modes or (base_cfg.env.rta,)
    ranges = weight_ranges or ((base_cfg.agent.weight_low, base_cfg.agent.weight_high),)
    out = []
    for arch in archs:
        for agent_type in types:
            for mode in modes:
                for lo, hi in ranges:
                    cfg = copy.deepcopy(base_cfg)
                    cfg.agent.arch = arch
                    cfg.agent.type = agent_type
                    cfg.env.rta = mode
                    cfg.agent.weight_low = lo
                    cfg.agent.weight_high = hi
                    out.append(cfg.validate())
    return out


def preset_matrix(base_cfg: ExperimentConfig, preset: str):
    """Named ablation suites: rq1 (stacked vs collapsed), rq2 (secondary
    intervention), rq3 (generalist weight ranges)."""
    if preset == "rq1":
        return ablation_matrix(
            base_cfg, architectures=("SUSFAS", "CUSFAS"), agent_types=("generalist",),
            rta_modes=("on",), weight_ranges=((0.0, 1.0),),
        )
    if preset == "rq2":
        return ablation_matrix(
            base_cfg, architectures=("SAC", "SUSFAS"),
            agent_types=("specialist", "generalist"),
            rta_modes=("off", "on", "on_no_penalty"),
        )
    if preset == "rq3":
        return ablation_matrix(
            base_cfg, architectures=("SAC", "SUSFAS"), agent_types=("generalist",),
            rta_modes=("on",),
            weight_ranges=((0.4, 0.6), (0.2, 0.8), (0.0, 1.0)),
        )
    raise ValueError(f"unknown preset {preset!r} (expected rq1, rq2, or rq3)")
