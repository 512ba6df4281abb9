"""Experiment configuration: dataclasses, the dotted-key schema, and loading.

Config files are plain text, one ``section.key = value`` per line with ``#``
comments. The same dotted keys work as CLI overrides (``--set key=value``)
and as environment variables with the ``SFSTACK_`` prefix and ``__`` standing
in for the dot (``SFSTACK_train__gamma=0.5``). Unknown keys and type errors
are rejected by name.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

ARCHITECTURES = ("SAC", "SUSFAS", "CUSFAS")
AGENT_TYPES = ("specialist", "generalist")
RTA_MODES = ("off", "on", "on_no_penalty")
ENV_IDS = ("lander", "inspection")
ENV_PRESETS = ("default", "small")


class ConfigError(ValueError):
    """Bad configuration input; the message names the offending key."""


@dataclass
class RunCfg:
    seeds: tuple = (0, 1, 2, 3, 4, 5)
    root_seed: int = 0
    workers: int = 1
    loss_log_every: int = 1


@dataclass
class EnvCfg:
    id: str = "lander"
    preset: str = "default"
    rta: str = "on"
    # optional physics overrides; None keeps the preset value
    max_steps: int | None = None
    dt: float | None = None
    n_points: int | None = None
    tau_points: int | None = None
    thrust_limit: float | None = None


@dataclass
class AgentCfg:
    arch: str = "SUSFAS"
    type: str = "generalist"
    weight_low: float = 0.0
    weight_high: float = 1.0
    n_z: int = 2
    z_stddev: float = 0.1
    hidden_size: int = 256
    hidden_layers: int = 2
    enc_layers: int = 1
    head_layers: int = 2
    actor_q_on_true_task: bool = False


@dataclass
class TrainCfg:
    total_steps: int = 100_000
    lr: float = 3e-4
    gamma: float = 0.99
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 10_000
    polyak_rho: float = 0.005
    init_log_tau: float = 0.0


@dataclass
class EvalCfg:
    interval: int = 50_000
    episodes: int = 10


@dataclass
class ExperimentConfig:
    run: RunCfg = field(default_factory=RunCfg)
    env: EnvCfg = field(default_factory=EnvCfg)
    agent: AgentCfg = field(default_factory=AgentCfg)
    train: TrainCfg = field(default_factory=TrainCfg)
    eval: EvalCfg = field(default_factory=EvalCfg)

    def validate(self):
        if self.env.id not in ENV_IDS:
            raise ConfigError(f"env.id: unknown environment {self.env.id!r}")
        if self.env.preset not in ENV_PRESETS:
            raise ConfigError(f"env.preset: unknown preset {self.env.preset!r}")
        if self.env.rta not in RTA_MODES:
            raise ConfigError(f"env.rta: unknown mode {self.env.rta!r}")
        if self.agent.arch not in ARCHITECTURES:
            raise ConfigError(f"agent.arch: unknown architecture {self.agent.arch!r}")
        if self.agent.type not in AGENT_TYPES:
            raise ConfigError(f"agent.type: unknown agent type {self.agent.type!r}")
        if self.agent.weight_low > self.agent.weight_high:
            raise ConfigError("agent.weight_low: must not exceed agent.weight_high")
        if self.agent.weight_low < 0:
            raise ConfigError("agent.weight_low: must be non-negative")
        if self.agent.n_z < 0:
            raise ConfigError("agent.n_z: must be non-negative")
        if not 0.0 <= self.train.gamma < 1.0:
            raise ConfigError("train.gamma: must lie in [0, 1)")
        if self.train.total_steps <= 0:
            raise ConfigError("train.total_steps: must be positive")
        if self.eval.interval <= 0:
            raise ConfigError("eval.interval: must be positive")
        if len(set(self.run.seeds)) != len(self.run.seeds):
            raise ConfigError("run.seeds: seeds must be distinct")
        return self


_SECTIONS = {"run": RunCfg, "env": EnvCfg, "agent": AgentCfg, "train": TrainCfg, "eval": EvalCfg}


def _parse_seeds(text: str) -> tuple:
    try:
        return tuple(int(part) for part in str(text).split(",") if part.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"run.seeds: expected comma-separated integers, got {text!r}") from exc


def _parse_bool(key: str, text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _coerce(key: str, annotation, default, text: str):
    if key == "run.seeds":
        return _parse_seeds(text)
    text = str(text).strip()
    if annotation in ("int | None", "float | None") and text.lower() in ("none", ""):
        return None
    base = {"int": int, "float": float, "int | None": int, "float | None": float,
            "str": str, "bool": bool, "tuple": _parse_seeds}
    typ = base.get(annotation, None)
    if typ is bool:
        return _parse_bool(key, text)
    if typ is None:
        raise ConfigError(f"{key}: unsupported type {annotation}")
    try:
        value = typ(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {annotation}, got {text!r}") from exc
    return value


def schema() -> dict:
    """Dotted key -> (section, field name, type annotation string)."""
    out = {}
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            out[f"{section}.{f.name}"] = (section, f.name, f.type)
    return out


_SCHEMA = None


def apply_override(cfg: ExperimentConfig, key: str, value) -> None:
    global _SCHEMA
    if _SCHEMA is None:
        _SCHEMA = schema()
    if key not in _SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    section, name, annotation = _SCHEMA[key]
    target = getattr(cfg, section)
    default = getattr(type(target)(), name)
    setattr(target, name, _coerce(key, annotation, default, value))


def _parse_assignment(text: str):
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    key, _, value = text.partition("=")
    return key.strip(), value.strip()


def env_overrides(environ=None) -> list[tuple[str, str]]:
    """Collect SFSTACK_section__key=value environment overrides."""
    environ = os.environ if environ is None else environ
    out = []
    for name, value in sorted(environ.items()):
        if name.startswith("SFSTACK_") and "__" in name:
            key = name[len("SFSTACK_") :].replace("__", ".")
            out.append((key, value))
    return out


def load_config(path=None, overrides=(), environ=None) -> ExperimentConfig:
    """Resolve a config: file, then environment variables, then overrides.

    An empty or missing file yields the built-in defaults. Every assignment
    is validated against the schema; errors name the offending key.
    """
    cfg = ExperimentConfig()
    if path is not None:
        with open(path) as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                try:
                    key, value = _parse_assignment(line)
                except ConfigError as exc:
                    raise ConfigError(f"{path}:{line_no}: {exc}") from None
                apply_override(cfg, key, value)
    for key, value in env_overrides(environ):
        apply_override(cfg, key, value)
    for item in overrides:
        key, value = item if isinstance(item, tuple) else _parse_assignment(item)
        apply_override(cfg, key, value)
    return cfg.validate()


def snapshot_text(cfg: ExperimentConfig) -> str:
    """Render the fully-resolved config in the same key = value format."""
    lines = []
    for section, cls in _SECTIONS.items():
        obj = getattr(cfg, section)
        for f in fields(cls):
            value = getattr(obj, f.name)
            if f.name == "seeds":
                value = ",".join(str(s) for s in value)
            lines.append(f"{section}.{f.name} = {value}")
    return "\n".join(lines) + "\n"
