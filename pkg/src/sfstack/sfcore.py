"""Reward decomposition primitives: feature vectors, task weights, alternative-task
sampling, and a Monte-Carlo successor-feature estimator for testing.

A task is a weight vector w over the d per-transition reward components phi;
the scalar reward is always the dot product phi . w. Successor features are
the discounted sums psi = E[sum gamma^k phi] under a policy, so psi . w is the
task's Q-value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class FeatureVector:
    """Per-transition reward components, one entry per task dimension."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_vector(self.values, "feature vector"))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TaskWeights:
    """Task weight vector; tunable entries are the ones samplers/normalization touch."""

    values: np.ndarray
    tunable_mask: np.ndarray = None

    def __post_init__(self):
        vals = _as_vector(self.values, "task weights")
        object.__setattr__(self, "values", vals)
        if self.tunable_mask is None:
            mask = np.ones(vals.shape[0], dtype=bool)
        else:
            mask = np.asarray(self.tunable_mask, dtype=bool)
            if mask.shape != vals.shape:
                raise ValueError("tunable_mask length must match values")
        object.__setattr__(self, "tunable_mask", mask)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SfVector:
    """Expected discounted feature sums under some policy."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_vector(self.values, "successor features"))

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TaskSamplerConfig:
    """Gaussian alternative-task sampler: n_alternatives draws around the true task."""

    n_alternatives: int = 2
    stddev: float = 0.1
    clamp_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.n_alternatives < 0:
            raise ValueError("n_alternatives must be non-negative")
        if np.any(np.asarray(self.stddev) < 0):
            raise ValueError("stddev must be non-negative")
        low, high = self.clamp_range
        if low > high:
            raise ValueError("clamp_range low must not exceed high")
        if low < 0:
            raise ValueError("clamp_range must be non-negative (weights are non-negative)")


def composite_reward(phi: FeatureVector, w: TaskWeights) -> float:
    """Scalar reward phi . w."""
    if len(phi) != len(w):
        raise ValueError(f"dimension mismatch: phi has {len(phi)}, w has {len(w)}")
    return float(phi.values @ w.values)


def normalize_weights(w: TaskWeights) -> TaskWeights:
    """Scale the tunable entries to sum to 1; non-tunable entries pass through.

    Idempotent: a tunable subset already summing to 1 (within 1e-9) is returned
    unchanged.
    """
    mask = w.tunable_mask
    tunable = w.values[mask]
    if np.any(tunable < 0):
        raise ValueError("tunable weights must be non-negative")
    total = tunable.sum()
    if total <= 0.0:
        raise ValueError("tunable weights sum to zero; normalization undefined")
    if abs(total - 1.0) <= 1e-9:
        return w
    vals = w.values.copy()
    vals[mask] = tunable / total
    return TaskWeights(vals, w.tunable_mask)


def _draw_clamped(w: TaskWeights, cfg: TaskSamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """One per-dimension Gaussian draw around w, clamped, not yet normalized."""
    mask = w.tunable_mask
    vals = w.values.copy()
    low, high = cfg.clamp_range
    draw = rng.normal(w.values[mask], cfg.stddev)
    vals[mask] = np.clip(draw, low, high)
    return vals


def sample_task_alternatives(
    w: TaskWeights, cfg: TaskSamplerConfig, rng: np.random.Generator
) -> list[TaskWeights]:
    """Draw cfg.n_alternatives alternative tasks around w.

    Each draw is an independent per-dimension Gaussian on the tunable entries,
    clamped to cfg.clamp_range and renormalized; non-tunable entries are copied.
    """
    out = []
    mask = w.tunable_mask
    for _ in range(cfg.n_alternatives):
        vals = _draw_clamped(w, cfg, rng)
        # Clamping can zero out every tunable entry; redraw, else keep w's own.
        for _ in range(32):
            if vals[mask].sum() > 0.0:
                break
            vals = _draw_clamped(w, cfg, rng)
        else:
            vals[mask] = w.values[mask]
        out.append(normalize_weights(TaskWeights(vals, mask)))
    return out


class TransitionModel(Protocol):
    """Anything that can sample one transition; used by the MC estimator."""

    def transition(self, state, action, rng) -> tuple[object, np.ndarray, bool]: ...


def monte_carlo_sf(
    mdp: TransitionModel,
    policy: Callable,
    state,
    action,
    gamma: float,
    n_rollouts: int,
    horizon: int,
    rng: np.random.Generator,
) -> SfVector:
    """Monte-Carlo estimate of the successor features of (state, action).

    Averages the discounted feature sum over n_rollouts rollouts following
    ``policy`` after the first step. Horizon must truncate the discount tail
    below 1e-6.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    if gamma > 0.0 and gamma**horizon >= 1e-6:
        raise ValueError("horizon too short for the requested discount")
    total = None
    for _ in range(n_rollouts):
        s, a = state, action
        disc = 1.0
        acc = None
        for _ in range(horizon):
            s_next, phi, done = mdp.transition(s, a, rng)
            phi = np.asarray(phi, dtype=np.float64)
            acc = disc * phi if acc is None else acc + disc * phi
            disc *= gamma
            if done or disc == 0.0:
                break
            a = policy(s_next, rng)
            s = s_next
        total = acc if total is None else total + acc
    return SfVector(total / n_rollouts)


@dataclass
class TabularMdp:
    """Finite MDP with per-transition feature vectors.

    probs has shape (S, A, S); features has shape (S, A, S, d). States flagged
    terminal absorb the episode after being entered.
    """

    probs: np.ndarray
    features: np.ndarray
    terminal: np.ndarray = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64)
        n_states = self.probs.shape[0]
        if self.terminal is None:
            self.terminal = np.zeros(n_states, dtype=bool)
        else:
            self.terminal = np.asarray(self.terminal, dtype=bool)
        if not np.allclose(self.probs.sum(axis=-1), 1.0):
            raise ValueError("transition probabilities must sum to 1")
        self._cum = np.cumsum(self.probs, axis=-1)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[-1]

    def transition(self, state, action, rng):
        s_next = int(np.searchsorted(self._cum[state, action], rng.random()))
        s_next = min(s_next, self.n_states - 1)
        phi = self.features[state, action, s_next]
        return s_next, phi, bool(self.terminal[s_next])
