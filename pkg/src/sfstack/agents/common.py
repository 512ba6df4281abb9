"""Shared agent machinery: replay buffer, observation building, hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AgentHyperparams:
    """Network and update hyperparameters shared by all agent variants."""

    hidden_size: int = 256
    hidden_layers: int = 2
    enc_layers: int = 1
    head_layers: int = 2
    lr: float = 3e-4
    gamma: float = 0.99
    polyak_rho: float = 0.005
    batch_size: int = 256
    init_log_tau: float = 0.0
    # actor Q term for alternative-task actions: evaluated on the task that
    # produced the action by default, on the stored true task when set
    actor_q_on_true_task: bool = False


def observe_for_generalist(s: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Append task weights to the observation (generalist conditioning).

    Works on single observations (1-D) and batches (2-D); the weight entries
    appear verbatim at the tail. Specialist agents simply do not call this.
    """
    s = np.asarray(s, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if s.ndim == 1:
        return np.concatenate([s, w])
    if w.ndim == 1:
        w = np.broadcast_to(w, (s.shape[0], w.shape[0]))
    return np.concatenate([s, w], axis=1)


@dataclass
class Batch:
    """Sampled replay slice; alternatives has shape (B, n_alt, d)."""

    s: np.ndarray
    a: np.ndarray
    phi: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray
    w: np.ndarray
    alternatives: np.ndarray

    def __len__(self) -> int:
        return self.s.shape[0]


class ReplayBuffer:
    """Uniform-sampling FIFO ring buffer of transitions."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, feat_dim: int,
                 n_alternatives: int = 0):
        self.capacity = int(capacity)
        self.n_alternatives = n_alternatives
        self.s = np.zeros((self.capacity, obs_dim))
        self.a = np.zeros((self.capacity, act_dim))
        self.phi = np.zeros((self.capacity, feat_dim))
        self.s_next = np.zeros((self.capacity, obs_dim))
        self.terminal = np.zeros(self.capacity)
        self.w = np.zeros((self.capacity, feat_dim))
        self.alternatives = np.zeros((self.capacity, n_alternatives, feat_dim))
        self._idx = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, s, a, phi, s_next, terminal, w, alternatives=()):
        if len(alternatives) != self.n_alternatives:
            raise ValueError(
                f"expected {self.n_alternatives} alternative tasks, got {len(alternatives)}"
            )
        i = self._idx
        self.s[i] = s
        self.a[i] = a
        self.phi[i] = phi
        self.s_next[i] = s_next
        self.terminal[i] = float(terminal)
        self.w[i] = w
        for j, z in enumerate(alternatives):
            self.alternatives[i, j] = z
        self._idx = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(
            s=self.s[idx],
            a=self.a[idx],
            phi=self.phi[idx],
            s_next=self.s_next[idx],
            terminal=self.terminal[idx],
            w=self.w[idx],
            alternatives=self.alternatives[idx],
        )
