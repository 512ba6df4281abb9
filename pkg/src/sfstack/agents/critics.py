"""Successor-feature critics: stacked expert blocks and the collapsed variant.

Both critics map (state, action, task weights) to a vector of per-component
successor-feature predictions. The stacked critic gives every component its
own encoders and output trunk; nothing is shared, so the gradient of one
component's loss is exactly zero on every other component's parameters. The
collapsed critic shares all encoders and a single trunk with a vector head.
"""

from __future__ import annotations

import numpy as np

from ..nn.layers import Mlp, StackedMlp


class SfaStack:
    """d parameter-disjoint expert blocks, one scalar prediction each.

    Per block: state/action/task encoders (enc_layers hidden layers each,
    0 = pass the raw input through), concatenated and fed to an output trunk
    of head_layers hidden layers ending in one linear unit. Block k owns
    slice k of every stacked weight tensor.
    """

    def __init__(self, n_features: int, obs_dim: int, act_dim: int, task_dim: int,
                 width: int, enc_layers: int, head_layers: int, rng: np.random.Generator):
        self.n_features = n_features
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.task_dim = task_dim
        self.width = width
        self.enc_layers = enc_layers
        self.head_layers = head_layers
        if enc_layers > 0:
            enc_sizes = [width] * enc_layers
            self.enc_s = StackedMlp(n_features, [obs_dim] + enc_sizes, rng, activate_final=True)
            self.enc_a = StackedMlp(n_features, [act_dim] + enc_sizes, rng, activate_final=True)
            self.enc_w = StackedMlp(n_features, [task_dim] + enc_sizes, rng, activate_final=True)
            concat_dim = 3 * width
        else:
            self.enc_s = self.enc_a = self.enc_w = None
            concat_dim = obs_dim + act_dim + task_dim
        self.head = StackedMlp(
            n_features, [concat_dim] + [width] * head_layers + [1], rng
        )

    def forward(self, s: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Predict all components; inputs are (R, dim), output is (R, d)."""
        if self.enc_s is not None:
            cat = np.concatenate(
                [self.enc_s.forward(s), self.enc_a.forward(a), self.enc_w.forward(w)], axis=2
            )
        else:
            cat = np.concatenate([s, a, w], axis=1)
        out = self.head.forward(cat)  # (d, R, 1)
        return out[:, :, 0].T

    def backward(self, dpsi: np.ndarray, accumulate: bool = True) -> np.ndarray:
        """Backprop d(loss)/d(psi); returns d(loss)/d(action) summed over blocks."""
        dout = np.ascontiguousarray(dpsi.T)[:, :, None]
        dcat = self.head.backward(dout, accumulate=accumulate)
        if self.enc_s is not None:
            wdt = self.width
            self.enc_s.backward(dcat[:, :, :wdt], accumulate=accumulate)
            da = self.enc_a.backward(dcat[:, :, wdt : 2 * wdt], accumulate=accumulate)
            self.enc_w.backward(dcat[:, :, 2 * wdt :], accumulate=accumulate)
        else:
            da = dcat[:, :, self.obs_dim : self.obs_dim + self.act_dim]
        return da.sum(axis=0)

    def _parts(self):
        if self.enc_s is not None:
            return [("enc_s", self.enc_s), ("enc_a", self.enc_a),
                    ("enc_w", self.enc_w), ("head", self.head)]
        return [("head", self.head)]

    def zero_grad(self):
        for _, part in self._parts():
            part.zero_grad()

    def named_parameters(self, prefix: str):
        out = []
        for name, part in self._parts():
            out.extend(part.named_parameters(f"{prefix}.{name}"))
        return out

    def gradients(self):
        out = []
        for _, part in self._parts():
            out.extend(part.gradients())
        return out

    def count_parameters(self) -> int:
        return sum(arr.size for _, arr in self.named_parameters("x"))

    def clone(self) -> "SfaStack":
        other = SfaStack(
            self.n_features, self.obs_dim, self.act_dim, self.task_dim,
            self.width, self.enc_layers, self.head_layers,
            np.random.default_rng(0),
        )
        other.copy_from(self)
        return other

    def copy_from(self, other: "SfaStack"):
        for (_, dst), (_, src) in zip(self.named_parameters("x"), other.named_parameters("x")):
            dst[:] = src


class CollapsedSfCritic:
    """Shared-encoder critic predicting the full successor-feature vector."""

    def __init__(self, n_features: int, obs_dim: int, act_dim: int, task_dim: int,
                 width: int, enc_layers: int, head_layers: int, rng: np.random.Generator):
        self.n_features = n_features
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.task_dim = task_dim
        self.width = width
        self.enc_layers = enc_layers
        self.head_layers = head_layers
        if enc_layers > 0:
            enc_sizes = [width] * enc_layers
            self.enc_s = Mlp([obs_dim] + enc_sizes, rng, activate_final=True)
            self.enc_a = Mlp([act_dim] + enc_sizes, rng, activate_final=True)
            self.enc_w = Mlp([task_dim] + enc_sizes, rng, activate_final=True)
            concat_dim = 3 * width
        else:
            self.enc_s = self.enc_a = self.enc_w = None
            concat_dim = obs_dim + act_dim + task_dim
        self.head = Mlp([concat_dim] + [width] * head_layers + [n_features], rng)

    def forward(self, s: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
        if self.enc_s is not None:
            cat = np.concatenate(
                [self.enc_s.forward(s), self.enc_a.forward(a), self.enc_w.forward(w)], axis=1
            )
        else:
            cat = np.concatenate([s, a, w], axis=1)
        return self.head.forward(cat)

    def backward(self, dpsi: np.ndarray, accumulate: bool = True) -> np.ndarray:
        dcat = self.head.backward(dpsi, accumulate=accumulate)
        if self.enc_s is not None:
            wdt = self.width
            self.enc_s.backward(dcat[:, :wdt], accumulate=accumulate)
            da = self.enc_a.backward(dcat[:, wdt : 2 * wdt], accumulate=accumulate)
            self.enc_w.backward(dcat[:, 2 * wdt :], accumulate=accumulate)
        else:
            da = dcat[:, self.obs_dim : self.obs_dim + self.act_dim]
        return da

    def _parts(self):
        if self.enc_s is not None:
            return [("enc_s", self.enc_s), ("enc_a", self.enc_a),
                    ("enc_w", self.enc_w), ("head", self.head)]
        return [("head", self.head)]

    def zero_grad(self):
        for _, part in self._parts():
            part.zero_grad()

    def named_parameters(self, prefix: str):
        out = []
        for name, part in self._parts():
            out.extend(part.named_parameters(f"{prefix}.{name}"))
        return out

    def gradients(self):
        out = []
        for _, part in self._parts():
            out.extend(part.gradients())
        return out

    def count_parameters(self) -> int:
        return sum(arr.size for _, arr in self.named_parameters("x"))

    def clone(self) -> "CollapsedSfCritic":
        other = CollapsedSfCritic(
            self.n_features, self.obs_dim, self.act_dim, self.task_dim,
            self.width, self.enc_layers, self.head_layers,
            np.random.default_rng(0),
        )
        other.copy_from(self)
        return other

    def copy_from(self, other: "CollapsedSfCritic"):
        for (_, dst), (_, src) in zip(self.named_parameters("x"), other.named_parameters("x")):
            dst[:] = src


class TwinSfCritics:
    """Two independent critics plus their Polyak targets.

    Targets start as exact copies of the online networks.
    """

    def __init__(self, critic_1, critic_2):
        self.online = [critic_1, critic_2]
        self.target = [critic_1.clone(), critic_2.clone()]

    def named_parameters(self, prefix: str):
        out = []
        for m, critic in enumerate(self.online, start=1):
            out.extend(critic.named_parameters(f"{prefix}.online{m}"))
        for m, critic in enumerate(self.target, start=1):
            out.extend(critic.named_parameters(f"{prefix}.target{m}"))
        return out

    def count_parameters(self) -> int:
        """Trainable parameters only; target copies excluded."""
        return sum(c.count_parameters() for c in self.online)
