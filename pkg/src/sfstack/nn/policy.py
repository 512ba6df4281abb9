"""Squashed-Gaussian policy: MLP trunk, mean/log-std heads, tanh squash.

Sampling is reparameterized (a = tanh(mu + sigma * eps)), so losses in the
action or the log-probability backpropagate into the trunk. Log-std outputs
are clamped; the clamp gradient is exact (zero outside the bounds).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .layers import Dense, Mlp

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


@dataclass
class _SampleCache:
    a: np.ndarray
    eps: np.ndarray
    sigma: np.ndarray
    clamp_mask: np.ndarray


class SquashedGaussianHead:
    """Mean and log-std output layers over shared features."""

    def __init__(self, n_features: int, act_dim: int, rng: np.random.Generator,
                 log_std_min: float = LOG_STD_MIN, log_std_max: float = LOG_STD_MAX):
        self.mean = Dense(n_features, act_dim, rng)
        self.log_std = Dense(n_features, act_dim, rng)
        self.act_dim = act_dim
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max

    def sample(self, features: np.ndarray, rng: np.random.Generator | None,
               eps: np.ndarray | None = None):
        """Stochastic action in (-1, 1)^act_dim and its log-probability.

        eps pins the reparameterization noise (tests, gradient checks);
        otherwise it is drawn from rng.
        """
        mu = self.mean.forward(features)
        ls_raw = self.log_std.forward(features)
        ls = np.clip(ls_raw, self.log_std_min, self.log_std_max)
        sigma = np.exp(ls)
        if eps is None:
            eps = rng.standard_normal(mu.shape)
        a, logp = kernels.tanh_gauss(mu, ls, eps)
        mask = (ls_raw > self.log_std_min) & (ls_raw < self.log_std_max)
        return a, logp, _SampleCache(a, eps, sigma, mask)

    def mean_action(self, features: np.ndarray) -> np.ndarray:
        return np.tanh(self.mean.forward(features))

    def backward(self, cache: _SampleCache, dl_da: np.ndarray, dl_dlogp: np.ndarray,
                 accumulate: bool = True) -> np.ndarray:
        """Grads of a loss given d/d(action) and d/d(logp); returns d/d(features)."""
        d_mu, d_ls = kernels.tanh_gauss_bwd(dl_da, dl_dlogp, cache.a, cache.eps, cache.sigma)
        d_ls = d_ls * cache.clamp_mask
        dfeat = self.mean.backward(d_mu, accumulate=accumulate)
        dfeat = dfeat + self.log_std.backward(d_ls, accumulate=accumulate)
        return dfeat

    def zero_grad(self):
        self.mean.zero_grad()
        self.log_std.zero_grad()

    def named_parameters(self, prefix: str):
        return self.mean.named_parameters(f"{prefix}.mean") + self.log_std.named_parameters(
            f"{prefix}.log_std"
        )

    def gradients(self):
        return self.mean.gradients() + self.log_std.gradients()


class GaussianPolicy:
    """Actor network: obs (optionally with task weights appended) -> action."""

    def __init__(self, obs_dim: int, act_dim: int, hidden_size: int, hidden_layers: int,
                 rng: np.random.Generator):
        sizes = [obs_dim] + [hidden_size] * hidden_layers
        self.trunk = Mlp(sizes, rng, activate_final=True)
        self.head = SquashedGaussianHead(hidden_size, act_dim, rng)
        self.obs_dim = obs_dim
        self.act_dim = act_dim

    def sample(self, obs: np.ndarray, rng: np.random.Generator | None,
               eps: np.ndarray | None = None):
        feat = self.trunk.forward(obs)
        return self.head.sample(feat, rng, eps=eps)

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        return self.head.mean_action(self.trunk.forward(obs))

    def backward(self, cache: _SampleCache, dl_da: np.ndarray, dl_dlogp: np.ndarray):
        dfeat = self.head.backward(cache, dl_da, dl_dlogp)
        self.trunk.backward(dfeat)

    def zero_grad(self):
        self.trunk.zero_grad()
        self.head.zero_grad()

    def named_parameters(self, prefix: str = "actor"):
        return self.trunk.named_parameters(f"{prefix}.trunk") + self.head.named_parameters(
            f"{prefix}.head"
        )

    def gradients(self):
        return self.trunk.gradients() + self.head.gradients()

    def count_parameters(self) -> int:
        return sum(arr.size for _, arr in self.named_parameters())
