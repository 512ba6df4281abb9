"""Adam optimizer, Polyak target averaging, and the entropy temperature."""

from __future__ import annotations

import numpy as np

from .. import kernels


class Adam:
    """Adam with bias correction over a fixed list of parameter arrays.

    Gradients are passed to step() as a list aligned with the parameters;
    updates happen in place.
    """

    def __init__(self, params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError("gradient shape does not match parameter shape")
            kernels.adam_update(
                p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1),
                self.lr, self.beta1, self.beta2, self.eps, c1, c2,
            )


def polyak_update(target_params, online_params, rho_step: float):
    """In-place target <- (1 - rho_step)*target + rho_step*online.

    rho_step is the fraction moved toward the online network per call
    (0 leaves targets untouched, 1 copies the online network).
    """
    if not 0.0 <= rho_step <= 1.0:
        raise ValueError("rho_step must lie in [0, 1]")
    for t, o in zip(target_params, online_params):
        if t.shape != o.shape:
            raise ValueError("target/online parameter shapes differ")
        kernels.polyak(t.reshape(-1), o.reshape(-1), rho_step)


class TemperatureParam:
    """Entropy temperature tau = exp(log_tau) with its target entropy."""

    def __init__(self, act_dim: int, init_log_tau: float = 0.0,
                 target_entropy: float | None = None):
        self.log_tau = np.array([init_log_tau], dtype=np.float64)
        self.target_entropy = -float(act_dim) if target_entropy is None else float(target_entropy)

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau[0]))

    def loss_and_grad(self, logp: np.ndarray, batch_size: int):
        """Temperature loss sum_i -tau*(logp_i + target_entropy), batch-averaged.

        logp holds the sampled log-probs over all rows (batch x tasks) and is
        treated as constant. Returns (loss, grad wrt log_tau); both coincide
        because d(-tau x)/d(log tau) = -tau x.
        """
        tau = self.tau
        total = float(np.sum(logp + self.target_entropy)) / batch_size
        loss = -tau * total
        return loss, np.array([loss])
