"""Soft actor-critic baseline with twin scalar Q critics.

The update follows the multi-task loss specialized to the single stored task:
critic predictions and the actor term are evaluated at fresh policy samples,
the critic regresses onto r + gamma * (min twin target Q - tau * log pi) at
the next state, and the actor maximizes the minimum target-network Q. One
Adam step per network per call, then a Polyak step on both targets.
"""

from __future__ import annotations

import numpy as np

from ..nn.layers import Mlp
from ..nn.optim import Adam, TemperatureParam, polyak_update
from ..nn.policy import GaussianPolicy
from .common import AgentHyperparams, Batch, observe_for_generalist


class NonFiniteLossError(RuntimeError):
    """An update produced a non-finite loss; training must stop."""


def _check_finite(report: dict, context: str):
    bad = {k: v for k, v in report.items() if not np.isfinite(v)}
    if bad:
        raise NonFiniteLossError(f"non-finite losses in {context}: {bad}")


class SacAgent:
    """Twin-critic SAC; generalists take the task weights in the observation."""

    def __init__(self, obs_dim: int, act_dim: int, feat_dim: int, generalist: bool,
                 hp: AgentHyperparams, rng: np.random.Generator):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.feat_dim = feat_dim
        self.generalist = generalist
        self.hp = hp
        in_dim = obs_dim + feat_dim if generalist else obs_dim
        self.in_dim = in_dim
        hidden = [hp.hidden_size] * hp.hidden_layers
        self.actor = GaussianPolicy(in_dim, act_dim, hp.hidden_size, hp.hidden_layers, rng)
        self.critics = [Mlp([in_dim + act_dim] + hidden + [1], rng) for _ in range(2)]
        self.targets = []
        for critic in self.critics:
            tgt = Mlp([in_dim + act_dim] + hidden + [1], rng)
            for (_, dst), (_, src) in zip(tgt.named_parameters("x"), critic.named_parameters("x")):
                dst[:] = src
            self.targets.append(tgt)
        self.temperature = TemperatureParam(act_dim, hp.init_log_tau)
        self.opt_actor = Adam(
            [p for _, p in self.actor.named_parameters()], lr=hp.lr
        )
        self.opt_critics = [
            Adam([p for _, p in c.named_parameters("x")], lr=hp.lr) for c in self.critics
        ]
        self.opt_tau = Adam([self.temperature.log_tau], lr=hp.lr)

    # ------------------------------------------------------------------ io

    def build_obs(self, s: np.ndarray, w: np.ndarray) -> np.ndarray:
        return observe_for_generalist(s, w) if self.generalist else np.asarray(s, dtype=np.float64)

    def act(self, s: np.ndarray, w: np.ndarray, deterministic: bool,
            rng: np.random.Generator) -> np.ndarray:
        obs = self.build_obs(s, w)[None, :]
        if deterministic:
            return self.actor.mean_action(obs)[0]
        return self.actor.sample(obs, rng)[0][0]

    def act_train(self, s: np.ndarray, w: np.ndarray, rng: np.random.Generator):
        """Stochastic action plus the (empty) alternative-task list."""
        return self.act(s, w, deterministic=False, rng=rng), []

    # -------------------------------------------------------------- update

    def update(self, batch: Batch, rng: np.random.Generator) -> dict:
        hp = self.hp
        n = len(batch)
        tau = self.temperature.tau
        obs = self.build_obs(batch.s, batch.w)
        obs_next = self.build_obs(batch.s_next, batch.w)
        r = np.einsum("bd,bd->b", batch.phi, batch.w)
        boot = 1.0 - batch.terminal

        # critic target from the target networks at a fresh next-state sample
        a_next, logp_next, _ = self.actor.sample(obs_next, rng)
        x_next = np.concatenate([obs_next, a_next], axis=1)
        q_next = np.minimum(
            self.targets[0].forward(x_next)[:, 0], self.targets[1].forward(x_next)[:, 0]
        )
        y = r + hp.gamma * boot * (q_next - tau * logp_next)

        # critic regression at a fresh current-state sample (task-0 action)
        a_new, logp_new, actor_cache = self.actor.sample(obs, rng)
        x_new = np.concatenate([obs, a_new], axis=1)
        critic_losses = []
        for critic, opt in zip(self.critics, self.opt_critics):
            pred = critic.forward(x_new)[:, 0]
            err = pred - y
            critic_losses.append(float(err @ err) / n)
            critic.zero_grad()
            critic.backward((2.0 / n) * err[:, None])
            opt.step(critic.gradients())

        # actor: minimize tau*logp - min_m target Q at the sampled action
        q_vals = np.stack(
            [tgt.forward(x_new)[:, 0] for tgt in self.targets]
        )
        sel = np.argmin(q_vals, axis=0)
        actor_loss = float(np.sum(tau * logp_new - q_vals[sel, np.arange(n)])) / n
        dq_da = np.zeros_like(a_new)
        for m, tgt in enumerate(self.targets):
            mask = (sel == m).astype(np.float64)
            if mask.any():
                dx = tgt.backward(mask[:, None], accumulate=False)
                dq_da += dx[:, self.in_dim :]
        self.actor.zero_grad()
        self.actor.backward(actor_cache, dl_da=-dq_da / n, dl_dlogp=np.full(n, tau / n))
        self.opt_actor.step(self.actor.gradients())

        # temperature on detached log-probs
        tau_loss, tau_grad = self.temperature.loss_and_grad(logp_new, n)
        self.opt_tau.step([tau_grad])

        for critic, tgt in zip(self.critics, self.targets):
            polyak_update(
                [p for _, p in tgt.named_parameters("x")],
                [p for _, p in critic.named_parameters("x")],
                hp.polyak_rho,
            )

        report = {
            "actor": actor_loss,
            "critic1": critic_losses[0],
            "critic2": critic_losses[1],
            "temperature": tau_loss,
        }
        _check_finite(report, "sac_update")
        return report

    # ------------------------------------------------------------ plumbing

    def named_parameters(self):
        out = self.actor.named_parameters("actor")
        for m, critic in enumerate(self.critics, start=1):
            out.extend(critic.named_parameters(f"critic{m}"))
        for m, tgt in enumerate(self.targets, start=1):
            out.extend(tgt.named_parameters(f"target{m}"))
        out.append(("log_tau", self.temperature.log_tau))
        return out

    def count_parameters(self) -> int:
        """Trainable parameters: actor, online critics, temperature."""
        n = self.actor.count_parameters()
        n += sum(c.count_parameters() for c in self.critics)
        return n + self.temperature.log_tau.size
