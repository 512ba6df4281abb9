"""Successor-feature agents: stacked (expert blocks) or collapsed critics,
GPI action selection, and the multi-task actor/critic/temperature losses.

Per update, each stored task (the true weights plus the sampled alternatives)
contributes one term: fresh policy actions are drawn for the task at both the
current and next state, each twin critic regresses its successor-feature
prediction onto phi + gamma * target-psi with no cross-twin minimum, and the
actor maximizes the minimum target-derived scalar Q. The actor only ever sees
the scalar psi . w, never individual psi components.
"""

from __future__ import annotations

import numpy as np

from ..sfcore import TaskSamplerConfig, TaskWeights, sample_task_alternatives
from ..nn.optim import Adam, TemperatureParam, polyak_update
from ..nn.policy import GaussianPolicy
from .common import AgentHyperparams, Batch
from .critics import CollapsedSfCritic, SfaStack, TwinSfCritics
from .sac import NonFiniteLossError, _check_finite


def q_from_psi(psi, w) -> float:
    """Scalar task value psi . w; accepts domain wrappers or plain arrays."""
    pv = np.asarray(getattr(psi, "values", psi), dtype=np.float64)
    wv = np.asarray(getattr(w, "values", w), dtype=np.float64)
    if pv.shape[-1] != wv.shape[-1]:
        raise ValueError(f"dimension mismatch: psi has {pv.shape[-1]}, w has {wv.shape[-1]}")
    return float(pv @ wv) if pv.ndim == 1 else pv @ wv


def gpi_select_action(critics: TwinSfCritics, actor: GaussianPolicy, s: np.ndarray,
                      w: np.ndarray, alternatives, rng: np.random.Generator) -> np.ndarray:
    """Sample one candidate action per task and keep the best on the true task.

    Candidates come from the task-conditioned policy; each is scored by the
    minimum over the twin online critics of psi(s, b, w) . w. With no
    alternatives this is plain policy sampling.
    """
    w = np.asarray(getattr(w, "values", w), dtype=np.float64)
    tasks = [w] + [np.asarray(getattr(z, "values", z), dtype=np.float64) for z in alternatives]
    n = len(tasks)
    task_rows = np.stack(tasks)
    s_rows = np.broadcast_to(s, (n, s.shape[0]))
    obs_rows = np.concatenate([s_rows, task_rows], axis=1)
    candidates, _, _ = actor.sample(obs_rows, rng)
    if n == 1:
        return candidates[0]
    w_rows = np.broadcast_to(w, (n, w.shape[0]))
    scores = np.minimum(
        critics.online[0].forward(s_rows, candidates, w_rows) @ w,
        critics.online[1].forward(s_rows, candidates, w_rows) @ w,
    )
    return candidates[int(np.argmax(scores))]


class SusfaAgent:
    """Actor-critic agent whose critics predict successor-feature vectors.

    collapsed=False builds the stack of parameter-disjoint expert blocks;
    collapsed=True builds the shared-encoder critic with a vector head.
    The actor always takes the task weights concatenated to the observation.
    """

    def __init__(self, obs_dim: int, act_dim: int, feat_dim: int,
                 hp: AgentHyperparams, rng: np.random.Generator,
                 collapsed: bool = False,
                 sampler: TaskSamplerConfig | None = None,
                 tunable_mask: np.ndarray | None = None):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.feat_dim = feat_dim
        self.hp = hp
        self.collapsed = collapsed
        self.sampler = sampler if sampler is not None else TaskSamplerConfig(n_alternatives=0)
        self.tunable_mask = (
            np.ones(feat_dim, dtype=bool) if tunable_mask is None else np.asarray(tunable_mask)
        )
        self.actor = GaussianPolicy(
            obs_dim + feat_dim, act_dim, hp.hidden_size, hp.hidden_layers, rng
        )
        critic_cls = CollapsedSfCritic if collapsed else SfaStack
        self.critics = TwinSfCritics(
            critic_cls(feat_dim, obs_dim, act_dim, feat_dim,
                       hp.hidden_size, hp.enc_layers, hp.head_layers, rng),
            critic_cls(feat_dim, obs_dim, act_dim, feat_dim,
                       hp.hidden_size, hp.enc_layers, hp.head_layers, rng),
        )
        self.temperature = TemperatureParam(act_dim, hp.init_log_tau)
        self.opt_actor = Adam([p for _, p in self.actor.named_parameters()], lr=hp.lr)
        self.opt_critics = [
            Adam([p for _, p in c.named_parameters("x")], lr=hp.lr) for c in self.critics.online
        ]
        self.opt_tau = Adam([self.temperature.log_tau], lr=hp.lr)

    # ------------------------------------------------------------------ io

    def build_obs(self, s: np.ndarray, w: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        if s.ndim == 1:
            return np.concatenate([s, w])
        if w.ndim == 1:
            w = np.broadcast_to(w, (s.shape[0], w.shape[0]))
        return np.concatenate([s, w], axis=1)

    def act(self, s: np.ndarray, w: np.ndarray, deterministic: bool,
            rng: np.random.Generator) -> np.ndarray:
        obs = self.build_obs(s, w)[None, :]
        if deterministic:
            return self.actor.mean_action(obs)[0]
        return self.actor.sample(obs, rng)[0][0]

    def sample_alternatives(self, w: np.ndarray, rng: np.random.Generator) -> list:
        """Alternative tasks to train alongside w (and to store in the buffer)."""
        if self.sampler.n_alternatives == 0:
            return []
        alts = sample_task_alternatives(TaskWeights(w, self.tunable_mask), self.sampler, rng)
        return [z.values for z in alts]

    def act_gpi(self, s: np.ndarray, w: np.ndarray, alternatives,
                rng: np.random.Generator) -> np.ndarray:
        if not alternatives:
            return self.act(s, w, deterministic=False, rng=rng)
        return gpi_select_action(self.critics, self.actor, s, w, alternatives, rng)

    def act_train(self, s: np.ndarray, w: np.ndarray, rng: np.random.Generator):
        """GPI action plus the alternative tasks to store with the transition."""
        alts = self.sample_alternatives(w, rng)
        return self.act_gpi(s, w, alts, rng), alts

    # -------------------------------------------------------------- update

    def update(self, batch: Batch, rng: np.random.Generator) -> dict:
        hp = self.hp
        n = len(batch)
        d = self.feat_dim
        tau = self.temperature.tau
        n_tasks = 1 + batch.alternatives.shape[1]

        # rows are task-major: task 0 is the stored true w, then alternatives
        task_rows = np.concatenate(
            [batch.w[None], batch.alternatives.transpose(1, 0, 2)], axis=0
        ).reshape(n_tasks * n, d)
        s_rows = np.tile(batch.s, (n_tasks, 1))
        s_next_rows = np.tile(batch.s_next, (n_tasks, 1))
        phi_rows = np.tile(batch.phi, (n_tasks, 1))
        boot_rows = np.tile(1.0 - batch.terminal, n_tasks)[:, None]

        # per-twin bootstrap targets at fresh next-state, task-conditioned actions
        a_next, _, _ = self.actor.sample(
            np.concatenate([s_next_rows, task_rows], axis=1), rng
        )
        ys = [
            phi_rows + hp.gamma * boot_rows * tgt.forward(s_next_rows, a_next, task_rows)
            for tgt in self.critics.target
        ]

        a_new, logp_new, actor_cache = self.actor.sample(
            np.concatenate([s_rows, task_rows], axis=1), rng
        )
        psi_losses = []
        for critic, opt, y in zip(self.critics.online, self.opt_critics, ys):
            pred = critic.forward(s_rows, a_new, task_rows)
            err = pred - y
            psi_losses.append(float(np.sum(err * err)) / n)
            critic.zero_grad()
            critic.backward((2.0 / n) * err)
            opt.step(critic.gradients())

        # actor loss through the scalar Q of the target critics
        task_q_rows = np.tile(batch.w, (n_tasks, 1)) if hp.actor_q_on_true_task else task_rows
        q_vals = np.stack([
            np.einsum("rd,rd->r", tgt.forward(s_rows, a_new, task_q_rows), task_q_rows)
            for tgt in self.critics.target
        ])
        rows = np.arange(n_tasks * n)
        sel = np.argmin(q_vals, axis=0)
        actor_loss = float(np.sum(tau * logp_new - q_vals[sel, rows])) / n
        dq_da = np.zeros_like(a_new)
        for m, tgt in enumerate(self.critics.target):
            mask = (sel == m).astype(np.float64)
            if mask.any():
                dq_da += tgt.backward(mask[:, None] * task_q_rows, accumulate=False)
        self.actor.zero_grad()
        self.actor.backward(
            actor_cache, dl_da=-dq_da / n, dl_dlogp=np.full(n_tasks * n, tau / n)
        )
        self.opt_actor.step(self.actor.gradients())

        tau_loss, tau_grad = self.temperature.loss_and_grad(logp_new, n)
        self.opt_tau.step([tau_grad])

        for critic, tgt in zip(self.critics.online, self.critics.target):
            polyak_update(
                [p for _, p in tgt.named_parameters("x")],
                [p for _, p in critic.named_parameters("x")],
                hp.polyak_rho,
            )

        report = {
            "actor": actor_loss,
            "psi1": psi_losses[0],
            "psi2": psi_losses[1],
            "temperature": tau_loss,
        }
        _check_finite(report, "susfa_update")
        return report

    # ------------------------------------------------------------ plumbing

    def named_parameters(self):
        out = self.actor.named_parameters("actor")
        out.extend(self.critics.named_parameters("psi"))
        out.append(("log_tau", self.temperature.log_tau))
        return out

    def count_parameters(self) -> int:
        """Trainable parameters: actor, online critics, temperature."""
        n = self.actor.count_parameters() + self.critics.count_parameters()
        return n + self.temperature.log_tau.size
