import copy

import numpy as np
import pytest

from sfstack.agents import (
    AgentHyperparams,
    Batch,
    ReplayBuffer,
    SacAgent,
    SusfaAgent,
    gpi_select_action,
    observe_for_generalist,
)
from sfstack.agents.sac import NonFiniteLossError
from sfstack.sfcore import TaskSamplerConfig
from oracles import finite_diff_check

OBS, ACT, FEAT = 4, 2, 3
HP = AgentHyperparams(hidden_size=8, hidden_layers=2, enc_layers=1, head_layers=2,
                      lr=1e-3, gamma=0.9, batch_size=4)


def _batch(rng, n=4, n_alt=0, terminal=None):
    alts = rng.uniform(0, 1, size=(n, n_alt, FEAT))
    alts /= alts.sum(axis=2, keepdims=True)
    term = np.zeros(n) if terminal is None else np.asarray(terminal, float)
    w = rng.uniform(0.1, 1.0, size=(n, FEAT))
    w /= w.sum(axis=1, keepdims=True)
    return Batch(
        s=rng.normal(size=(n, OBS)),
        a=rng.uniform(-1, 1, size=(n, ACT)),
        phi=rng.normal(size=(n, FEAT)),
        s_next=rng.normal(size=(n, OBS)),
        terminal=term,
        w=w,
        alternatives=alts,
    )


# ------------------------------------------------------------ manual math


def _mlp_forward(net, x, activate_final=False):
    h = x
    for i, layer in enumerate(net.layers):
        h = h @ layer.W + layer.b
        if i < len(net.layers) - 1 or activate_final:
            h = np.maximum(h, 0.0)
    return h


def _actor_forward(actor, obs, eps):
    feat = _mlp_forward(actor.trunk, obs, activate_final=True)
    mu = feat @ actor.head.mean.W + actor.head.mean.b
    ls = np.clip(feat @ actor.head.log_std.W + actor.head.log_std.b, -20.0, 2.0)
    sigma = np.exp(ls)
    u = mu + sigma * eps
    a = np.tanh(u)
    logp = (
        -0.5 * eps**2 - ls - 0.5 * np.log(2 * np.pi)
        - 2.0 * (np.log(2.0) - u - np.log1p(np.exp(-np.abs(2 * u))) - np.maximum(-2 * u, 0.0)
                 + np.maximum(-2 * u, 0.0))
    )
    # softplus(-2u) in stable form
    sp = np.maximum(-2 * u, 0.0) + np.log1p(np.exp(-np.abs(2 * u)))
    logp = -0.5 * eps**2 - ls - 0.5 * np.log(2 * np.pi) - 2.0 * (np.log(2.0) - u - sp)
    return a, logp.sum(axis=-1)


def _stack_forward(stack, s, a, w):
    def enc(mlp, x):
        h = np.broadcast_to(x, (mlp.n_blocks,) + x.shape)
        for layer in mlp.layers:
            h = np.maximum(np.matmul(h, layer.W) + layer.b, 0.0)
        return h

    cat = np.concatenate(
        [enc(stack.enc_s, s), enc(stack.enc_a, a), enc(stack.enc_w, w)], axis=2
    )
    h = cat
    layers = stack.head.layers
    for i, layer in enumerate(layers):
        h = np.matmul(h, layer.W) + layer.b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h[:, :, 0].T


class TestObserveForGeneralist:
    def test_specialist_leaves_observation(self):
        rng = np.random.default_rng(0)
        agent = SacAgent(OBS, ACT, FEAT, generalist=False, hp=HP, rng=rng)
        s = rng.normal(size=OBS)
        assert np.array_equal(agent.build_obs(s, np.ones(FEAT)), s)

    def test_concatenation_lengths(self):
        s = np.zeros(8)
        w = np.ones(5)
        assert observe_for_generalist(s, w).shape == (13,)

    def test_weights_verbatim_at_tail(self):
        rng = np.random.default_rng(1)
        s, w = rng.normal(size=6), rng.uniform(0, 1, 4)
        out = observe_for_generalist(s, w)
        assert np.array_equal(out[6:], w)
        assert np.array_equal(out[:6], s)


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(5, 1, 1, 1, 0)
        for i in range(8):
            buf.add([float(i)], [0.0], [0.0], [0.0], False, [1.0], [])
        assert len(buf) == 5
        stored = sorted(buf.s[:, 0].tolist())
        assert stored == [3.0, 4.0, 5.0, 6.0, 7.0]

    def test_sampling_only_filled_region(self):
        buf = ReplayBuffer(100, 1, 1, 1, 0)
        for i in range(10):
            buf.add([float(i)], [0.0], [0.0], [0.0], False, [1.0], [])
        batch = buf.sample(64, np.random.default_rng(0))
        assert np.all(batch.s[:, 0] < 10.0)

    def test_alternative_count_enforced(self):
        buf = ReplayBuffer(10, 1, 1, 2, 2)
        with pytest.raises(ValueError, match="alternative"):
            buf.add([0.0], [0.0], [0.0, 0.0], [0.0], False, [1.0, 0.0], [])

    def test_empty_buffer_sampling_rejected(self):
        buf = ReplayBuffer(4, 1, 1, 1, 0)
        with pytest.raises(ValueError):
            buf.sample(2, np.random.default_rng(0))


class TestActing:
    def test_deterministic_action_repeatable_and_rng_free(self):
        rng = np.random.default_rng(2)
        agent = SacAgent(OBS, ACT, FEAT, generalist=True, hp=HP, rng=rng)
        s, w = rng.normal(size=OBS), np.ones(FEAT) / 3
        a1 = agent.act(s, w, deterministic=True, rng=None)
        a2 = agent.act(s, w, deterministic=True, rng=None)
        assert np.array_equal(a1, a2)

    def test_actions_inside_unit_box(self):
        rng = np.random.default_rng(3)
        agent = SusfaAgent(OBS, ACT, FEAT, HP, rng)
        s, w = rng.normal(size=OBS), np.ones(FEAT)
        for _ in range(50):
            a = agent.act(s, w, deterministic=False, rng=rng)
            assert np.all(np.abs(a) < 1.0)


class TestGpiSelection:
    def _agent(self, n_z=2):
        rng = np.random.default_rng(4)
        sampler = TaskSamplerConfig(n_alternatives=n_z, stddev=0.2)
        return SusfaAgent(OBS, ACT, FEAT, HP, rng, sampler=sampler)

    def test_no_alternatives_reduces_to_plain_sampling(self):
        agent = self._agent(n_z=0)
        s, w = np.ones(OBS), np.ones(FEAT) / 3
        a1 = agent.act_gpi(s, w, [], np.random.default_rng(9))
        a2 = agent.act(s, w, deterministic=False, rng=np.random.default_rng(9))
        assert np.array_equal(a1, a2)

    def test_selection_matches_exhaustive_enumeration(self):
        agent = self._agent(n_z=2)
        rng = np.random.default_rng(5)
        s = rng.normal(size=OBS)
        w = np.ones(FEAT) / 3
        alts = [np.array([0.6, 0.2, 0.2]), np.array([0.1, 0.8, 0.1])]
        chosen = gpi_select_action(agent.critics, agent.actor, s, w, alts,
                                   np.random.default_rng(77))
        # enumeration oracle: same candidate draws, brute-force min-twin Q
        tasks = [w] + alts
        obs_rows = np.stack([np.concatenate([s, t]) for t in tasks])
        eps = np.random.default_rng(77).standard_normal((3, ACT))
        cands, _ = _actor_forward(agent.actor, obs_rows, eps)
        s_rows = np.tile(s, (3, 1))
        w_rows = np.tile(w, (3, 1))
        q = np.minimum(
            _stack_forward(agent.critics.online[0], s_rows, cands, w_rows) @ w,
            _stack_forward(agent.critics.online[1], s_rows, cands, w_rows) @ w,
        )
        assert np.array_equal(chosen, cands[int(np.argmax(q))])

    def test_argmax_of_two_scored_candidates(self):
        agent = self._agent(n_z=1)
        rng = np.random.default_rng(6)
        s = rng.normal(size=OBS)
        w = np.ones(FEAT) / 3
        alts = [np.array([0.5, 0.25, 0.25])]
        seed_rng = np.random.default_rng(123)
        chosen = gpi_select_action(agent.critics, agent.actor, s, w, alts, seed_rng)
        tasks = [w] + alts
        obs_rows = np.stack([np.concatenate([s, t]) for t in tasks])
        eps = np.random.default_rng(123).standard_normal((2, ACT))
        cands, _ = _actor_forward(agent.actor, obs_rows, eps)
        s_rows = np.tile(s, (2, 1))
        w_rows = np.tile(w, (2, 1))
        scores = np.minimum(
            _stack_forward(agent.critics.online[0], s_rows, cands, w_rows) @ w,
            _stack_forward(agent.critics.online[1], s_rows, cands, w_rows) @ w,
        )
        assert np.array_equal(chosen, cands[int(np.argmax(scores))])


class TestSacUpdate:
    def test_gamma_zero_tau_zero_target_is_reward(self):
        hp = AgentHyperparams(hidden_size=8, gamma=0.0, lr=1e-3, init_log_tau=-60.0)
        rng = np.random.default_rng(7)
        agent = SacAgent(OBS, ACT, FEAT, generalist=False, hp=hp, rng=rng)
        batch = _batch(np.random.default_rng(8))
        # zero critics with bias = mean reward have loss = var(r) against y = r
        r = np.einsum("bd,bd->b", batch.phi, batch.w)
        for critic in agent.critics:
            for _, p in critic.named_parameters("c"):
                p[:] = 0.0
            critic.layers[-1].b[:] = r.mean()
        report = agent.update(batch, np.random.default_rng(9))
        assert report["critic1"] == pytest.approx(np.mean((r - r.mean()) ** 2), rel=1e-9)

    def test_perfect_critic_zero_loss_on_deterministic_problem(self):
        hp = AgentHyperparams(hidden_size=8, gamma=0.0, lr=1e-3, init_log_tau=-60.0)
        rng = np.random.default_rng(10)
        agent = SacAgent(OBS, ACT, FEAT, generalist=False, hp=hp, rng=rng)
        batch = _batch(np.random.default_rng(11), n=1)
        r = float(batch.phi[0] @ batch.w[0])
        for critic, target in zip(agent.critics, agent.targets):
            for net in (critic, target):
                for _, p in net.named_parameters("c"):
                    p[:] = 0.0
                net.layers[-1].b[:] = r
        report = agent.update(batch, np.random.default_rng(12))
        assert report["critic1"] == pytest.approx(0.0, abs=1e-12)
        assert report["critic2"] == pytest.approx(0.0, abs=1e-12)

    def test_losses_match_frozen_weight_arithmetic(self):
        rng = np.random.default_rng(13)
        agent = SacAgent(OBS, ACT, FEAT, generalist=True, hp=HP, rng=rng)
        frozen = copy.deepcopy(agent)
        batch = _batch(np.random.default_rng(14), terminal=[0, 1, 0, 0])
        report = agent.update(batch, np.random.default_rng(15))

        # replicate the update arithmetic with raw numpy on the frozen copy
        tau = float(np.exp(frozen.temperature.log_tau[0]))
        n = len(batch)
        obs = np.concatenate([batch.s, batch.w], axis=1)
        obs2 = np.concatenate([batch.s_next, batch.w], axis=1)
        draw = np.random.default_rng(15)
        eps2 = draw.standard_normal((n, ACT))
        eps1 = draw.standard_normal((n, ACT))
        a2, logp2 = _actor_forward(frozen.actor, obs2, eps2)
        x2 = np.concatenate([obs2, a2], axis=1)
        q_next = np.minimum(
            _mlp_forward(frozen.targets[0], x2)[:, 0],
            _mlp_forward(frozen.targets[1], x2)[:, 0],
        )
        r = np.einsum("bd,bd->b", batch.phi, batch.w)
        y = r + HP.gamma * (1 - batch.terminal) * (q_next - tau * logp2)
        a1, logp1 = _actor_forward(frozen.actor, obs, eps1)
        x1 = np.concatenate([obs, a1], axis=1)
        for m, key in enumerate(["critic1", "critic2"]):
            pred = _mlp_forward(frozen.critics[m], x1)[:, 0]
            assert report[key] == pytest.approx(np.sum((pred - y) ** 2) / n, rel=1e-10)
        qbar = np.minimum(
            _mlp_forward(frozen.targets[0], x1)[:, 0],
            _mlp_forward(frozen.targets[1], x1)[:, 0],
        )
        assert report["actor"] == pytest.approx(np.sum(tau * logp1 - qbar) / n, rel=1e-10)
        expected_tau_loss = -tau * np.sum(logp1 + frozen.temperature.target_entropy) / n
        assert report["temperature"] == pytest.approx(expected_tau_loss, rel=1e-10)

    def test_actor_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        agent = SacAgent(OBS, ACT, FEAT, generalist=False, hp=HP, rng=rng)
        batch = _batch(np.random.default_rng(17))
        worker = copy.deepcopy(agent)
        worker.update(batch, np.random.default_rng(18))
        analytic = [g.copy() for g in worker.actor.gradients()]

        draw = np.random.default_rng(18)
        eps2 = draw.standard_normal((len(batch), ACT))
        eps1 = draw.standard_normal((len(batch), ACT))
        tau = agent.temperature.tau
        obs = batch.s

        def actor_loss():
            a1, logp1, _ = agent.actor.sample(obs, None, eps=eps1)
            x1 = np.concatenate([obs, a1], axis=1)
            q = np.minimum(agent.targets[0].forward(x1)[:, 0],
                           agent.targets[1].forward(x1)[:, 0])
            return float(np.sum(tau * logp1 - q) / len(batch))

        params = [p for _, p in agent.actor.named_parameters()]
        finite_diff_check(actor_loss, params, analytic, rng, n_probes=60)

    def test_non_finite_loss_aborts(self):
        rng = np.random.default_rng(19)
        agent = SacAgent(OBS, ACT, FEAT, generalist=False, hp=HP, rng=rng)
        agent.critics[0].layers[0].W[0, 0] = np.nan
        batch = _batch(np.random.default_rng(20))
        with pytest.raises(NonFiniteLossError, match="sac_update"):
            agent.update(batch, np.random.default_rng(21))

    def test_buffer_fifo_after_capacity(self):
        # target networks move toward online after each update
        rng = np.random.default_rng(22)
        agent = SacAgent(OBS, ACT, FEAT, generalist=False, hp=HP, rng=rng)
        before = [p.copy() for _, p in agent.targets[0].named_parameters("t")]
        agent.update(_batch(np.random.default_rng(23)), np.random.default_rng(24))
        after = [p for _, p in agent.targets[0].named_parameters("t")]
        assert any(not np.array_equal(a, b) for a, b in zip(after, before))


class TestSusfaUpdate:
    def _agent(self, hp=None, seed=25, collapsed=False):
        return SusfaAgent(OBS, ACT, FEAT, hp or HP, np.random.default_rng(seed),
                          collapsed=collapsed)

    def test_gamma_zero_psi_target_is_phi(self):
        hp = AgentHyperparams(hidden_size=8, gamma=0.0, lr=1e-3)
        agent = self._agent(hp=hp)
        batch = _batch(np.random.default_rng(26), n=1)
        # make block outputs exactly phi via zeroed nets with bias = phi
        for critic in agent.critics.online + agent.critics.target:
            for _, p in critic.named_parameters("c"):
                p[:] = 0.0
            critic.head.layers[-1].b[:, 0, 0] = batch.phi[0]
        report = agent.update(batch, np.random.default_rng(27))
        assert report["psi1"] == pytest.approx(0.0, abs=1e-12)
        assert report["psi2"] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("gamma", [0.0, 0.9])
    @pytest.mark.parametrize("collapsed", [False, True])
    def test_losses_match_frozen_weight_arithmetic(self, gamma, collapsed):
        hp = AgentHyperparams(hidden_size=8, enc_layers=1, head_layers=2,
                              gamma=gamma, lr=1e-3)
        agent = self._agent(hp=hp, collapsed=collapsed)
        frozen = copy.deepcopy(agent)
        batch = _batch(np.random.default_rng(28), n=3, n_alt=1, terminal=[0, 1, 0])
        report = agent.update(batch, np.random.default_rng(29))

        n = len(batch)
        n_tasks = 2
        tau = float(np.exp(frozen.temperature.log_tau[0]))
        task_rows = np.concatenate(
            [batch.w[None], batch.alternatives.transpose(1, 0, 2)], axis=0
        ).reshape(n_tasks * n, FEAT)
        s_rows = np.tile(batch.s, (n_tasks, 1))
        s2_rows = np.tile(batch.s_next, (n_tasks, 1))
        phi_rows = np.tile(batch.phi, (n_tasks, 1))
        boot = np.tile(1.0 - batch.terminal, n_tasks)[:, None]
        draw = np.random.default_rng(29)
        eps2 = draw.standard_normal((n_tasks * n, ACT))
        eps1 = draw.standard_normal((n_tasks * n, ACT))

        if collapsed:
            def fwd(critic, s, a, w):
                cat = np.concatenate([
                    _mlp_forward(critic.enc_s, s, activate_final=True),
                    _mlp_forward(critic.enc_a, a, activate_final=True),
                    _mlp_forward(critic.enc_w, w, activate_final=True),
                ], axis=1)
                return _mlp_forward(critic.head, cat)
        else:
            fwd = _stack_forward

        a2, _ = _actor_forward(frozen.actor, np.concatenate([s2_rows, task_rows], 1), eps2)
        a1, logp1 = _actor_forward(frozen.actor, np.concatenate([s_rows, task_rows], 1), eps1)
        for m, key in enumerate(["psi1", "psi2"]):
            y = phi_rows + gamma * boot * fwd(frozen.critics.target[m], s2_rows, a2, task_rows)
            pred = fwd(frozen.critics.online[m], s_rows, a1, task_rows)
            assert report[key] == pytest.approx(np.sum((pred - y) ** 2) / n, rel=1e-9)
        q = np.minimum(
            np.einsum("rd,rd->r", fwd(frozen.critics.target[0], s_rows, a1, task_rows),
                      task_rows),
            np.einsum("rd,rd->r", fwd(frozen.critics.target[1], s_rows, a1, task_rows),
                      task_rows),
        )
        assert report["actor"] == pytest.approx(np.sum(tau * logp1 - q) / n, rel=1e-9)
        expected_tau = -tau * np.sum(logp1 + frozen.temperature.target_entropy) / n
        assert report["temperature"] == pytest.approx(expected_tau, rel=1e-9)

    def test_actor_gradient_matches_finite_differences(self):
        agent = self._agent(seed=30)
        batch = _batch(np.random.default_rng(31), n=3, n_alt=1)
        worker = copy.deepcopy(agent)
        worker.update(batch, np.random.default_rng(32))
        analytic = [g.copy() for g in worker.actor.gradients()]

        n = len(batch)
        n_tasks = 2
        task_rows = np.concatenate(
            [batch.w[None], batch.alternatives.transpose(1, 0, 2)], axis=0
        ).reshape(n_tasks * n, FEAT)
        s_rows = np.tile(batch.s, (n_tasks, 1))
        draw = np.random.default_rng(32)
        eps2 = draw.standard_normal((n_tasks * n, ACT))
        eps1 = draw.standard_normal((n_tasks * n, ACT))
        tau = agent.temperature.tau

        def actor_loss():
            a1, logp1, _ = agent.actor.sample(
                np.concatenate([s_rows, task_rows], axis=1), None, eps=eps1
            )
            q = np.minimum(
                np.einsum("rd,rd->r",
                          agent.critics.target[0].forward(s_rows, a1, task_rows), task_rows),
                np.einsum("rd,rd->r",
                          agent.critics.target[1].forward(s_rows, a1, task_rows), task_rows),
            )
            return float(np.sum(tau * logp1 - q) / n)

        params = [p for _, p in agent.actor.named_parameters()]
        finite_diff_check(actor_loss, params, analytic, np.random.default_rng(33),
                          n_probes=60)

    def test_update_moves_polyak_targets(self):
        agent = self._agent(seed=34)
        before = [p.copy() for _, p in agent.critics.target[0].named_parameters("t")]
        agent.update(_batch(np.random.default_rng(35)), np.random.default_rng(36))
        after = [p for _, p in agent.critics.target[0].named_parameters("t")]
        assert any(not np.array_equal(a, b) for a, b in zip(after, before))

    def test_temperature_stays_positive(self):
        agent = self._agent(seed=37)
        rng = np.random.default_rng(38)
        for _ in range(20):
            agent.update(_batch(rng), rng)
            assert agent.temperature.tau > 0.0

    def test_actor_q_on_true_task_flag(self):
        hp = AgentHyperparams(hidden_size=8, gamma=0.9, lr=1e-3, actor_q_on_true_task=True)
        agent = self._agent(hp=hp, seed=39)
        frozen = copy.deepcopy(agent)
        batch = _batch(np.random.default_rng(40), n=2, n_alt=1)
        report = agent.update(batch, np.random.default_rng(41))
        n, n_tasks = 2, 2
        task_rows = np.concatenate(
            [batch.w[None], batch.alternatives.transpose(1, 0, 2)], axis=0
        ).reshape(n_tasks * n, FEAT)
        true_rows = np.tile(batch.w, (n_tasks, 1))
        s_rows = np.tile(batch.s, (n_tasks, 1))
        draw = np.random.default_rng(41)
        eps2 = draw.standard_normal((n_tasks * n, ACT))
        eps1 = draw.standard_normal((n_tasks * n, ACT))
        a1, logp1 = _actor_forward(frozen.actor, np.concatenate([s_rows, task_rows], 1), eps1)
        tau = frozen.temperature.tau
        q = np.minimum(
            np.einsum("rd,rd->r",
                      _stack_forward(frozen.critics.target[0], s_rows, a1, true_rows),
                      true_rows),
            np.einsum("rd,rd->r",
                      _stack_forward(frozen.critics.target[1], s_rows, a1, true_rows),
                      true_rows),
        )
        assert report["actor"] == pytest.approx(np.sum(tau * logp1 - q) / n, rel=1e-9)
