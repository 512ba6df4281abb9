import numpy as np
import pytest

from sfstack.agents.critics import CollapsedSfCritic, SfaStack, TwinSfCritics
from sfstack.agents.susfa import q_from_psi
from sfstack.sfcore import SfVector, TaskWeights
from oracles import finite_diff_check


def _stack(d=3, obs=4, act=2, width=8, enc=1, head=2, seed=0, task_dim=None):
    task_dim = d if task_dim is None else task_dim
    return SfaStack(d, obs, act, task_dim, width, enc, head, np.random.default_rng(seed))


def _params(critic):
    return [p for _, p in critic.named_parameters("c")]


class TestStackedForward:
    def test_single_block_equals_stack_of_one(self):
        rng = np.random.default_rng(1)
        stack = _stack(d=1)
        s, a, w = rng.normal(size=(5, 4)), rng.normal(size=(5, 2)), rng.normal(size=(5, 1))
        out = stack.forward(s, a, w)
        assert out.shape == (5, 1)

    def test_zeroing_block_parameters_zeroes_only_that_component(self):
        rng = np.random.default_rng(2)
        stack = _stack(d=4)
        s, a, w = rng.normal(size=(6, 4)), rng.normal(size=(6, 2)), rng.normal(size=(6, 4))
        before = stack.forward(s, a, w)
        j = 2
        for _, p in stack.named_parameters("c"):
            p[j] = 0.0  # leading axis is the block index
        after = stack.forward(s, a, w)
        assert np.all(after[:, j] == 0.0)
        others = [i for i in range(4) if i != j]
        assert np.array_equal(before[:, others], after[:, others])

    def test_components_match_independent_single_blocks(self):
        rng = np.random.default_rng(3)
        d = 3
        stack = _stack(d=d)
        s, a, w = rng.normal(size=(7, 4)), rng.normal(size=(7, 2)), rng.normal(size=(7, d))
        full = stack.forward(s, a, w)
        for i in range(d):
            solo = _stack(d=1, task_dim=d)
            for (_, dst), (_, src) in zip(solo.named_parameters("c"),
                                          stack.named_parameters("c")):
                dst[0] = src[i]
            assert np.allclose(solo.forward(s, a, w)[:, 0], full[:, i])

    def test_zero_encoder_depth_concatenates_raw_inputs(self):
        rng = np.random.default_rng(4)
        stack = SfaStack(2, 4, 2, 2, 8, 0, 2, rng)
        s, a, w = rng.normal(size=(5, 4)), rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        assert stack.forward(s, a, w).shape == (5, 2)


class TestGradientIsolation:
    @pytest.mark.parametrize("enc_layers", [0, 1])
    def test_exact_zero_gradients_across_blocks(self, enc_layers):
        rng = np.random.default_rng(5)
        d = 5
        stack = SfaStack(d, 4, 2, d, 8, enc_layers, 2, rng)
        s, a, w = rng.normal(size=(6, 4)), rng.normal(size=(6, 2)), rng.normal(size=(6, d))
        for i in range(d):
            pred = stack.forward(s, a, w)
            dpsi = np.zeros_like(pred)
            dpsi[:, i] = 2.0 * (pred[:, i] - 1.0)  # loss on component i only
            stack.zero_grad()
            stack.backward(dpsi)
            for g in stack.gradients():
                for j in range(d):
                    if j == i:
                        continue
                    assert np.all(g[j] == 0.0), f"component {i} leaked into block {j}"

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        stack = _stack(d=3)
        s, a, w = rng.normal(size=(4, 4)), rng.normal(size=(4, 2)), rng.normal(size=(4, 3))
        coef = rng.normal(size=(4, 3))

        def loss():
            return float(np.sum(coef * stack.forward(s, a, w)))

        loss()
        stack.zero_grad()
        stack.backward(coef)
        finite_diff_check(loss, _params(stack), stack.gradients(), rng, n_probes=80)

    def test_action_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        stack = _stack(d=2)
        s, a, w = rng.normal(size=(3, 4)), rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        coef = rng.normal(size=(3, 2))
        stack.forward(s, a, w)
        da = stack.backward(coef, accumulate=False)
        h = 1e-6
        for r in range(3):
            for c in range(2):
                ap = a.copy()
                ap[r, c] += h
                am = a.copy()
                am[r, c] -= h
                num = (np.sum(coef * stack.forward(s, ap, w))
                       - np.sum(coef * stack.forward(s, am, w))) / (2 * h)
                assert num == pytest.approx(da[r, c], rel=1e-5, abs=1e-8)


class TestCollapsedCritic:
    def test_output_shape_and_fd_gradients(self):
        rng = np.random.default_rng(8)
        critic = CollapsedSfCritic(3, 4, 2, 3, 8, 1, 2, rng)
        s, a, w = rng.normal(size=(4, 4)), rng.normal(size=(4, 2)), rng.normal(size=(4, 3))
        out = critic.forward(s, a, w)
        assert out.shape == (4, 3)
        coef = rng.normal(size=(4, 3))

        def loss():
            return float(np.sum(coef * critic.forward(s, a, w)))

        loss()
        critic.zero_grad()
        critic.backward(coef)
        finite_diff_check(loss, _params(critic), critic.gradients(), rng, n_probes=80)


class TestTwins:
    def test_targets_initialized_equal_to_online(self):
        twins = TwinSfCritics(_stack(seed=1), _stack(seed=2))
        for online, target in zip(twins.online, twins.target):
            for (_, a), (_, b) in zip(online.named_parameters("c"),
                                      target.named_parameters("c")):
                assert np.array_equal(a, b)
                assert a is not b

    def test_twins_do_not_share_parameters(self):
        twins = TwinSfCritics(_stack(seed=1), _stack(seed=2))
        a = twins.online[0].named_parameters("c")[0][1]
        b = twins.online[1].named_parameters("c")[0][1]
        assert not np.array_equal(a, b)


class TestParameterCounts:
    def test_single_linear_layer_formula(self):
        from sfstack.nn import Dense
        layer = Dense(7, 3, np.random.default_rng(0))
        n = sum(p.size for _, p in layer.named_parameters("l"))
        assert n == 7 * 3 + 3

    def test_stack_count_is_d_times_one_block(self):
        one = _stack(d=1, task_dim=5)
        five = _stack(d=5)
        assert five.count_parameters() == 5 * one.count_parameters()
        twins = TwinSfCritics(_stack(d=5, seed=1), _stack(d=5, seed=2))
        assert twins.count_parameters() == 2 * 5 * one.count_parameters()

    def test_closed_form_block_count(self):
        d, obs, act, width = 3, 4, 2, 8
        stack = SfaStack(d, obs, act, d, width, 1, 2, np.random.default_rng(0))
        enc = (obs * width + width) + (act * width + width) + (d * width + width)
        head = (3 * width * width + width) + (width * width + width) + (width * 1 + 1)
        assert stack.count_parameters() == d * (enc + head)

    def test_collapsed_closed_form_count(self):
        d, obs, act, width = 3, 4, 2, 8
        critic = CollapsedSfCritic(d, obs, act, d, width, 1, 2, np.random.default_rng(0))
        enc = (obs * width + width) + (act * width + width) + (d * width + width)
        head = (3 * width * width + width) + (width * width + width) + (width * d + d)
        assert critic.count_parameters() == enc + head


class TestQFromPsi:
    def test_basis_weight_selects_component(self):
        psi = SfVector([4.0, -2.0, 1.0])
        assert q_from_psi(psi, TaskWeights([0.0, 1.0, 0.0])) == -2.0

    def test_hand_computed_dot(self):
        assert q_from_psi(np.array([2.0, -1.0]), np.array([0.5, 0.5])) == pytest.approx(0.5)

    def test_linear_in_weights(self):
        rng = np.random.default_rng(9)
        psi = rng.normal(size=5)
        w = rng.normal(size=5)
        assert q_from_psi(psi, 3.0 * w) == pytest.approx(3.0 * q_from_psi(psi, w))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            q_from_psi(np.zeros(3), np.zeros(4))
