import numpy as np
import pytest

from sfstack.envs.lander import (
    FEATURE_DIM,
    LanderConfig,
    LanderEnv,
    LanderState,
    secondary_controller,
)
from sfstack.sfcore import TaskWeights, composite_reward


def _airborne_state(**kw):
    base = dict(x=0.0, y=1.0, vx=0.0, vy=0.0, angle=0.0, ang_vel=0.0)
    base.update(kw)
    return LanderState(**base)


class TestController:
    def test_no_trigger_inside_envelope(self):
        state = _airborne_state(x=0.1, y=1.0, vy=0.0, angle=0.1)
        action = np.array([0.7, -0.2])
        out, active = secondary_controller(state, action)
        assert not active
        assert out is action

    def test_offset_trigger_hand_computed(self):
        # |x| > 0.3 branch: side = 10*0.1 + 0 - 2*0.5 - 0 = 0; descending -> full main
        state = _airborne_state(x=0.5, vx=0.0, angle=0.1, ang_vel=0.0, vy=-0.5)
        out, active = secondary_controller(state, np.array([0.3, 0.3]))
        assert active
        assert out[1] == pytest.approx(0.0)
        assert out[0] == 1.0

    def test_angle_trigger_with_clamp(self):
        # |angle| > 0.4 branch: side = 5 - 3 = 2 -> clamped to 1; vy above
        # threshold -> main off
        state = _airborne_state(x=0.0, vx=0.0, angle=0.5, ang_vel=-1.0, vy=0.0)
        out, active = secondary_controller(state, np.array([0.9, -0.9]))
        assert active
        assert out[1] == 1.0
        assert out[0] == 0.0

    def test_descent_clause_requires_x_above_threshold(self):
        # fast descent close to ground, but x below 0.03: no trigger
        state = _airborne_state(x=0.0, y=0.1, vy=-1.0)
        _, active = secondary_controller(state, np.array([0.0, 0.0]))
        assert not active
        state = _airborne_state(x=0.05, y=0.1, vy=-1.0)
        _, active = secondary_controller(state, np.array([0.0, 0.0]))
        assert active

    def test_identity_exactly_when_predicate_false(self):
        # quantified over a state/action grid
        rng = np.random.default_rng(0)
        xs = np.linspace(-0.6, 0.6, 7)
        ys = np.linspace(0.05, 1.2, 4)
        vys = np.linspace(-1.0, 0.5, 4)
        angles = np.linspace(-0.6, 0.6, 5)
        count = 0
        for x in xs:
            for y in ys:
                for vy in vys:
                    for angle in angles:
                        state = _airborne_state(x=x, y=y, vy=vy, angle=angle)
                        action = rng.uniform(-1, 1, 2)
                        out, active = secondary_controller(state, action)
                        predicate = (
                            abs(x) > 0.3
                            or ((-0.8 * vy > y) and (x > 0.03))
                            or abs(angle) > 0.4
                        )
                        assert active == predicate
                        if not active:
                            assert out is action
                            count += 1
        assert count > 0


class TestDynamics:
    def test_free_fall_decreases_vertical_velocity_by_g_dt(self):
        env = LanderEnv(LanderConfig(controller_enabled=False), seed=0)
        env.reset(seed=0)
        env.state = _airborne_state()
        state, _, _, _ = env.step(np.array([0.0, 0.0]))
        assert state.vy == pytest.approx(-1.62 * 0.05, abs=1e-12)
        assert state.vx == pytest.approx(0.0, abs=1e-12)

    def test_hover_thrust_balances_gravity(self):
        cfg = LanderConfig(controller_enabled=False)
        env = LanderEnv(cfg, seed=0)
        env.reset(seed=0)
        env.state = _airborne_state()
        state, _, _, _ = env.step(np.array([cfg.gravity / cfg.main_power, 0.0]))
        assert state.vy == pytest.approx(0.0, abs=1e-12)

    def test_hand_evaluated_integration_step(self):
        cfg = LanderConfig(controller_enabled=False)
        env = LanderEnv(cfg, seed=0)
        env.reset(seed=0)
        env.state = _airborne_state()
        state, phi, done, info = env.step(np.array([1.0, 0.5]))
        # accelerations at angle 0: ax = 0.6*0.5 = 0.3; ay = 6 - 1.62 = 4.38
        # ang acc = -4*0.6*0.5 = -1.2
        dt = cfg.dt
        assert state.vx == pytest.approx(0.3 * dt)
        assert state.vy == pytest.approx(4.38 * dt)
        assert state.ang_vel == pytest.approx(-1.2 * dt)
        assert state.x == pytest.approx(0.3 * dt * dt)
        assert state.y == pytest.approx(1.0 + 4.38 * dt * dt)
        assert state.angle == pytest.approx(-1.2 * dt * dt)
        assert not done
        assert phi.values[2] == pytest.approx(-0.3)
        assert phi.values[3] == pytest.approx(-0.015)

    def test_step_after_done_raises(self):
        env = LanderEnv(LanderConfig(controller_enabled=False, max_steps=1), seed=0)
        env.reset(seed=0)
        env.step(np.zeros(2))
        with pytest.raises(RuntimeError, match="finished"):
            env.step(np.zeros(2))


class TestReset:
    def test_same_seed_same_state(self):
        env = LanderEnv()
        a = env.reset(seed=123)
        b = env.reset(seed=123)
        assert a == b

    def test_spawn_height_fixed(self):
        env = LanderEnv()
        for seed in range(20):
            assert env.reset(seed=seed).y == 1.0

    def test_spawn_x_range(self):
        env = LanderEnv(seed=0)
        xs = np.array([env.reset().x for _ in range(1000)])
        assert xs.min() > -0.3
        assert xs.max() < 0.3
        assert xs.std() > 0.05


class TestEpisodeAccounting:
    def _run_episode(self, controller: bool, seed: int):
        env = LanderEnv(LanderConfig(controller_enabled=controller), seed=seed)
        env.reset(seed=seed)
        rng = np.random.default_rng(seed + 1)
        phis, infos = [], []
        done = False
        while not done:
            action = np.array([rng.uniform(0, 1), rng.uniform(-1, 1)])
            _, phi, done, info = env.step(action)
            phis.append(phi.values)
            infos.append(info)
        return env, np.array(phis), infos

    def test_fuel_feature_matches_executed_actions(self):
        for seed in (0, 1, 2):
            env, phis, infos = self._run_episode(controller=True, seed=seed)
            total = sum(
                0.3 * i["executed_action"][0] + 0.03 * abs(i["executed_action"][1])
                for i in infos
            )
            assert abs(-(phis[:, 2].sum() + phis[:, 3].sum()) - total) < 1e-9
            assert env.state.fuel_used == pytest.approx(total, abs=1e-9)

    def test_reward_decomposition_exactness(self):
        rng = np.random.default_rng(3)
        env, phis, _ = self._run_episode(controller=True, seed=5)
        for phi_vals in phis:
            w = TaskWeights(rng.uniform(0, 1, FEATURE_DIM))
            from sfstack.sfcore import FeatureVector
            r = composite_reward(FeatureVector(phi_vals), w)
            assert abs(r - float(phi_vals @ w.values)) < 1e-9

    def test_terminal_feature_on_contact(self):
        env = LanderEnv(LanderConfig(controller_enabled=False), seed=0)
        env.reset(seed=0)
        env.state = _airborne_state(y=0.01, vy=-1.0)  # hits ground fast: crash
        state, phi, done, info = env.step(np.zeros(2))
        assert done and info["crashed"] and phi.values[0] == -1.0
        env.reset(seed=0)
        env.state = _airborne_state(y=0.001, vy=-0.01)  # gentle upright: landing
        state, phi, done, info = env.step(np.zeros(2))
        assert done and info["landed"] and phi.values[0] == 1.0
        assert state.leg_left and state.leg_right

    def test_out_of_bounds_is_crash(self):
        env = LanderEnv(LanderConfig(controller_enabled=False), seed=0)
        env.reset(seed=0)
        env.state = _airborne_state(x=0.999, vx=2.0)
        state, phi, done, info = env.step(np.zeros(2))
        assert done and info["crashed"] and phi.values[0] == -1.0

    def test_timeout_truncates_without_terminal_feature(self):
        env = LanderEnv(LanderConfig(controller_enabled=False, max_steps=3,
                                     gravity=0.0), seed=0)
        env.reset(seed=0)
        env.state = _airborne_state(y=5.0)
        done = False
        while not done:
            state, phi, done, info = env.step(np.zeros(2))
        assert info["truncated"] and not info["terminal"]
        assert phi.values[0] == 0.0

    def test_shaping_is_potential_delta(self):
        cfg = LanderConfig(controller_enabled=False)
        env = LanderEnv(cfg, seed=0)
        env.reset(seed=0)
        s0 = env.state
        from sfstack.envs.lander import _potential
        p0 = _potential(cfg, s0.x, s0.y, s0.vx, s0.vy, s0.angle)
        state, phi, _, _ = env.step(np.array([0.5, 0.1]))
        p1 = _potential(cfg, state.x, state.y, state.vx, state.vy, state.angle)
        assert phi.values[1] == pytest.approx(p1 - p0, abs=1e-12)
