"""Multi-objective planar lunar lander with an on-the-loop secondary controller.

Normalized coordinates: the pad sits at x = 0, the ground at y = 0, and the
episode ends on contact, when |x| > 1, or on timeout. The reward decomposes
into four features: terminal outcome (+1 land / -1 crash), a potential-based
shaping delta, and the two engine fuel drains. The scalar reward is always
the dot product of these features with the task weights.

The secondary controller intercepts the proposed throttles after the policy
and before the physics whenever the craft strays sideways, tilts, or descends
too fast right of the pad; when triggered it overwrites both throttles as a
pure function of the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..sfcore import FeatureVector

FEATURE_NAMES = ("terminal", "shaping", "fuel_main", "fuel_side")
FEATURE_DIM = 4

OBS_FIELDS = ("x", "y", "vx", "vy", "angle", "ang_vel", "leg_left", "leg_right")
OBS_DIM = 8

TRACE_FIELDS = (
    "t", "x", "y", "vx", "vy", "angle", "ang_vel", "leg_left", "leg_right",
    "raw_main", "raw_side", "exec_main", "exec_side", "controller_active",
    "phi_terminal", "phi_shaping", "phi_fuel_main", "phi_fuel_side",
)


@dataclass(frozen=True)
class LanderConfig:
    gravity: float = 1.62
    main_power: float = 6.0
    side_power: float = 0.6
    torque_coef: float = 4.0
    dt: float = 0.05
    max_steps: int = 500
    # landing tolerances on contact
    land_speed: float = 0.2
    land_angle: float = 0.3
    # shaping potential coefficients (position, speed, angle)
    shaping_pos: float = 1.0
    shaping_vel: float = 0.3
    shaping_ang: float = 0.3
    controller_enabled: bool = True


@dataclass
class LanderState:
    x: float
    y: float
    vx: float
    vy: float
    angle: float
    ang_vel: float
    leg_left: bool = False
    leg_right: bool = False
    fuel_used: float = 0.0
    t: int = 0
    done: bool = False


def secondary_controller(state: LanderState, action: np.ndarray):
    """Safety interception: returns (possibly overwritten action, active flag).

    Triggers when |x| > 0.3, when descending into the ground-closure envelope
    right of the pad (-0.8*vy > y and x > 0.03), or when |angle| > 0.4. When
    triggered both throttles are overwritten from the state alone: the side
    throttle from a linear law in (angle, angular rate, x, vx) clamped to
    [-1, 1], the main engine full on while descending and off otherwise.
    """
    triggered = (
        abs(state.x) > 0.3
        or ((-0.8 * state.vy > state.y) and (state.x > 0.03))
        or abs(state.angle) > 0.4
    )
    if not triggered:
        return action, False
    side = 10.0 * state.angle + 3.0 * state.ang_vel - 2.0 * state.x - 4.0 * state.vx
    side = float(np.clip(side, -1.0, 1.0))
    main = 0.0 if state.vy > -0.001 else 1.0
    return np.array([main, side]), True


def observe(state: LanderState) -> np.ndarray:
    return np.array([
        state.x, state.y, state.vx, state.vy, state.angle, state.ang_vel,
        float(state.leg_left), float(state.leg_right),
    ])


def _potential(cfg: LanderConfig, x, y, vx, vy, angle) -> float:
    return -(
        cfg.shaping_pos * np.hypot(x, y)
        + cfg.shaping_vel * np.hypot(vx, vy)
        + cfg.shaping_ang * abs(angle)
    )


class LanderEnv:
    """Deterministic per (seed, action sequence); one instance per process."""

    feature_dim = FEATURE_DIM
    obs_dim = OBS_DIM
    act_dim = 2

    def __init__(self, cfg: LanderConfig | None = None, seed: int | None = None):
        self.cfg = cfg or LanderConfig()
        self._rng = np.random.default_rng(seed)
        self.state: LanderState | None = None

    def reset(self, seed: int | None = None) -> LanderState:
        """Spawn at y = 1 with x ~ U(-0.3, 0.3) and small random motion."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        rng = self._rng
        self.state = LanderState(
            x=float(rng.uniform(-0.3, 0.3)),
            y=1.0,
            vx=float(rng.uniform(-0.05, 0.05)),
            vy=float(rng.uniform(-0.05, 0.05)),
            angle=float(rng.uniform(-0.05, 0.05)),
            ang_vel=float(rng.uniform(-0.05, 0.05)),
        )
        return self.state

    def observe(self, state: LanderState | None = None) -> np.ndarray:
        return observe(state if state is not None else self.state)

    def step(self, action: np.ndarray):
        """Advance one step; action is (main throttle in [0,1], side in [-1,1]).

        Returns (state, FeatureVector, done, info). The controller, when
        enabled, may overwrite the action before the physics; features are
        computed from the executed action.
        """
        cfg = self.cfg
        s = self.state
        if s is None:
            raise RuntimeError("reset() must be called before step()")
        if s.done:
            raise RuntimeError("step() called on a finished episode")

        raw = np.array([
            float(np.clip(action[0], 0.0, 1.0)),
            float(np.clip(action[1], -1.0, 1.0)),
        ])
        if cfg.controller_enabled:
            executed, active = secondary_controller(s, raw)
        else:
            executed, active = raw, False
        a_main, a_side = float(executed[0]), float(executed[1])

        pot_before = _potential(cfg, s.x, s.y, s.vx, s.vy, s.angle)

        sin_d, cos_d = np.sin(s.angle), np.cos(s.angle)
        ax = cfg.main_power * a_main * (-sin_d) + cfg.side_power * a_side * cos_d
        ay = cfg.main_power * a_main * cos_d + cfg.side_power * a_side * sin_d - cfg.gravity
        aa = -cfg.torque_coef * cfg.side_power * a_side

        # semi-implicit Euler: velocities first, then positions
        vx = s.vx + ax * cfg.dt
        vy = s.vy + ay * cfg.dt
        ang_vel = s.ang_vel + aa * cfg.dt
        x = s.x + vx * cfg.dt
        y = s.y + vy * cfg.dt
        angle = s.angle + ang_vel * cfg.dt
        t = s.t + 1

        contact = y <= 0.0
        out_of_bounds = abs(x) > 1.0
        timeout = t >= cfg.max_steps
        landed = contact and abs(vy) < cfg.land_speed and abs(angle) < cfg.land_angle
        crashed = (contact and not landed) or out_of_bounds
        terminal = contact or out_of_bounds
        done = terminal or timeout

        fuel_step = 0.3 * a_main + 0.03 * abs(a_side)
        new_state = LanderState(
            x=x, y=y, vx=vx, vy=vy, angle=angle, ang_vel=ang_vel,
            leg_left=contact, leg_right=contact,
            fuel_used=s.fuel_used + fuel_step,
            t=t, done=done,
        )
        self.state = new_state

        pot_after = _potential(cfg, x, y, vx, vy, angle)
        phi = FeatureVector([
            1.0 if landed else (-1.0 if crashed else 0.0),
            pot_after - pot_before,
            -0.3 * a_main,
            -0.03 * abs(a_side),
        ])
        info = {
            "controller_active": active,
            "raw_action": raw,
            "executed_action": executed,
            "terminal": terminal,
            "truncated": timeout and not terminal,
            "landed": landed,
            "crashed": crashed,
        }
        return new_state, phi, done, info

    def trace_row(self, state: LanderState, phi: FeatureVector, info: dict) -> list:
        raw = info["raw_action"]
        executed = info["executed_action"]
        return [
            state.t, state.x, state.y, state.vx, state.vy, state.angle, state.ang_vel,
            int(state.leg_left), int(state.leg_right),
            raw[0], raw[1], executed[0], executed[1], int(info["controller_active"]),
            *phi.values,
        ]
