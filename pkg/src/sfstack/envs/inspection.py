"""Orbital inspection task: Clohessy-Wiltshire relative motion in Hill's frame,
illumination-gated inspection of a spherical point cloud, a five-component
reward decomposition, and an analytic runtime-assurance filter.

The deputy spacecraft thrusts along the three principal axes to inspect
points on the chief. A point is inspected when its outward normal faces the
deputy (within the perception cone) and faces the sun. The reward features
are: observed points, crash/exit penalty, timestep penalty, fuel (delta-v)
penalty, and a penalty per step in which the safety filter intervened.

Propagation uses the exact zero-order-hold discretization of the linear CW
system, so k steps of length dt coincide with one step of length k*dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .. import kernels
from ..sfcore import FeatureVector

FEATURE_NAMES = ("observed", "crash", "timestep", "delta_v", "rta")
FEATURE_DIM = 5
TUNABLE_MASK = np.array([True, False, False, True, True])

OBS_DIM = 12  # [r/pos_scale (3), v/vel_scale (3), sin, cos, P_i/100, P_c (3)]

TRACE_FIELDS = (
    "t", "rx", "ry", "rz", "vx", "vy", "vz", "sun_angle", "inspected",
    "prop_fx", "prop_fy", "prop_fz", "exec_fx", "exec_fy", "exec_fz", "rta_active",
    "phi_observed", "phi_crash", "phi_timestep", "phi_delta_v", "phi_rta",
)


@dataclass(frozen=True)
class InspectionConfig:
    n_points: int = 100
    chief_radius: float = 10.0
    mean_motion: float = 0.001027
    mass: float = 12.0
    dt: float = 10.0
    thrust_limit: float = 1.0
    keep_out: float = 15.0
    keep_in: float = 800.0
    nu0: float = 0.2
    nu1: float = 0.002
    cone_half_angle_deg: float = 90.0
    tau_points: int = 95
    max_steps: int = 1200
    init_radius: tuple[float, float] = (50.0, 150.0)
    init_speed: float = 0.05
    rta_enabled: bool = True
    # observation scaling keeps network inputs near unit magnitude
    pos_scale: float = 100.0
    vel_scale: float = 0.5

    def __post_init__(self):
        if self.keep_out >= self.keep_in:
            raise ValueError("keep_out must be smaller than keep_in")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.tau_points <= self.n_points:
            raise ValueError("tau_points must lie in [0, n_points]")

    @staticmethod
    def small(**overrides) -> "InspectionConfig":
        """Scaled-down preset for desk-size runs."""
        base = dict(n_points=50, max_steps=300, dt=30.0, tau_points=45)
        base.update(overrides)
        return InspectionConfig(**base)


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic near-uniform unit vectors on the sphere."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    theta = i * math.pi * (3.0 - math.sqrt(5.0))
    rho = np.sqrt(1.0 - z * z)
    return np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])


@dataclass(frozen=True)
class PointCloud:
    units: np.ndarray
    radius: float

    @staticmethod
    def build(n_points: int, radius: float) -> "PointCloud":
        return PointCloud(fibonacci_sphere(n_points), radius)

    def __len__(self) -> int:
        return self.units.shape[0]


@dataclass
class DeputyState:
    r: np.ndarray
    v: np.ndarray
    sun_angle: float
    inspected: np.ndarray
    t: int = 0
    done: bool = False
    dv_used: float = 0.0
    rta_steps: int = 0

    @property
    def inspected_count(self) -> int:
        return int(np.count_nonzero(self.inspected))


@lru_cache(maxsize=8)
def cw_transition_matrices(n: float, dt: float, mass: float):
    """Exact discrete (state, input) matrices of the CW system under ZOH thrust."""
    a = np.zeros((6, 6))
    a[0:3, 3:6] = np.eye(3)
    a[3, 0] = 3.0 * n * n
    a[3, 4] = 2.0 * n
    a[4, 3] = -2.0 * n
    a[5, 2] = -n * n
    b = np.zeros((6, 3))
    b[3:6, :] = np.eye(3) / mass
    m = np.zeros((9, 9))
    m[:6, :6] = a
    m[:6, 6:] = b
    em = expm(m * dt)
    return em[:6, :6].copy(), em[:6, 6:].copy()


def cw_step(r: np.ndarray, v: np.ndarray, force: np.ndarray, cfg: InspectionConfig):
    """One exact CW propagation step with constant force over cfg.dt."""
    ad, bd = cw_transition_matrices(cfg.mean_motion, cfg.dt, cfg.mass)
    state = ad @ np.concatenate([r, v]) + bd @ force
    return state[:3], state[3:]


def sun_direction(sun_angle: float) -> np.ndarray:
    return np.array([math.cos(sun_angle), math.sin(sun_angle), 0.0])


def update_inspection(state: DeputyState, cloud: PointCloud,
                      cos_cone: float = 0.0):
    """Mark points facing both the deputy and the sun as inspected.

    Returns (new mask, newly inspected count, unit mean-direction of the
    remaining uninspected normals, zero vector when none remain). The
    deputy's sensors always point at the chief, so visibility only depends
    on the point normal, the deputy direction, and the sun direction.
    """
    norm = np.linalg.norm(state.r)
    rhat = state.r / norm if norm > 0 else np.zeros(3)
    shat = sun_direction(state.sun_angle)
    mask = state.inspected.copy()
    newly, p_c = kernels.inspect_points(mask, cloud.units, rhat, shat, cos_cone)
    return mask, newly, p_c


def rta_filter(state: DeputyState, proposed_force: np.ndarray, cfg: InspectionConfig):
    """Analytic safety filter: intercept the force if the one-step prediction
    violates the dynamic speed limit ||v|| <= nu0 + nu1*||r||, the keep-out
    sphere, or the keep-in sphere.

    The correction sums a braking direction (opposing the velocity), an
    outward radial push (keep-out), and an inward radial pull (keep-in),
    scaled to full authority and clipped per axis. The filter is the identity
    whenever no violation is predicted.
    """
    r_next, v_next = cw_step(state.r, state.v, proposed_force, cfg)
    rn = np.linalg.norm(r_next)
    speed_violation = np.linalg.norm(v_next) > cfg.nu0 + cfg.nu1 * rn
    keep_out_violation = rn < cfg.keep_out
    keep_in_violation = rn > cfg.keep_in
    if not (speed_violation or keep_out_violation or keep_in_violation):
        return proposed_force, False

    direction = np.zeros(3)
    if speed_violation:
        vel = state.v if np.linalg.norm(state.v) > 1e-12 else v_next
        vn = np.linalg.norm(vel)
        if vn > 1e-12:
            direction -= vel / vn
    rnorm = np.linalg.norm(state.r)
    rhat = state.r / rnorm if rnorm > 1e-12 else np.zeros(3)
    if keep_out_violation:
        direction += rhat
    if keep_in_violation:
        direction -= rhat
    dn = np.linalg.norm(direction)
    if dn > 1e-12:
        direction /= dn
    corrected = np.clip(
        direction * cfg.thrust_limit * math.sqrt(3.0),
        -cfg.thrust_limit, cfg.thrust_limit,
    )
    active = not np.array_equal(corrected, proposed_force)
    return corrected, active


class InspectionEnv:
    """Deterministic per (seed, action sequence); one instance per process."""

    feature_dim = FEATURE_DIM
    obs_dim = OBS_DIM
    act_dim = 3

    def __init__(self, cfg: InspectionConfig | None = None, seed: int | None = None):
        self.cfg = cfg or InspectionConfig()
        self.cloud = PointCloud.build(self.cfg.n_points, self.cfg.chief_radius)
        self._cos_cone = math.cos(math.radians(self.cfg.cone_half_angle_deg))
        self._rng = np.random.default_rng(seed)
        self.state: DeputyState | None = None
        self._p_c = np.zeros(3)

    def reset(self, seed: int | None = None) -> DeputyState:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        rng = self._rng
        cfg = self.cfg
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        radius = rng.uniform(*cfg.init_radius)
        self.state = DeputyState(
            r=direction * radius,
            v=rng.uniform(-cfg.init_speed, cfg.init_speed, size=3),
            sun_angle=float(rng.uniform(0.0, 2.0 * math.pi)),
            inspected=np.zeros(len(self.cloud), dtype=bool),
        )
        self._p_c = np.zeros(3)
        return self.state

    def observe(self, state: DeputyState | None = None) -> np.ndarray:
        s = state if state is not None else self.state
        cfg = self.cfg
        return np.concatenate([
            s.r / cfg.pos_scale,
            s.v / cfg.vel_scale,
            [math.sin(s.sun_angle), math.cos(s.sun_angle), s.inspected_count / 100.0],
            self._p_c,
        ])

    def step(self, action: np.ndarray):
        """Advance one step; action is a force command in [-1, 1]^3.

        Returns (state, FeatureVector, done, info). Order: safety filter,
        exact CW propagation, sun-angle advance, inspection update, feature
        emission, termination check.
        """
        cfg = self.cfg
        s = self.state
        if s is None:
            raise RuntimeError("reset() must be called before step()")
        if s.done:
            raise RuntimeError("step() called on a finished episode")

        proposed = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0) * cfg.thrust_limit
        if cfg.rta_enabled:
            force, active = rta_filter(s, proposed, cfg)
        else:
            force, active = proposed, False

        r_next, v_next = cw_step(s.r, s.v, force, cfg)
        sun_next = (s.sun_angle - cfg.mean_motion * cfg.dt) % (2.0 * math.pi)
        dv_step = float(np.sum(np.abs(force))) * cfg.dt / cfg.mass
        t = s.t + 1

        probe = DeputyState(
            r=r_next, v=v_next, sun_angle=sun_next, inspected=s.inspected, t=t
        )
        mask, newly, p_c = update_inspection(probe, self.cloud, self._cos_cone)
        count = int(np.count_nonzero(mask))

        rnorm = float(np.linalg.norm(r_next))
        success = count >= cfg.tau_points
        crashed = rnorm < cfg.chief_radius
        exited = rnorm > cfg.keep_in
        terminal = success or crashed or exited
        timeout = t >= cfg.max_steps
        done = terminal or timeout

        phi = FeatureVector([
            0.01 * (newly + (1.0 if success else 0.0)),
            -1.0 if (crashed or exited) else 0.0,
            -0.0001,
            -dv_step,
            -0.01 if active else 0.0,
        ])

        new_state = DeputyState(
            r=r_next, v=v_next, sun_angle=sun_next, inspected=mask,
            t=t, done=done,
            dv_used=s.dv_used + dv_step,
            rta_steps=s.rta_steps + int(active),
        )
        self.state = new_state
        self._p_c = p_c
        info = {
            "rta_active": active,
            "controller_active": active,
            "proposed_force": proposed,
            "executed_force": force,
            "newly_inspected": newly,
            "inspected_count": count,
            "terminal": terminal,
            "truncated": timeout and not terminal,
            "success": success,
            "crashed": crashed,
            "exited": exited,
            "dv_step": dv_step,
        }
        return new_state, phi, done, info

    def trace_row(self, state: DeputyState, phi: FeatureVector, info: dict) -> list:
        prop = info["proposed_force"]
        ex = info["executed_force"]
        return [
            state.t, *state.r, *state.v, state.sun_angle, state.inspected_count,
            *prop, *ex, int(info["rta_active"]), *phi.values,
        ]
