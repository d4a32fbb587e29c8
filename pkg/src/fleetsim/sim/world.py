"""Deterministic UAV world: first-order velocity dynamics, actuation and
telemetry latencies, change-driven quantized telemetry, and 360-degree range
sensing with near-range unreliability."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose, wrap_angle

MODEL_MINI3 = "mini3-like"
MODEL_MINI4 = "mini4-like"
MODEL_MAVIC3T = "mavic3t-like"
MODELS = (MODEL_MINI3, MODEL_MINI4, MODEL_MAVIC3T)

VELOCITY_STEP = 0.1          # m/s, DJI-style command/telemetry resolution
YAW_STEP_DEG = 0.1
POSITION_STEP = 0.1          # m, GNSS report resolution
ALTITUDE_STEP = 0.1
COMMAND_MIN_INTERVAL = 0.1   # s, 10 Hz admission
SENSOR_FLOOR = 0.5           # m, lower limit of the obstacle sensors


class UnknownUavError(KeyError):
    pass


@dataclass
class Wall:
    p1: np.ndarray
    p2: np.ndarray
    height: float


@dataclass
class Cylinder:
    center: np.ndarray
    radius: float
    height: float


@dataclass
class Latencies:
    actuation_s: float = 0.496
    telemetry_s: float = 0.344
    rtt_s: float = 0.0045


@dataclass
class NearRangeModel:
    detection_prob: float = 0.8
    overestimate_sigma: float = 0.3  # half-normal, m
    far_sigma: float = 0.03          # Gaussian, m, clipped at 5 sigma


@dataclass(frozen=True)
class QuantizedTelemetry:
    velocity: np.ndarray      # multiples of 0.1 m/s
    yaw_deg: float            # multiples of 0.1 deg
    altitude: float | None
    gnss_position: np.ndarray | None
    timestamp: float


@dataclass(frozen=True)
class RangeScan:
    distances: np.ndarray     # 360 values, meters
    valid_mask: np.ndarray    # 360 booleans
    max_range: float
    uav_pose_truth_tag: str
    timestamp: float


@dataclass(frozen=True)
class VelocityCommand:
    linear: np.ndarray        # world frame, m/s
    yaw_rate: float = 0.0
    timestamp: float = 0.0


@dataclass
class UavTruth:
    pose: Pose
    model: str
    gnss_available: bool
    max_speed: float = 5.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_rate: float = 0.0
    cmd_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cmd_yaw_rate: float = 0.0
    hold: bool = False
    crashed: bool = False
    pending: deque = field(default_factory=deque)  # (apply_time, kind, value)
    last_accept_time: float = float("-inf")
    last_emitted: tuple | None = None
    history: deque = field(default_factory=deque)  # truth snapshots for telemetry delay


def quantize(value, step):
    return np.round(np.asarray(value, dtype=float) / step) * step


class World:
    """Single-owner simulation state; values handed out are immutable copies."""

    def __init__(self, *, walls=(), cylinders=(), latencies=None, seed=0,
                 tau=0.3, max_range=10.0, collision_radius=0.15,
                 hold_drift_sigma=0.01, near_range=None):
        self.walls = list(walls)
        self.cylinders = list(cylinders)
        self.latencies = latencies or Latencies()
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.tau = tau
        self.max_range = max_range
        self.collision_radius = collision_radius
        self.hold_drift_sigma = hold_drift_sigma
        self.near_range = near_range or NearRangeModel()
        self.clock = 0.0
        self.uavs: dict[str, UavTruth] = {}

    # -- setup ------------------------------------------------------------

    def add_uav(self, uav_id: str, model: str, start: Pose,
                gnss_available: bool = False, max_speed: float = 5.0):
        if model not in MODELS:
            raise ValueError(f"unknown model {model!r}")
        self.uavs[uav_id] = UavTruth(pose=start, model=model,
                                     gnss_available=gnss_available,
                                     max_speed=max_speed)

    def _uav(self, uav_id: str) -> UavTruth:
        try:
            return self.uavs[uav_id]
        except KeyError:
            raise UnknownUavError(uav_id) from None

    # -- commands ---------------------------------------------------------

    def apply_virtual_stick(self, uav_id: str, cmd: VelocityCommand) -> bool:
        """Admit a velocity command: 0.1 m/s rounding, 10 Hz rate limit,
        actuation latency. Returns False when rate-limited."""
        uav = self._uav(uav_id)
        if self.clock - uav.last_accept_time < COMMAND_MIN_INTERVAL - 1e-9:
            return False
        uav.last_accept_time = self.clock
        linear = quantize(cmd.linear, VELOCITY_STEP)
        uav.pending.append((self.clock + self.latencies.actuation_s, "velocity",
                            (linear, float(cmd.yaw_rate))))
        return True

    def set_position_hold(self, uav_id: str, on: bool):
        """Request DJI-style position-hold; applied after actuation latency."""
        uav = self._uav(uav_id)
        uav.pending.append((self.clock + self.latencies.actuation_s, "hold", on))

    # -- stepping ---------------------------------------------------------

    def step(self, dt: float):
        if not (0.0 < dt <= 0.1):
            raise ValueError("dt must be in (0, 0.1]")
        self.clock += dt
        alpha = 1.0 - math.exp(-dt / self.tau)
        for uav_id in self.uavs:  # insertion order: deterministic
            uav = self.uavs[uav_id]
            while uav.pending and uav.pending[0][0] <= self.clock:
                _, kind, value = uav.pending.popleft()
                if kind == "velocity":
                    uav.cmd_velocity, uav.cmd_yaw_rate = value[0].copy(), value[1]
                    uav.hold = False
                else:
                    uav.hold = bool(value)
            if uav.crashed:
                uav.velocity = np.zeros(3)
                self._record_history(uav)
                continue
            if uav.hold:
                drift = self.rng.normal(0.0, self.hold_drift_sigma * math.sqrt(dt),
                                        size=3)
                uav.velocity = drift / dt
                uav.yaw_rate = 0.0
                new_pos = uav.pose.position + drift
            else:
                uav.velocity = uav.velocity + (uav.cmd_velocity - uav.velocity) * alpha
                speed = float(np.linalg.norm(uav.velocity))
                if speed > uav.max_speed:
                    uav.velocity *= uav.max_speed / speed
                uav.yaw_rate = uav.yaw_rate + (uav.cmd_yaw_rate - uav.yaw_rate) * alpha
                new_pos = uav.pose.position + uav.velocity * dt
            new_yaw = wrap_angle(uav.pose.yaw + uav.yaw_rate * dt)
            if self._collides(new_pos):
                uav.crashed = True
                uav.velocity = np.zeros(3)
            else:
                uav.pose = Pose(new_pos, new_yaw)
            self._record_history(uav)

    def _record_history(self, uav: UavTruth):
        uav.history.append((self.clock, uav.velocity.copy(), uav.pose.yaw,
                            uav.pose.position.copy()))
        horizon = self.clock - self.latencies.telemetry_s - 1.0
        while uav.history and uav.history[0][0] < horizon:
            uav.history.popleft()

    def _collides(self, pos: np.ndarray) -> bool:
        if pos[2] <= 0.0:
            return True
        p = pos[:2]
        r = self.collision_radius
        for w in self.walls:
            if pos[2] <= w.height and _point_segment_dist(p, w.p1, w.p2) < r:
                return True
        for c in self.cylinders:
            if pos[2] <= c.height and np.linalg.norm(p - c.center) < c.radius + r:
                return True
        return False

    # -- sensing ----------------------------------------------------------

    def sample_telemetry(self, uav_id: str) -> QuantizedTelemetry | None:
        """Change-driven quantized telemetry, delayed by the telemetry latency."""
        uav = self._uav(uav_id)
        snap = self._delayed_snapshot(uav)
        if snap is None:
            return None
        t, vel, yaw, pos = snap
        qvel = quantize(vel, VELOCITY_STEP)
        qyaw = round(math.degrees(yaw) / YAW_STEP_DEG) * YAW_STEP_DEG
        qalt = round(pos[2] / ALTITUDE_STEP) * ALTITUDE_STEP
        qpos = quantize(pos, POSITION_STEP) if uav.gnss_available else None
        key = (tuple(np.round(qvel / VELOCITY_STEP).astype(int)),
               round(qyaw / YAW_STEP_DEG),
               round(qalt / ALTITUDE_STEP),
               tuple(np.round(qpos / POSITION_STEP).astype(int)) if qpos is not None else None)
        if uav.last_emitted == key:
            return None
        uav.last_emitted = key
        return QuantizedTelemetry(qvel, qyaw, qalt, qpos, t)

    def _delayed_snapshot(self, uav: UavTruth):
        cutoff = self.clock - self.latencies.telemetry_s
        snap = None
        for entry in uav.history:
            if entry[0] <= cutoff + 1e-12:
                snap = entry
            else:
                break
        return snap

    def truth_ranges(self, uav_id: str) -> np.ndarray:
        """Noise-free ray-cast distances for the 360 body-frame azimuths."""
        uav = self._uav(uav_id)
        origin = uav.pose.position[:2]
        z = uav.pose.position[2]
        angles = uav.pose.yaw + np.radians(np.arange(360.0))
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        dist = np.full(360, self.max_range)
        for w in self.walls:
            if z > w.height:
                continue
            t = _ray_segment(origin, dirs, w.p1, w.p2)
            dist = np.minimum(dist, t)
        for c in self.cylinders:
            if z > c.height:
                continue
            t = _ray_circle(origin, dirs, c.center, c.radius)
            dist = np.minimum(dist, t)
        return dist

    def valid_sectors(self, model: str) -> np.ndarray:
        """Azimuth validity by UAV model; bin i is i degrees off body forward."""
        az = np.arange(360)
        if model == MODEL_MINI3:
            forward = (az <= 45) | (az >= 315)
            backward = (az >= 135) & (az <= 225)
            return forward | backward
        return np.ones(360, dtype=bool)

    def sample_range_scan(self, uav_id: str) -> RangeScan:
        uav = self._uav(uav_id)
        truth = self.truth_ranges(uav_id)
        valid = self.valid_sectors(uav.model).copy()
        nr = self.near_range
        gauss = self.rng.normal(0.0, nr.far_sigma, size=360)
        gauss = np.clip(gauss, -5.0 * nr.far_sigma, 5.0 * nr.far_sigma)
        detect = self.rng.uniform(size=360) < nr.detection_prob
        over = np.abs(self.rng.normal(0.0, nr.overestimate_sigma, size=360))

        reported = truth.copy()
        far = truth >= SENSOR_FLOOR
        reported[far] = np.maximum(SENSOR_FLOOR,
                                   np.minimum(truth[far] + gauss[far], self.max_range))
        reported[truth >= self.max_range] = self.max_range  # free rays stay exact
        near = ~far
        reported[near] = np.maximum(SENSOR_FLOOR, truth[near] + over[near])
        valid[near & ~detect] = False
        return RangeScan(reported, valid, self.max_range, uav_id, self.clock)

    def state_signature(self) -> tuple:
        """Bit-exact fingerprint of the dynamic state, for determinism tests."""
        parts = [self.clock]
        for uav_id in sorted(self.uavs):
            u = self.uavs[uav_id]
            parts.append((uav_id, u.pose.position.tobytes(), u.pose.yaw,
                          u.velocity.tobytes(), u.crashed, u.hold))
        return tuple(parts)


def _point_segment_dist(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def _ray_segment(origin, dirs, p1, p2):
    """Per-ray distance to a 2D segment; inf where no hit."""
    s = p2 - p1
    w = p1 - origin
    denom = dirs[:, 0] * s[1] - dirs[:, 1] * s[0]
    out = np.full(len(dirs), np.inf)
    ok = np.abs(denom) > 1e-12
    t = np.where(ok, (w[0] * s[1] - w[1] * s[0]) / np.where(ok, denom, 1.0), np.inf)
    u = np.where(ok, (w[0] * dirs[:, 1] - w[1] * dirs[:, 0]) / np.where(ok, denom, 1.0), 0.0)
    hit = ok & (t > 1e-9) & (u >= 0.0) & (u <= 1.0)
    out[hit] = t[hit]
    return out


def _ray_circle(origin, dirs, center, radius):
    oc = origin - center
    b = dirs @ oc
    c = float(oc @ oc) - radius * radius
    disc = b * b - c
    out = np.full(len(dirs), np.inf)
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = -b - sq
    t2 = -b + sq
    t = np.where(t1 > 1e-9, t1, np.where(t2 > 1e-9, t2, np.inf))
    out[ok] = t[ok]
    return out
