"""Constant-velocity EKF over quantized, event-driven telemetry.

State is [px, py, pz, vx, vy, vz, yaw]. Roll/pitch are unobservable from the
available telemetry and unused by the planar controller, so they are not
estimated. Measurement noise combines the uniform quantization variance
step^2 / 12 with a per-kind floor for unmodelled sensor noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, wrap_angle

KIND_VELOCITY = "velocity"
KIND_YAW = "yaw"
KIND_ALTITUDE = "altitude"
KIND_GNSS_POSITION = "gnss_position"

# chi-square 0.999 quantiles by measurement dimension
_CHI2_GATE = {1: 10.827566170662733, 3: 16.26623619623813}


@dataclass(frozen=True)
class MeasurementEvent:
    kind: str
    value: np.ndarray | float
    quantization_step: float
    timestamp: float

    def __post_init__(self):
        if self.kind not in (KIND_VELOCITY, KIND_YAW, KIND_ALTITUDE,
                             KIND_GNSS_POSITION):
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        if self.quantization_step <= 0.0:
            raise ValueError("quantization_step must be positive")


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray        # (7,)
    covariance: np.ndarray  # (7, 7)
    last_update: float

    def pose(self) -> Pose:
        return Pose(self.mean[:3].copy(), self.mean[6])

    def velocity(self) -> np.ndarray:
        return self.mean[3:6].copy()


@dataclass(frozen=True)
class FilterConfig:
    sigma_accel: float = 0.8          # m/s^2, white-acceleration process noise
    sigma_yaw_rate: float = 0.3       # rad/s
    floor_velocity: float = 0.02      # m/s
    floor_yaw: float = math.radians(0.1)
    floor_altitude: float = 0.05      # m
    floor_gnss: float = 0.1           # m
    gate: bool = True


def initial_state(pose: Pose, velocity=None, *, t: float = 0.0,
                  pos_std: float = 0.05, vel_std: float = 0.05,
                  yaw_std: float = math.radians(1.0)) -> FilterState:
    mean = np.zeros(7)
    mean[:3] = pose.position
    mean[3:6] = np.zeros(3) if velocity is None else velocity
    mean[6] = pose.yaw
    cov = np.diag([pos_std**2] * 3 + [vel_std**2] * 3 + [yaw_std**2])
    return FilterState(mean, cov, t)


def propagate(state: FilterState, dt: float,
              config: FilterConfig = FilterConfig()) -> FilterState:
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    if dt == 0.0:
        return state
    mean = state.mean.copy()
    mean[:3] += mean[3:6] * dt
    mean[6] = wrap_angle(mean[6])

    f = np.eye(7)
    f[0, 3] = f[1, 4] = f[2, 5] = dt
    q = np.zeros((7, 7))
    sa2 = config.sigma_accel**2
    q_pp = sa2 * dt**4 / 4.0
    q_pv = sa2 * dt**3 / 2.0
    q_vv = sa2 * dt**2
    for i in range(3):
        q[i, i] = q_pp
        q[i, i + 3] = q[i + 3, i] = q_pv
        q[i + 3, i + 3] = q_vv
    q[6, 6] = (config.sigma_yaw_rate * dt)**2
    cov = f @ state.covariance @ f.T + q
    cov = 0.5 * (cov + cov.T)
    return FilterState(mean, cov, state.last_update + dt)


def _measurement_model(m: MeasurementEvent, config: FilterConfig):
    if m.kind == KIND_VELOCITY:
        h = np.zeros((3, 7))
        h[:, 3:6] = np.eye(3)
        floor = config.floor_velocity
        z = np.asarray(m.value, dtype=float)
    elif m.kind == KIND_YAW:
        h = np.zeros((1, 7))
        h[0, 6] = 1.0
        floor = config.floor_yaw
        z = np.atleast_1d(float(m.value))
    elif m.kind == KIND_ALTITUDE:
        h = np.zeros((1, 7))
        h[0, 2] = 1.0
        floor = config.floor_altitude
        z = np.atleast_1d(float(m.value))
    else:  # gnss position
        h = np.zeros((3, 7))
        h[:, :3] = np.eye(3)
        floor = config.floor_gnss
        z = np.asarray(m.value, dtype=float)
    var = m.quantization_step**2 / 12.0 + floor**2
    r = np.eye(len(z)) * var
    return h, z, r


def update(state: FilterState, m: MeasurementEvent,
           config: FilterConfig = FilterConfig()):
    """EKF update; returns (new_state, accepted). A measurement failing the
    chi-square gate leaves the state unchanged and reports rejection."""
    if m.timestamp < state.last_update - 1e-9:
        raise ValueError("measurement older than filter state")
    if m.timestamp > state.last_update:
        state = propagate(state, m.timestamp - state.last_update, config)

    h, z, r = _measurement_model(m, config)
    innovation = z - h @ state.mean
    if m.kind == KIND_YAW:
        innovation[0] = wrap_angle(innovation[0])
    s = h @ state.covariance @ h.T + r
    if config.gate:
        maha2 = float(innovation @ np.linalg.solve(s, innovation))
        if maha2 > _CHI2_GATE[len(z)]:
            return state, False
    k = state.covariance @ h.T @ np.linalg.inv(s)
    mean = state.mean + k @ innovation
    mean[6] = wrap_angle(mean[6])
    ikh = np.eye(7) - k @ h
    cov = ikh @ state.covariance @ ikh.T + k @ r @ k.T  # Joseph form
    cov = 0.5 * (cov + cov.T)
    return FilterState(mean, cov, state.last_update), True


def estimate_at(state: FilterState, t: float,
                config: FilterConfig = FilterConfig()):
    """Propagate-only extrapolation; does not mutate the stored state."""
    if t < state.last_update - 1e-9:
        raise ValueError("cannot extrapolate into the past")
    extrapolated = propagate(state, max(0.0, t - state.last_update), config)
    return extrapolated.pose(), extrapolated.velocity()


class RateAdapter:
    """Merge-and-hold rate adapter: re-emits the latest value per kind at a
    fixed tick rate. No emission for a kind before its first event."""

    def __init__(self, rate_hz: float):
        if not (10.0 <= rate_hz <= 100.0):
            raise ValueError("rate must be within [10, 100] Hz")
        self.period = 1.0 / rate_hz
        self.latest: dict[str, MeasurementEvent] = {}
        self.next_tick: float | None = None

    def push(self, event: MeasurementEvent):
        held = self.latest.get(event.kind)
        if held is None or event.timestamp >= held.timestamp:
            self.latest[event.kind] = event
        if self.next_tick is None:
            self.next_tick = event.timestamp

    def tick(self, now: float) -> list[MeasurementEvent]:
        out = []
        if self.next_tick is None:
            return out
        while self.next_tick <= now + 1e-12:
            t = self.next_tick
            for kind in (KIND_VELOCITY, KIND_YAW, KIND_ALTITUDE,
                         KIND_GNSS_POSITION):
                held = self.latest.get(kind)
                if held is not None and held.timestamp <= t + 1e-12:
                    out.append(replace(held, timestamp=t))
            self.next_tick = t + self.period
        return out


def rate_adapt(events, rate_hz: float, until: float) -> list[MeasurementEvent]:
    """Offline convenience wrapper over RateAdapter for a sorted event list."""
    adapter = RateAdapter(rate_hz)
    out = []
    for ev in sorted(events, key=lambda e: e.timestamp):
        out.extend(adapter.tick(ev.timestamp - 1e-12))
        adapter.push(ev)
    out.extend(adapter.tick(until))
    return out


def telemetry_events(telemetry, *, include_altitude: bool = True):
    """Split a QuantizedTelemetry report into filter measurement events."""
    events = [
        MeasurementEvent(KIND_VELOCITY, np.asarray(telemetry.velocity, dtype=float),
                         0.1, telemetry.timestamp),
        MeasurementEvent(KIND_YAW, math.radians(telemetry.yaw_deg),
                         math.radians(0.1), telemetry.timestamp),
    ]
    if include_altitude and telemetry.altitude is not None:
        events.append(MeasurementEvent(KIND_ALTITUDE, telemetry.altitude,
                                       0.1, telemetry.timestamp))
    if telemetry.gnss_position is not None:
        events.append(MeasurementEvent(KIND_GNSS_POSITION,
                                       np.asarray(telemetry.gnss_position, dtype=float),
                                       0.1, telemetry.timestamp))
    return events
