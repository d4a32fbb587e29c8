"""Reactive velocity adjustment via angular potential fields.

Range scans are fused into a (azimuth x elevation) range image, per-pixel
forces atan2(d_safe, r) are spread over the image by a generalized L1
distance transform with linear decay, and commands are steered toward the
closest zero-force pixel within the field of view. Dual safety distances
give a graceful fallback before the stop rule fires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sim.world import RangeScan, SENSOR_FLOOR, VelocityCommand

DEFAULT_D_SAFE = 1.2     # m, preferred clearance
DEFAULT_D_MIN = 0.5      # m, hard clearance (the sensor floor)
DEFAULT_DECAY = 0.05     # force units per pixel
DEFAULT_FOV = math.pi / 2  # azimuth half-width
DEFAULT_ELEVATION_BINS = 5
ELEVATION_STEP_DEG = 10.0


@dataclass(frozen=True)
class SphericalRangeImage:
    grid: np.ndarray           # (360, elevation_bins), meters; inf = free
    aggregation_window: float
    timestamp: float

    @property
    def azimuth_bins(self) -> int:
        return self.grid.shape[0]

    @property
    def elevation_bins(self) -> int:
        return self.grid.shape[1]


@dataclass(frozen=True)
class PotentialField:
    values: np.ndarray         # non-negative forces, same shape as the image
    safety_distance: float


@dataclass(frozen=True)
class AdjustedCommand:
    velocity: np.ndarray
    yaw_rate: float
    stop: bool


def aggregate(scans, window: float, now: float,
              elevation_bins: int = DEFAULT_ELEVATION_BINS) -> SphericalRangeImage:
    """Conservative fusion: per-azimuth minimum over valid, in-window bins.

    The horizontal scan row is replicated across the elevation rows; rays at
    max range count as free (infinite distance)."""
    if elevation_bins % 2 != 1:
        raise ValueError("elevation_bins must be odd")
    row = np.full(360, np.inf)
    for scan in scans:
        if scan.timestamp < now - window - 1e-9 or scan.timestamp > now + 1e-9:
            continue
        hit = scan.valid_mask & (scan.distances < scan.max_range - 1e-9)
        row[hit] = np.minimum(row[hit], scan.distances[hit])
    finite = np.isfinite(row)
    row[finite] = np.maximum(row[finite], SENSOR_FLOOR)
    grid = np.repeat(row[:, None], elevation_bins, axis=1)
    return SphericalRangeImage(grid, window, now)


def seed_forces(img: SphericalRangeImage, d_safe: float) -> np.ndarray:
    if d_safe <= 0.0:
        raise ValueError("safety distance must be positive")
    forces = np.zeros_like(img.grid)
    occupied = np.isfinite(img.grid)
    forces[occupied] = np.arctan2(d_safe, img.grid[occupied])
    return forces


def _pass_along_axis(force, dist, c, axis):
    """One sweep of the max-plus L1 transform along `axis` (no wrap).

    `force`/`dist` carry the seed force and integer L1 distance of each
    cell's current best source; values are always recomputed from those so
    the result is bit-identical to the O(n^2) definition."""
    n = force.shape[axis]
    shape = [1] * force.ndim
    shape[axis] = n
    k = np.arange(n).reshape(shape)

    def directional(f, d):
        # score = value + c*k is maximized by the same source as the
        # distance-decayed value for every cell at index >= source
        score = (f - c * d) + c * k
        run = np.maximum.accumulate(score, axis=axis)
        src = np.where(score >= run, k, -1)
        src = np.maximum.accumulate(src, axis=axis)
        nf = np.take_along_axis(f, src, axis=axis)
        nd = np.take_along_axis(d, src, axis=axis) + np.abs(k - src)
        return nf, nd

    best_f, best_d = directional(force, dist)
    rf, rd = directional(np.flip(force, axis), np.flip(dist, axis))
    rf, rd = np.flip(rf, axis), np.flip(rd, axis)
    take_r = (rf - c * rd) > (best_f - c * best_d)
    best_f = np.where(take_r, rf, best_f)
    best_d = np.where(take_r, rd, best_d)
    return best_f, best_d


def distance_transform_l1(forces: np.ndarray, decay: float,
                          azimuth_wrap: bool = True) -> PotentialField:
    """P(p) = max_q (force(q) - decay * L1(p, q)), clamped at zero.

    Axis 0 is azimuth and periodic; axis 1 is elevation and is not.
    Exactly equals the brute-force maximum (same float expressions)."""
    if decay <= 0.0:
        raise ValueError("decay must be positive")
    f = np.asarray(forces, dtype=float)
    d = np.zeros_like(f, dtype=np.int64)
    if azimuth_wrap:
        # Triple the azimuth axis: every source appears within one period of
        # every cell, and farther periodic copies can never win.
        f3 = np.concatenate([f, f, f], axis=0)
        d3 = np.concatenate([d, d, d], axis=0)
        f3, d3 = _pass_along_axis(f3, d3, decay, axis=0)
        n = f.shape[0]
        f, d = f3[n:2 * n], d3[n:2 * n]
    else:
        f, d = _pass_along_axis(f, d, decay, axis=0)
    if forces.ndim > 1 and forces.shape[1] > 1:
        f, d = _pass_along_axis(f, d, decay, axis=1)
    values = np.maximum(f - decay * d, 0.0)
    return PotentialField(values, decay)


def brute_force_transform(forces: np.ndarray, decay: float,
                          azimuth_wrap: bool = True) -> np.ndarray:
    """O(n^2) reference for distance_transform_l1 (test oracle)."""
    f = np.asarray(forces, dtype=float)
    n_az, n_el = f.shape
    az = np.arange(n_az)
    el = np.arange(n_el)
    daz = np.abs(az[:, None] - az[None, :])
    if azimuth_wrap:
        daz = np.minimum(daz, n_az - daz)
    del_ = np.abs(el[:, None] - el[None, :])
    l1 = (daz[:, None, :, None] + del_[None, :, None, :]).reshape(
        n_az * n_el, n_az * n_el)
    cand = f.reshape(-1)[None, :] - decay * l1
    return np.maximum(cand.max(axis=1), 0.0).reshape(n_az, n_el)


def _azimuth_delta(a: int, b: int, n: int = 360) -> int:
    d = abs(a - b) % n
    return min(d, n - d)


def _command_pixel(linear: np.ndarray, n_el: int):
    az = math.degrees(math.atan2(linear[1], linear[0])) % 360.0
    az_bin = int(round(az)) % 360
    horiz = math.hypot(linear[0], linear[1])
    el = math.degrees(math.atan2(linear[2], horiz)) if horiz > 0 else 0.0
    mid = n_el // 2
    el_bin = int(np.clip(mid + round(el / ELEVATION_STEP_DEG), 0, n_el - 1))
    return az_bin, el_bin


def _pixel_direction(az_bin: int, el_bin: int, n_el: int) -> np.ndarray:
    az = math.radians(az_bin)
    el = math.radians((el_bin - n_el // 2) * ELEVATION_STEP_DEG)
    return np.array([math.cos(el) * math.cos(az),
                     math.cos(el) * math.sin(az),
                     math.sin(el)])


def _descend(p: np.ndarray, start, cmd_az: int, fov_bins: int):
    """Gradient descent to a zero pixel of p within the azimuth fov.
    Returns the reached pixel or None when stuck at a nonzero local min."""
    n_az, n_el = p.shape
    az, el = start
    for _ in range(n_az * n_el):
        if p[az, el] == 0.0:
            return az, el
        best = None
        for daz in (-1, 0, 1):
            for del_ in (-1, 0, 1):
                if daz == 0 and del_ == 0:
                    continue
                naz = (az + daz) % n_az
                nel = el + del_
                if not (0 <= nel < n_el):
                    continue
                if _azimuth_delta(naz, cmd_az) > fov_bins:
                    continue
                val = p[naz, nel]
                if val >= p[az, el]:
                    continue
                key = (val, _azimuth_delta(naz, cmd_az), abs(nel - start[1]))
                if best is None or key < best[0]:
                    best = (key, (naz, nel))
        if best is None:
            return None
        az, el = best[1]
    return None


def adjust(cmd: VelocityCommand, img: SphericalRangeImage,
           d_safe: float = DEFAULT_D_SAFE, d_min: float = DEFAULT_D_MIN,
           fov: float = DEFAULT_FOV, decay: float = DEFAULT_DECAY) -> AdjustedCommand:
    """Steer a body-frame velocity command around obstacles.

    Descends the preferred-clearance field to a free direction inside the
    fov; falls back to hard-clearance free pixels; stops when even those are
    exhausted. Magnitude scales linearly with the obstacle distance in the
    selected direction between d_min and d_safe."""
    if not (0.0 < d_min < d_safe):
        raise ValueError("require 0 < d_min < d_safe")
    speed = float(np.linalg.norm(cmd.linear))
    if speed == 0.0:
        return AdjustedCommand(cmd.linear.copy(), cmd.yaw_rate, False)

    forces_s = seed_forces(img, d_safe)
    if not forces_s.any():
        return AdjustedCommand(cmd.linear.copy(), cmd.yaw_rate, False)
    p_s = distance_transform_l1(forces_s, decay).values
    az_bin, el_bin = _command_pixel(cmd.linear, img.elevation_bins)
    if p_s[az_bin, el_bin] == 0.0:
        return AdjustedCommand(cmd.linear.copy(), cmd.yaw_rate, False)

    fov_bins = int(math.floor(math.degrees(fov) + 1e-9))
    chosen = _descend(p_s, (az_bin, el_bin), az_bin, fov_bins)
    if chosen is None:
        p_min = distance_transform_l1(seed_forces(img, d_min), decay).values
        candidates = np.argwhere(p_min == 0.0)
        in_fov = [tuple(c) for c in candidates
                  if _azimuth_delta(int(c[0]), az_bin) <= fov_bins]
        if not in_fov:
            return AdjustedCommand(np.zeros(3), 0.0, True)
        chosen = min(in_fov, key=lambda c: (p_s[c],
                                            _azimuth_delta(c[0], az_bin),
                                            abs(c[1] - el_bin)))

    r_dir = img.grid[chosen]
    factor = 1.0 if not np.isfinite(r_dir) else float(
        np.clip((r_dir - d_min) / (d_safe - d_min), 0.0, 1.0))
    direction = _pixel_direction(chosen[0], chosen[1], img.elevation_bins)
    return AdjustedCommand(direction * speed * factor, cmd.yaw_rate, False)


def debug_dump(field: PotentialField, chosen=None) -> dict:
    """Portable field dump for the UI scan view: row-major float grid."""
    values = np.asarray(field.values)
    return {
        "azimuth_bins": int(values.shape[0]),
        "elevation_bins": int(values.shape[1]) if values.ndim > 1 else 1,
        "safety_distance": field.safety_distance,
        "values": [float(v) for v in values.ravel()],
        "chosen": None if chosen is None else [int(chosen[0]), int(chosen[1])],
    }
