"""Door detection from horizontal range scans and the staged traversal
state machine: approach with continuous re-detection, freeze, traverse."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Pose, wrap_angle
from .sim.world import RangeScan

PHASE_APPROACHING = "approaching"
PHASE_FROZEN = "frozen_traversing"
PHASE_DONE = "done"
PHASE_ABORTED = "aborted"


@dataclass(frozen=True)
class DoorCandidate:
    left_edge: np.ndarray      # 2D, scan frame
    right_edge: np.ndarray
    width: float
    outward_normal: np.ndarray  # unit 2D, toward the observer side
    normal_radial_deviation: float
    clearance_behind: float

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.left_edge + self.right_edge)

    @property
    def inward_normal(self) -> np.ndarray:
        return -self.outward_normal

    @property
    def inward_angle(self) -> float:
        return math.atan2(self.inward_normal[1], self.inward_normal[0])


@dataclass(frozen=True)
class DetectionConfig:
    search_half_width: float = math.radians(60.0)
    jump_threshold: float = 0.8        # m between adjacent bins
    max_normal_deviation: float = math.radians(30.0)
    min_width: float = 0.7             # m
    min_clearance_behind: float = 1.0  # m


@dataclass(frozen=True)
class TraversalConfig:
    standoff: float = 1.0
    post_offset: float = 1.0
    step_size: float = 0.2
    stability_count: int = 5
    stability_tolerance: float = 0.10
    arrival_tolerance: float = 0.12
    lost_timeout: float = 3.0


@dataclass(frozen=True)
class TraversalState:
    phase: str = PHASE_APPROACHING
    door_global: DoorCandidate | None = None
    pre_pose: Pose | None = None
    post_pose: Pose | None = None
    stable_count: int = 0
    last_detection_time: float | None = None
    width_samples: tuple = ()


def _bin_point(scan: RangeScan, b: int) -> np.ndarray:
    a = math.radians(b)
    return scan.distances[b] * np.array([math.cos(a), math.sin(a)])


def detect_doors(scan: RangeScan, heading: float,
                 config: DetectionConfig = DetectionConfig()) -> list[DoorCandidate]:
    """Search adjacent-bin range jumps within the heading sector and pair a
    rising with the next falling jump into a door opening."""
    half_deg = math.degrees(config.search_half_width)
    heading_deg = math.degrees(wrap_angle(heading))
    bins = [int(round(heading_deg + off)) % 360
            for off in range(-int(half_deg), int(half_deg) + 1)]

    rising = []   # near edge at bins[k]
    falling = []  # near edge at bins[k+1]
    for k in range(len(bins) - 1):
        i, j = bins[k], bins[k + 1]
        if not (scan.valid_mask[i] and scan.valid_mask[j]):
            continue
        delta = scan.distances[j] - scan.distances[i]
        if delta > config.jump_threshold:
            rising.append(k)
        elif delta < -config.jump_threshold:
            falling.append(k + 1)

    candidates = []
    for k in rising:
        nxt = [m for m in falling if m > k]
        if not nxt:
            continue
        m = nxt[0]
        # offsets within the sector map back to absolute bins; the pair may
        # straddle 0 degrees, so work in sector-offset space
        cand = _door_from_jump_pair_offsets(scan, bins, k, m)
        if cand is None:
            continue
        if cand.normal_radial_deviation > config.max_normal_deviation:
            continue
        if cand.width < config.min_width:
            continue
        if cand.clearance_behind < config.min_clearance_behind:
            continue
        candidates.append(cand)

    candidates.sort(key=lambda c: abs(wrap_angle(c.inward_angle - heading)))
    return candidates


def _door_from_jump_pair_offsets(scan: RangeScan, bins, k: int, m: int):
    near_a = bins[k]
    near_b = bins[m]
    # reuse the absolute-bin geometry; interior bins walked in sector order
    e1 = _bin_point(scan, near_a)
    e2 = _bin_point(scan, near_b)
    chord = e2 - e1
    width = float(np.linalg.norm(chord))
    if width < 1e-9:
        return None
    mid = 0.5 * (e1 + e2)
    normal = np.array([-chord[1], chord[0]]) / width
    if normal @ mid > 0.0:
        normal = -normal
    radial = -mid / max(np.linalg.norm(mid), 1e-12)
    deviation = math.acos(float(np.clip(normal @ radial, -1.0, 1.0)))

    clearance = math.inf
    seen = False
    for kk in range(k + 1, m):
        qi = bins[kk]
        if not scan.valid_mask[qi]:
            continue
        a = math.radians(qi)
        d = np.array([math.cos(a), math.sin(a)])
        denom = float(d @ (-normal))
        if denom <= 1e-9:
            continue
        t_line = float(e1 @ (-normal)) / denom
        if t_line <= 0.0:
            continue
        seen = True
        clearance = min(clearance, float(scan.distances[qi]) - t_line)
    if not seen:
        return None
    return DoorCandidate(e1, e2, width, normal, deviation, clearance)


def select_door(candidates, heading: float) -> DoorCandidate | None:
    """The candidate whose inward normal aligns best with the heading."""
    if not candidates:
        return None
    return min(candidates, key=lambda c: abs(wrap_angle(c.inward_angle - heading)))


def pre_traversal_pose(door: DoorCandidate, standoff: float,
                       height: float = 0.0) -> Pose:
    if standoff <= 0.0:
        raise ValueError("standoff must be positive")
    xy = door.midpoint + standoff * door.outward_normal
    return Pose(np.array([xy[0], xy[1], height]), door.inward_angle)


def _candidate_to_global(door: DoorCandidate, est: Pose) -> DoorCandidate:
    """Re-express a scan-frame candidate in the global frame of `est`."""
    c, s = math.cos(est.yaw), math.sin(est.yaw)
    rot = np.array([[c, -s], [s, c]])
    off = est.position[:2]
    return DoorCandidate(rot @ door.left_edge + off, rot @ door.right_edge + off,
                         door.width, rot @ door.outward_normal,
                         door.normal_radial_deviation, door.clearance_behind)


def _step_toward(current: Pose, target: Pose, step: float) -> Pose:
    delta = target.position - current.position
    dist = float(np.linalg.norm(delta))
    if dist <= step:
        return target
    return Pose(current.position + delta * (step / dist), target.yaw)


def traversal_tick(ts: TraversalState, scan: RangeScan | None, est: Pose,
                   now: float, config: TraversalConfig = TraversalConfig(),
                   detection: DetectionConfig = DetectionConfig()):
    """One control tick. Returns (target_pose | None, bypass_lateral, ts').

    While approaching, the door is re-detected on every scan and the UAV is
    stepped a small distance toward the running pre-traversal pose. Once the
    pose is stable the doorway is frozen in the global frame; traversal then
    follows the frozen normal with lateral avoidance bypassed."""
    if ts.phase in (PHASE_DONE, PHASE_ABORTED):
        return None, False, ts

    if ts.phase == PHASE_FROZEN:
        door = ts.door_global
        inward3 = np.array([door.inward_normal[0], door.inward_normal[1], 0.0])
        mid3 = np.array([door.midpoint[0], door.midpoint[1],
                         ts.post_pose.position[2]])
        if float(np.linalg.norm(est.position - ts.post_pose.position)) \
                < config.arrival_tolerance:
            return None, False, replace(ts, phase=PHASE_DONE)
        # progress along the frozen normal line; every target sits on it
        s_est = float((est.position - mid3) @ inward3)
        s_post = float((ts.post_pose.position - mid3) @ inward3)
        s_next = min(s_est + config.step_size, s_post)
        target = Pose(mid3 + s_next * inward3, ts.post_pose.yaw)
        return target, True, ts

    # approaching: re-detect on the fresh scan
    new_ts = ts
    door_local = None
    if scan is not None:
        door_local = select_door(detect_doors(scan, 0.0, detection), 0.0)
    if door_local is not None:
        door_global = _candidate_to_global(door_local, est)
        pre = pre_traversal_pose(door_global, config.standoff,
                                 height=est.position[2])
        new_ts = replace(new_ts, pre_pose=pre, last_detection_time=now,
                         door_global=door_global,
                         width_samples=ts.width_samples + (door_local.width,))
    elif new_ts.last_detection_time is not None \
            and now - new_ts.last_detection_time > config.lost_timeout:
        return None, False, replace(new_ts, phase=PHASE_ABORTED)

    if new_ts.pre_pose is None:
        if new_ts.last_detection_time is None and scan is not None:
            new_ts = replace(new_ts, last_detection_time=now)
        return None, False, new_ts

    err = float(np.linalg.norm(est.position - new_ts.pre_pose.position))
    if err < config.stability_tolerance:
        count = new_ts.stable_count + 1
    else:
        count = 0
    new_ts = replace(new_ts, stable_count=count)

    if count >= config.stability_count:
        door = new_ts.door_global
        mid = door.midpoint
        post_xy = mid + config.post_offset * door.inward_normal
        post = Pose(np.array([post_xy[0], post_xy[1], est.position[2]]),
                    door.inward_angle)
        frozen = replace(new_ts, phase=PHASE_FROZEN, post_pose=post)
        return traversal_tick(frozen, None, est, now, config, detection)

    target = _step_toward(est, new_ts.pre_pose, config.step_size)
    return target, False, new_ts
