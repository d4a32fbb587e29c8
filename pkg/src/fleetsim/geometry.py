"""Shared geometric types: poses, yaw-only similarity transforms, frustums,
and the alignment math used by mapping and fleet management."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DegenerateConfigurationError(ValueError):
    """Point set too small or collinear for a similarity fit."""


class AlignmentFailureError(RuntimeError):
    """RANSAC could not find a model with enough inliers."""


class ScaleIndeterminateError(ValueError):
    """Trajectory has no displacement; arc-length scale undefined."""


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    """Position plus yaw; the UAVs fly gravity-aligned so roll/pitch are dropped."""

    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        if p.shape != (3,):
            raise ValueError("position must be a 3-vector")
        if not np.all(np.isfinite(p)):
            raise ValueError("position components must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), 0.0)

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other, expressed in self's frame."""
        return Pose(self.position + rot_z(self.yaw) @ other.position,
                    self.yaw + other.yaw)

    def inverse(self) -> "Pose":
        return Pose(-(rot_z(-self.yaw) @ self.position), -self.yaw)

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.position + rot_z(self.yaw) @ np.asarray(p, dtype=float)

    def inverse_transform_point(self, p: np.ndarray) -> np.ndarray:
        return rot_z(-self.yaw) @ (np.asarray(p, dtype=float) - self.position)


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


@dataclass(frozen=True)
class SimilarityTransform:
    """Maps one frame into another: x -> scale * R(yaw) * x + translation."""

    scale: float
    yaw: float
    translation: np.ndarray

    def __post_init__(self):
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive and finite")
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform(1.0, 0.0, np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = self.scale * (pts @ rot_z(self.yaw).T) + self.translation
        return out[0] if np.asarray(points).ndim == 1 else out

    def apply_pose(self, pose: Pose) -> Pose:
        return Pose(self.apply(pose.position), pose.yaw + self.yaw)

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        return SimilarityTransform(
            inv_scale, -self.yaw,
            -inv_scale * (rot_z(-self.yaw) @ self.translation))


@dataclass(frozen=True)
class CameraFrustum:
    """Rectangular viewing pyramid looking along the +x axis of its pose."""

    pose: Pose
    h_fov: float
    v_fov: float
    near: float
    far: float

    def __post_init__(self):
        if not (0.0 < self.near < self.far):
            raise ValueError("require 0 < near < far")
        if not (0.0 < self.h_fov < math.pi and 0.0 < self.v_fov < math.pi):
            raise ValueError("fov must be in (0, pi)")

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of world points inside the frustum volume."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        local = (pts - self.pose.position) @ rot_z(self.pose.yaw)
        x, y, z = local[:, 0], local[:, 1], local[:, 2]
        ok = (x >= self.near) & (x <= self.far)
        ok &= np.abs(y) <= x * math.tan(self.h_fov / 2.0)
        ok &= np.abs(z) <= x * math.tan(self.v_fov / 2.0)
        return ok

    def sample_points(self, n_depth: int, n_h: int, n_v: int) -> np.ndarray:
        """Deterministic stratified grid over the frustum volume (cell centers)."""
        d = self.near + (self.far - self.near) * (np.arange(n_depth) + 0.5) / n_depth
        th = self.h_fov * ((np.arange(n_h) + 0.5) / n_h - 0.5)
        tv = self.v_fov * ((np.arange(n_v) + 0.5) / n_v - 0.5)
        dd, hh, vv = np.meshgrid(d, th, tv, indexing="ij")
        local = np.stack([dd, dd * np.tan(hh), dd * np.tan(vv)], axis=-1).reshape(-1, 3)
        return local @ rot_z(self.pose.yaw).T + self.pose.position


def frustum_overlap(a: CameraFrustum, b: CameraFrustum,
                    n_depth: int = 12, n_h: int = 10, n_v: int = 10) -> float:
    """Fraction of a's sample grid that also falls inside b."""
    pts = a.sample_points(n_depth, n_h, n_v)
    return float(np.count_nonzero(b.contains(pts))) / len(pts)


def umeyama_similarity(src, dst) -> SimilarityTransform:
    """Least-squares fit of scale, yaw and translation mapping src onto dst.

    Rotation is restricted to yaw (the vertical axis is shared between
    frames), so the closed form reduces to a planar correlation angle.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must be matching (N, 3) arrays")
    n = len(src)
    if n < 3:
        raise DegenerateConfigurationError("need at least 3 point pairs")

    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    p = src - src_mean
    q = dst - dst_mean

    # Collinear sets leave yaw (and for vertical lines scale) unconstrained.
    sv = np.linalg.svd(p, compute_uv=False)
    if sv[1] < 1e-9 * max(sv[0], 1.0):
        raise DegenerateConfigurationError("source points are collinear")

    # q . R(yaw) p = cos(yaw) * A + sin(yaw) * B + C with C the (yaw-free)
    # vertical correlation; yaw maximizes the planar part in closed form.
    a = float(np.sum(q[:, 0] * p[:, 0] + q[:, 1] * p[:, 1]))
    b = float(np.sum(q[:, 1] * p[:, 0] - q[:, 0] * p[:, 1]))
    c = float(np.sum(q[:, 2] * p[:, 2]))
    yaw = math.atan2(b, a)
    denom = float(np.sum(p * p))
    scale = (math.hypot(a, b) + c) / denom
    if scale <= 0.0:
        raise DegenerateConfigurationError("degenerate scale")
    translation = dst_mean - scale * (rot_z(yaw) @ src_mean)
    return SimilarityTransform(scale, yaw, translation)


def similarity_residuals(t: SimilarityTransform, src, dst) -> np.ndarray:
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    return np.linalg.norm(dst - t.apply(src), axis=1)


def ransac_align(src_poses, anchors, *, iterations: int = 200,
                 inlier_threshold: float = 0.3, seed: int = 0):
    """Consensus similarity fit between pose positions and anchor points.

    Returns (transform, inlier_mask); deterministic for a given seed.
    """
    src = np.array([p.position for p in src_poses], dtype=float)
    dst = np.asarray(anchors, dtype=float)
    if len(src) != len(dst) or len(src) < 3:
        raise AlignmentFailureError("need at least 3 pose/anchor pairs")

    rng = np.random.default_rng(seed)
    n = len(src)
    best_mask = None
    best_count = 0
    for _ in range(iterations):
        idx = rng.choice(n, size=3, replace=False)
        try:
            model = umeyama_similarity(src[idx], dst[idx])
        except DegenerateConfigurationError:
            continue
        mask = similarity_residuals(model, src, dst) <= inlier_threshold
        count = int(np.count_nonzero(mask))
        if count > best_count:
            best_count = count
            best_mask = mask

    if best_mask is None or best_count < 3:
        raise AlignmentFailureError("no model with >= 3 inliers")

    # Refit on the consensus set and re-evaluate membership once.
    refined = umeyama_similarity(src[best_mask], dst[best_mask])
    final_mask = similarity_residuals(refined, src, dst) <= inlier_threshold
    if np.count_nonzero(final_mask) >= 3:
        try:
            refined = umeyama_similarity(src[final_mask], dst[final_mask])
        except DegenerateConfigurationError:
            final_mask = best_mask
    else:
        final_mask = best_mask
    return refined, final_mask


def _arc_length(positions: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(positions, axis=0), axis=1)))


def align_gnss_denied(est_poses, reference_poses, *, n_scale_poses: int = 10
                      ) -> SimilarityTransform:
    """Scale from arc-length ratio over the first poses; origin and yaw
    aligned with the reference trajectory's start."""
    if len(est_poses) < 2 or len(reference_poses) < 2:
        raise ScaleIndeterminateError("need at least 2 poses")
    k = min(n_scale_poses, len(est_poses), len(reference_poses))
    est_xyz = np.array([p.position for p in est_poses[:k]])
    ref_xyz = np.array([p.position for p in reference_poses[:k]])
    est_arc = _arc_length(est_xyz)
    ref_arc = _arc_length(ref_xyz)
    if est_arc < 1e-12 or ref_arc < 1e-12:
        raise ScaleIndeterminateError("trajectory has no displacement")
    scale = ref_arc / est_arc
    start = est_poses[0]
    ref_start = reference_poses[0]
    yaw = wrap_angle(ref_start.yaw - start.yaw)
    translation = ref_start.position - scale * (rot_z(yaw) @ start.position)
    return SimilarityTransform(scale, yaw, translation)
