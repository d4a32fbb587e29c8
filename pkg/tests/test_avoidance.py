import math

import numpy as np
import pytest

from fleetsim.avoidance import (
    SphericalRangeImage,
    adjust,
    aggregate,
    brute_force_transform,
    debug_dump,
    distance_transform_l1,
    seed_forces,
)
from fleetsim.sim.world import RangeScan, VelocityCommand


def make_scan(distances, valid=None, t=0.0, max_range=10.0):
    d = np.asarray(distances, dtype=float)
    v = np.ones(360, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    return RangeScan(d, v, max_range, "u0", t)


def free_image():
    return aggregate([make_scan(np.full(360, 10.0))], 0.5, 0.0)


def image_with(dist_by_bin: dict, t=0.0):
    d = np.full(360, 10.0)
    for b, r in dist_by_bin.items():
        d[b] = r
    return aggregate([make_scan(d, t=t)], 0.5, t)


def vcmd(vx, vy=0.0, vz=0.0):
    return VelocityCommand(np.array([vx, vy, vz], dtype=float))


class TestAggregate:
    def test_single_scan_identity(self):
        d = np.full(360, 10.0)
        d[10] = 2.5
        img = aggregate([make_scan(d)], 0.5, 0.0)
        assert img.grid[10, 0] == 2.5
        assert np.isinf(img.grid[11, 0])
        assert (img.grid[10] == 2.5).all()  # replicated rows

    def test_min_fusion(self):
        d1 = np.full(360, 10.0); d1[5] = 2.0
        d2 = np.full(360, 10.0); d2[5] = 1.5
        img = aggregate([make_scan(d1), make_scan(d2)], 0.5, 0.0)
        assert img.grid[5, 2] == 1.5

    def test_old_scan_ignored(self):
        d = np.full(360, 10.0); d[5] = 2.0
        img = aggregate([make_scan(d, t=0.0)], 0.5, now=1.0)
        assert np.isinf(img.grid[5, 0])

    def test_invalid_bins_free(self):
        d = np.full(360, 2.0)
        v = np.zeros(360, dtype=bool)
        img = aggregate([make_scan(d, v)], 0.5, 0.0)
        assert np.isinf(img.grid).all()

    def test_floor_respected(self):
        d = np.full(360, 10.0); d[0] = 0.5
        img = aggregate([make_scan(d)], 0.5, 0.0)
        assert img.grid[np.isfinite(img.grid)].min() >= 0.5


class TestSeedForces:
    def test_equal_distance_gives_quarter_pi(self):
        img = image_with({0: 0.5})
        f = seed_forces(img, 0.5)
        assert f[0, 0] == pytest.approx(math.pi / 4)

    def test_free_pixel_zero(self):
        f = seed_forces(free_image(), 1.2)
        assert (f == 0.0).all()

    def test_tan_sixty_identity(self):
        # below the sensor floor, so build the grid directly
        grid = np.full((360, 5), np.inf)
        grid[0, :] = 0.5 / math.sqrt(3)
        img = SphericalRangeImage(grid, 0.5, 0.0)
        f = seed_forces(img, 0.5)
        assert f[0, 0] == pytest.approx(math.pi / 3)


class TestDistanceTransform:
    def test_all_zero(self):
        p = distance_transform_l1(np.zeros((32, 5)), 0.1)
        assert (p.values == 0.0).all()

    def test_single_seed_with_wrap(self):
        f = np.zeros((360, 1))
        f[10, 0] = math.pi / 4
        p = distance_transform_l1(f, 0.1)
        assert p.values[13, 0] == pytest.approx(math.pi / 4 - 0.3)
        assert p.values[7, 0] == pytest.approx(math.pi / 4 - 0.3)
        # wrap distance: bin 350 is 20 bins away, force fully decayed
        assert p.values[350, 0] == max(0.0, math.pi / 4 - 2.0)

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n_az = int(rng.integers(4, 33))
            n_el = int(rng.integers(1, 9))
            f = rng.uniform(0, math.pi / 2, size=(n_az, n_el))
            f[rng.uniform(size=f.shape) < 0.5] = 0.0
            decay = float(rng.uniform(0.02, 0.3))
            fast = distance_transform_l1(f, decay).values
            brute = brute_force_transform(f, decay)
            np.testing.assert_array_equal(fast, brute)

    def test_wrap_dominates_long_way_around(self):
        f = np.zeros((16, 2))
        f[15, 0] = 1.0
        p = distance_transform_l1(f, 0.05).values
        assert p[0, 0] == pytest.approx(1.0 - 0.05)  # one bin across the seam


class TestAdjust:
    def test_empty_image_passthrough(self):
        out = adjust(vcmd(0.5), free_image())
        np.testing.assert_array_equal(out.velocity, [0.5, 0.0, 0.0])
        assert not out.stop

    def test_zero_command_passthrough(self):
        out = adjust(vcmd(0.0), image_with({0: 1.0}))
        np.testing.assert_array_equal(out.velocity, np.zeros(3))
        assert not out.stop

    def test_obstacle_ahead_deviates(self):
        # wall patch dead ahead at 1 m, free at the sides
        bins = {b % 360: 1.0 for b in range(-15, 16)}
        img = image_with(bins)
        out = adjust(vcmd(0.5), img, d_safe=1.5, d_min=0.5)
        assert not out.stop
        speed = np.linalg.norm(out.velocity)
        assert speed <= 0.5 + 1e-12
        az = math.degrees(math.atan2(out.velocity[1], out.velocity[0])) % 360
        deviation = min(az, 360 - az)
        assert deviation > 15  # steered off the blocked sector
        assert deviation <= 90  # but stayed within the fov

    def test_selected_pixel_is_zero_force(self):
        bins = {b % 360: 1.0 for b in range(-15, 16)}
        img = image_with(bins)
        p_s = distance_transform_l1(seed_forces(img, 1.5), 0.05).values
        out = adjust(vcmd(0.5), img, d_safe=1.5, d_min=0.5)
        az = int(round(math.degrees(math.atan2(out.velocity[1], out.velocity[0])))) % 360
        assert p_s[az, img.elevation_bins // 2] == 0.0

    def test_fully_enclosed_stops(self):
        img = aggregate([make_scan(np.full(360, 0.5))], 0.5, 0.0)
        out = adjust(vcmd(0.4), img, d_safe=1.2, d_min=0.5)
        assert out.stop
        np.testing.assert_array_equal(out.velocity, np.zeros(3))

    def test_magnitude_law(self):
        # distance beyond d_safe in the free direction: full speed retained
        img = image_with({180: 1.0})
        out = adjust(vcmd(0.5), img, d_safe=1.2, d_min=0.5)
        assert np.linalg.norm(out.velocity) == pytest.approx(0.5)

    def test_magnitude_scales_down_close(self):
        bins = dict.fromkeys(range(360), 0.8)  # everything at 0.8 m
        img = aggregate([make_scan(np.array([bins[i] for i in range(360)]))], 0.5, 0.0)
        out = adjust(vcmd(0.5), img, d_safe=1.2, d_min=0.5)
        if not out.stop:
            expected = 0.5 * (0.8 - 0.5) / (1.2 - 0.5)
            assert np.linalg.norm(out.velocity) <= expected + 1e-9

    def test_azimuth_equivariance(self):
        rng = np.random.default_rng(3)
        d = np.full(360, 10.0)
        for b in rng.integers(0, 360, size=40):
            d[b] = rng.uniform(0.6, 3.0)
        img = aggregate([make_scan(d)], 0.5, 0.0)
        out = adjust(vcmd(0.5), img, d_safe=1.2, d_min=0.5)
        k = 90
        img_rot = aggregate([make_scan(np.roll(d, k))], 0.5, 0.0)
        out_rot = adjust(vcmd(0.0, 0.5), img_rot, d_safe=1.2, d_min=0.5)
        az = math.degrees(math.atan2(out.velocity[1], out.velocity[0])) % 360
        az_rot = math.degrees(math.atan2(out_rot.velocity[1], out_rot.velocity[0])) % 360
        assert az_rot == pytest.approx((az + k) % 360, abs=1e-6)
        assert np.linalg.norm(out_rot.velocity) == pytest.approx(
            np.linalg.norm(out.velocity), abs=1e-9)

    def test_output_within_fov_or_stop(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            d = np.full(360, 10.0)
            for b in rng.integers(0, 360, size=int(rng.integers(10, 200))):
                d[b] = rng.uniform(0.5, 2.0)
            img = aggregate([make_scan(d)], 0.5, 0.0)
            angle = rng.uniform(0, 2 * math.pi)
            out = adjust(VelocityCommand(
                0.5 * np.array([math.cos(angle), math.sin(angle), 0.0])), img)
            if out.stop:
                continue
            az = math.degrees(math.atan2(out.velocity[1], out.velocity[0])) % 360
            cmd_az = math.degrees(angle) % 360
            dev = abs(az - cmd_az) % 360
            dev = min(dev, 360 - dev)
            assert dev <= 90.0 + 0.5


class TestDebugDump:
    def test_layout(self):
        img = image_with({0: 1.0})
        field = distance_transform_l1(seed_forces(img, 1.2), 0.05)
        dump = debug_dump(field, chosen=(10, 2))
        assert dump["azimuth_bins"] == 360
        assert dump["elevation_bins"] == 5
        assert len(dump["values"]) == 360 * 5
        assert dump["chosen"] == [10, 2]
