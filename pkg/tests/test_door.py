"""Door detection and traversal state machine tests.

The canonical synthetic scene is a constant-radius wall arc at 2 m with an
angular gap; the chord-width oracle for a +/-15 degree gap is 2*2*sin(15deg).
"""

import math

import numpy as np
import pytest

from fleetsim.door import (DetectionConfig, PHASE_ABORTED, PHASE_APPROACHING,
                           PHASE_DONE, PHASE_FROZEN, TraversalConfig,
                           TraversalState, detect_doors, pre_traversal_pose,
                           select_door, traversal_tick)
from fleetsim.geometry import Pose, wrap_angle
from fleetsim.sim.world import RangeScan, Wall, World


def arc_gap_scan(gap_half_deg=15, wall_r=2.0, far_r=6.0, max_range=10.0):
    """Wall arc at wall_r across the forward sector with a gap around 0 deg;
    rays through the gap hit a far wall at far_r."""
    dist = np.full(360, max_range)
    for off in range(-60, 61):
        b = off % 360
        if abs(off) < gap_half_deg:
            dist[b] = far_r
        else:
            dist[b] = wall_r
    return RangeScan(dist, np.ones(360, dtype=bool), max_range, "", 0.0)


def world_scan(walls, pose, max_range=10.0):
    w = World(walls=walls, max_range=max_range)
    w.add_uav("u", pose)
    d = w.truth_ranges("u")
    return RangeScan(d, np.ones(360, dtype=bool), max_range, "", 0.0)


class TestDetection:
    def test_chord_width_oracle(self):
        doors = detect_doors(arc_gap_scan(), 0.0)
        assert len(doors) == 1
        expected = 2 * 2.0 * math.sin(math.radians(15))
        assert doors[0].width == pytest.approx(expected, abs=1e-9)

    def test_edges_at_near_side(self):
        d = detect_doors(arc_gap_scan(), 0.0)[0]
        assert np.linalg.norm(d.left_edge) == pytest.approx(2.0, abs=1e-9)
        assert np.linalg.norm(d.right_edge) == pytest.approx(2.0, abs=1e-9)

    def test_outward_normal_faces_observer(self):
        d = detect_doors(arc_gap_scan(), 0.0)[0]
        assert d.outward_normal @ d.midpoint < 0
        np.testing.assert_allclose(d.outward_normal, [-1.0, 0.0], atol=1e-9)
        assert d.normal_radial_deviation == pytest.approx(0.0, abs=1e-9)

    def test_clearance_behind_oracle(self):
        d = detect_doors(arc_gap_scan(), 0.0)[0]
        # interior rays hit the far wall at 6; the door line sits at
        # x = 2*cos(15deg), crossed at 2*cos(15deg)/cos(a) along ray a
        depth = 2.0 * math.cos(math.radians(15))
        expected = min(6.0 - depth / math.cos(math.radians(a))
                       for a in range(-14, 15))
        assert d.clearance_behind == pytest.approx(expected, abs=1e-9)

    def test_narrow_gap_rejected(self):
        assert detect_doors(arc_gap_scan(gap_half_deg=5), 0.0) == []

    def test_shallow_space_behind_rejected(self):
        assert detect_doors(arc_gap_scan(far_r=2.5), 0.0) == []

    def test_small_jump_not_a_door(self):
        assert detect_doors(arc_gap_scan(far_r=2.6), 0.0) == []

    def test_outside_search_sector_ignored(self):
        # gap centered at +90 deg is outside a +/-60 deg sector at heading 0
        dist = np.full(360, 10.0)
        for off in range(30, 151):
            dist[off] = 6.0 if 75 < off < 105 else 2.0
        scan = RangeScan(dist, np.ones(360, dtype=bool), 10.0, "", 0.0)
        assert detect_doors(scan, 0.0) == []
        assert len(detect_doors(scan, math.radians(90))) == 1

    def test_oblique_wall_rejected_by_normal_deviation(self):
        def tilted_walls(t):
            u = np.array([math.sin(t), math.cos(t)])
            mid = np.array([2.0, 0.0])
            return [Wall(mid + 0.6 * u, mid + 4.0 * u, 3.0),
                    Wall(mid - 0.6 * u, mid - 4.0 * u, 3.0)]

        pose = Pose(np.zeros(3), 0.0)
        assert len(detect_doors(world_scan(tilted_walls(0.0), pose), 0.0)) == 1
        assert detect_doors(world_scan(tilted_walls(math.radians(40)), pose),
                            0.0) == []

    def test_world_doorway_width_near_truth(self):
        walls = [Wall(np.array([2.0, 0.625]), np.array([2.0, 4.0]), 3.0),
                 Wall(np.array([2.0, -0.625]), np.array([2.0, -4.0]), 3.0)]
        scan = world_scan(walls, Pose(np.zeros(3), 0.0))
        d = select_door(detect_doors(scan, 0.0), 0.0)
        assert d is not None
        assert abs(d.width - 1.25) < 0.2

    def test_sorted_by_heading_alignment(self):
        # two gaps in one wall arc; the one closer to the heading comes first
        dist = np.full(360, 10.0)
        for off in range(-60, 61):
            b = off % 360
            dist[b] = 2.0
            if abs(off) < 12 or abs(off - 40) < 12:
                dist[b] = 6.0
        scan = RangeScan(dist, np.ones(360, dtype=bool), 10.0, "", 0.0)
        doors = detect_doors(scan, 0.0)
        assert len(doors) == 2
        devs = [abs(wrap_angle(c.inward_angle)) for c in doors]
        assert devs == sorted(devs)
        assert select_door(doors, 0.0) is doors[0]

    def test_invalid_bins_break_pairing(self):
        scan = arc_gap_scan()
        mask = np.ones(360, dtype=bool)
        mask[345] = False  # kill the rising-jump pair
        scan = RangeScan(scan.distances, mask, 10.0, "", 0.0)
        assert detect_doors(scan, 0.0) == []


class TestPreTraversalPose:
    def test_standoff_along_outward_normal(self):
        d = detect_doors(arc_gap_scan(), 0.0)[0]
        pose = pre_traversal_pose(d, 1.0, height=1.5)
        np.testing.assert_allclose(
            pose.position[:2], d.midpoint + d.outward_normal, atol=1e-12)
        assert pose.position[2] == 1.5
        assert wrap_angle(pose.yaw - d.inward_angle) == pytest.approx(0.0)

    def test_rejects_nonpositive_standoff(self):
        d = detect_doors(arc_gap_scan(), 0.0)[0]
        with pytest.raises(ValueError):
            pre_traversal_pose(d, 0.0)


class TestTraversal:
    cfg = TraversalConfig()

    def run_approach_to_freeze(self):
        """Drive the state machine with the UAV teleported to each target."""
        ts = TraversalState()
        est = Pose(np.array([-2.0, 0.3, 1.0]), 0.0)
        scan = arc_gap_scan()
        targets = []
        for i in range(200):
            target, bypass, ts = traversal_tick(ts, scan, est, 0.1 * i,
                                                self.cfg)
            if ts.phase != PHASE_APPROACHING:
                return est, ts, targets
            assert not bypass
            if target is not None:
                assert np.linalg.norm(target.position - est.position) \
                    <= self.cfg.step_size + 1e-9
                est = target
                targets.append(target)
        raise AssertionError("never froze")

    def test_steps_bounded_and_freezes(self):
        est, ts, _ = self.run_approach_to_freeze()
        assert ts.phase == PHASE_FROZEN
        assert ts.post_pose is not None
        assert ts.stable_count >= self.cfg.stability_count

    def test_frozen_targets_collinear_with_normal(self):
        est, ts, _ = self.run_approach_to_freeze()
        door = ts.door_global
        mid3 = np.array([door.midpoint[0], door.midpoint[1],
                         ts.post_pose.position[2]])
        inward3 = np.array([*door.inward_normal, 0.0])
        seen = []
        for i in range(100):
            target, bypass, ts = traversal_tick(ts, None, est, 100 + 0.1 * i,
                                                self.cfg)
            if ts.phase == PHASE_DONE:
                break
            assert bypass
            off = target.position - mid3
            lateral = off - (off @ inward3) * inward3
            assert np.linalg.norm(lateral) < 1e-6
            seen.append(target)
            est = Pose(target.position, target.yaw)
        assert ts.phase == PHASE_DONE
        assert len(seen) >= 2

    def test_frozen_door_never_updates(self):
        est, ts, _ = self.run_approach_to_freeze()
        door_before = ts.door_global
        shifted = arc_gap_scan(wall_r=3.0)  # a contradictory new scan
        _, _, ts2 = traversal_tick(ts, shifted, est, 200.0, self.cfg)
        assert ts2.door_global is door_before

    def test_lost_detection_aborts_after_timeout(self):
        ts = TraversalState()
        est = Pose(np.array([-2.0, 0.0, 1.0]), 0.0)
        empty = RangeScan(np.full(360, 10.0), np.ones(360, dtype=bool),
                          10.0, "", 0.0)
        _, _, ts = traversal_tick(ts, arc_gap_scan(), est, 0.0, self.cfg)
        for i in range(40):
            t = 0.1 * (i + 1)
            _, _, ts = traversal_tick(ts, empty, est, t, self.cfg)
            if ts.phase == PHASE_ABORTED:
                break
        assert ts.phase == PHASE_ABORTED
        assert t > self.cfg.lost_timeout

    def test_brief_dropout_does_not_abort(self):
        ts = TraversalState()
        est = Pose(np.array([-2.0, 0.0, 1.0]), 0.0)
        empty = RangeScan(np.full(360, 10.0), np.ones(360, dtype=bool),
                          10.0, "", 0.0)
        _, _, ts = traversal_tick(ts, arc_gap_scan(), est, 0.0, self.cfg)
        for i in range(10):
            _, _, ts = traversal_tick(ts, empty, est, 0.1 * (i + 1), self.cfg)
        assert ts.phase == PHASE_APPROACHING
        _, _, ts = traversal_tick(ts, arc_gap_scan(), est, 1.2, self.cfg)
        assert ts.last_detection_time == 1.2

    def test_width_samples_accumulate(self):
        _, ts, _ = self.run_approach_to_freeze()
        assert len(ts.width_samples) >= self.cfg.stability_count
        expected = 2 * 2.0 * math.sin(math.radians(15))
        assert np.allclose(ts.width_samples, expected)

    def test_done_state_is_terminal(self):
        ts = TraversalState(phase=PHASE_DONE)
        target, bypass, ts2 = traversal_tick(
            ts, arc_gap_scan(), Pose(np.zeros(3), 0.0), 0.0, self.cfg)
        assert target is None and not bypass and ts2.phase == PHASE_DONE
