"""Scenario files: JSON world descriptions loaded into a World."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..geometry import Pose
from .world import Cylinder, Latencies, Wall, World


class ScenarioError(ValueError):
    pass


def build_world(doc: dict, seed_override: int | None = None) -> World:
    try:
        walls = [Wall(np.array([w["x1"], w["y1"]], dtype=float),
                      np.array([w["x2"], w["y2"]], dtype=float),
                      float(w["height"]))
                 for w in doc.get("walls", [])]
        cylinders = [Cylinder(np.array([c["x"], c["y"]], dtype=float),
                              float(c["r"]), float(c["height"]))
                     for c in doc.get("cylinders", [])]
        lat = doc.get("latencies", {})
        latencies = Latencies(
            actuation_s=float(lat.get("actuation_s", 0.496)),
            telemetry_s=float(lat.get("telemetry_s", 0.344)),
            rtt_s=float(lat.get("rtt_s", 0.0045)))
        seed = int(doc.get("seed", 0)) if seed_override is None else seed_override
        world = World(walls=walls, cylinders=cylinders, latencies=latencies,
                      seed=seed, max_range=float(doc.get("max_range", 10.0)))
        for i, u in enumerate(doc.get("uavs", [])):
            start = u["start"]
            world.add_uav(
                u.get("id", f"uav{i}"), u["model"],
                Pose(np.array([start["x"], start["y"], start["z"]], dtype=float),
                     float(start.get("yaw", 0.0))),
                gnss_available=bool(u.get("gnss", False)))
        return world
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def load_scenario(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario root must be a JSON object")
    return doc


def world_from_file(path, seed_override: int | None = None) -> World:
    return build_world(load_scenario(path), seed_override)
