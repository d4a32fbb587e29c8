"""Seeded random protocol message generator shared by the protocol tests."""

import numpy as np

from fleetsim.protocol import wire


def rand_f32(rng, lo=-1000.0, hi=1000.0):
    # route through f32 so round-trip comparisons are exact
    return float(np.float32(rng.uniform(lo, hi)))


def random_message(rng, kind):
    if kind is wire.Hello:
        return wire.Hello(rng.bytes(16), int(rng.integers(0, 256)),
                          int(rng.integers(0, 1 << 16)))
    if kind is wire.HelloAck:
        return wire.HelloAck(int(rng.integers(0, 1 << 32)), bool(rng.integers(0, 2)))
    if kind is wire.Telemetry:
        return wire.Telemetry(*(rand_f32(rng) for _ in range(7)),
                              int(rng.integers(0, 256)), int(rng.integers(0, 101)),
                              float(rng.uniform(0, 1e6)))
    if kind is wire.ScanChunk:
        count = int(rng.integers(0, 91))
        return wire.ScanChunk(float(rng.uniform(0, 1e6)),
                              int(rng.integers(0, 360)), count,
                              tuple(rand_f32(rng, 0.5, 30.0) for _ in range(count)),
                              tuple(bool(b) for b in rng.integers(0, 2, size=count)))
    if kind is wire.Task:
        k = int(rng.choice(sorted(wire._TASK_ARGC)))
        argc = wire._TASK_ARGC[k]
        return wire.Task(int(rng.integers(0, 1 << 32)), k,
                         tuple(rand_f32(rng, -50, 50) for _ in range(argc)))
    if kind is wire.TaskStatus:
        return wire.TaskStatus(int(rng.integers(0, 1 << 32)), int(rng.integers(0, 5)))
    if kind is wire.Event:
        n = int(rng.integers(0, 40))
        detail = "".join(chr(c) for c in rng.integers(32, 0x2FFF, size=n))
        return wire.Event(int(rng.integers(0, 256)), detail)
    if kind is wire.Heartbeat:
        return wire.Heartbeat()
    raise AssertionError(kind)


ALL_KINDS = (wire.Hello, wire.HelloAck, wire.Telemetry, wire.ScanChunk,
             wire.Task, wire.TaskStatus, wire.Event, wire.Heartbeat)
