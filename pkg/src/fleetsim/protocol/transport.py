"""In-process loopback transport with injected latency.

Byte-stream semantics (reliable, ordered) driven by an explicit simulated
clock so latency behaviour is deterministic and testable.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

DEFAULT_RTT = 0.0045  # seconds


class LoopbackLink:
    """A bidirectional byte pipe between two endpoints, 'a' and 'b'.

    Bytes written at one end become readable at the other once the simulated
    clock has advanced by half the round-trip time.
    """

    def __init__(self, rtt: float = DEFAULT_RTT):
        self.one_way = rtt / 2.0
        self._in_flight = {"a": [], "b": []}  # destination -> heap of (due, seq, bytes)
        self._ready = {"a": bytearray(), "b": bytearray()}
        self._seq = 0
        self.connected = True

    def send(self, src: str, data: bytes, now: float):
        if not self.connected:
            return
        dst = "b" if src == "a" else "a"
        heapq.heappush(self._in_flight[dst], (now + self.one_way, self._seq, bytes(data)))
        self._seq += 1

    def recv(self, dst: str, now: float) -> bytes:
        heap = self._in_flight[dst]
        buf = self._ready[dst]
        while heap and heap[0][0] <= now:
            buf.extend(heapq.heappop(heap)[2])
        out = bytes(buf)
        buf.clear()
        return out

    def drop(self):
        """Sever the link; in-flight and future bytes are lost."""
        self.connected = False
        for side in ("a", "b"):
            self._in_flight[side].clear()
            self._ready[side].clear()
