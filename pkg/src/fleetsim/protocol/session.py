"""Session layer: registration, reconnect recognition, telemetry ordering."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from . import wire

EVT_VERSION_REJECTED = 1
EVT_SESSION_REPLACED = 2


@dataclass
class SessionRecord:
    session_id: int
    uav_id: bytes
    model: int
    live: bool = True
    last_telemetry_ts: float = float("-inf")


class SessionTable:
    """Single synchronized authority over live sessions and fleet identity.

    Fleet-level state survives reconnects keyed by uav_id; each connection
    gets a fresh, strictly increasing session id.
    """

    def __init__(self, proto_version: int = wire.PROTO_VERSION):
        self._lock = threading.Lock()
        self._next_session = 1
        self._by_uav: dict[bytes, SessionRecord] = {}
        self.proto_version = proto_version

    def register(self, hello: wire.Hello):
        """Returns (reply_message, notices). The reply is a HelloAck on
        success or an Event on version mismatch."""
        notices = []
        if hello.proto_version != self.proto_version:
            return wire.Event(EVT_VERSION_REJECTED,
                              f"unsupported protocol version {hello.proto_version}"), notices
        with self._lock:
            prior = self._by_uav.get(hello.uav_id)
            resumed = prior is not None
            if prior is not None and prior.live:
                prior.live = False
                notices.append(wire.Event(
                    EVT_SESSION_REPLACED,
                    f"session {prior.session_id} replaced by newer connection"))
            record = SessionRecord(self._next_session, hello.uav_id, hello.model)
            if prior is not None:
                record.last_telemetry_ts = prior.last_telemetry_ts
            self._next_session += 1
            self._by_uav[hello.uav_id] = record
            return wire.HelloAck(record.session_id, resumed), notices

    def disconnect(self, uav_id: bytes):
        with self._lock:
            rec = self._by_uav.get(uav_id)
            if rec is not None:
                rec.live = False

    def record(self, uav_id: bytes) -> SessionRecord | None:
        with self._lock:
            return self._by_uav.get(uav_id)

    def accept_telemetry(self, uav_id: bytes, t: wire.Telemetry) -> bool:
        """Drop-stale rule: per UAV, delivered timestamps are non-decreasing."""
        with self._lock:
            rec = self._by_uav.get(uav_id)
            if rec is None or t.timestamp < rec.last_telemetry_ts:
                return False
            rec.last_telemetry_ts = t.timestamp
            return True
