"""Binary wire format between UAV runtimes and the GCS.

Framing: 2-byte magic 0xDA 0x7A, 4-byte big-endian length covering the type
byte plus payload, 1 type byte, payload. Payload numerics are little-endian.
See PROTOCOL.md for golden hex vectors.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

MAGIC = b"\xda\x7a"
MAX_FRAME_LEN = 1 << 20  # bound against corrupted length fields
PROTO_VERSION = 1

T_HELLO = 0x01
T_HELLO_ACK = 0x02
T_TELEMETRY = 0x03
T_SCAN_CHUNK = 0x04
T_TASK = 0x05
T_TASK_STATUS = 0x06
T_HEARTBEAT = 0x07
T_EVENT = 0x08

TASK_GOTO = 0
TASK_CARROT_UPDATE = 1
TASK_ARM_DOOR_TRAVERSAL = 2
TASK_ABORT = 3
TASK_SET_GIMBAL = 4
TASK_HOLD = 5

STATUS_ACCEPTED = 0
STATUS_ACTIVE = 1
STATUS_REACHED = 2
STATUS_BLOCKED = 3
STATUS_ABORTED = 4


class EncodeError(ValueError):
    pass


@dataclass(frozen=True)
class Hello:
    uav_id: bytes
    model: int
    proto_version: int = PROTO_VERSION


@dataclass(frozen=True)
class HelloAck:
    session: int
    resumed: bool


@dataclass(frozen=True)
class Telemetry:
    x: float
    y: float
    z: float
    yaw: float
    vx: float
    vy: float
    vz: float
    mode: int
    battery: int
    timestamp: float


@dataclass(frozen=True)
class ScanChunk:
    timestamp: float
    offset: int
    count: int
    distances: tuple
    valid: tuple

    def __post_init__(self):
        object.__setattr__(self, "distances", tuple(self.distances))
        object.__setattr__(self, "valid", tuple(bool(v) for v in self.valid))


@dataclass(frozen=True)
class Task:
    task_id: int
    kind: int
    args: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(float(a) for a in self.args))


@dataclass(frozen=True)
class TaskStatus:
    task_id: int
    state: int


@dataclass(frozen=True)
class Event:
    code: int
    detail: str


@dataclass(frozen=True)
class Heartbeat:
    pass


# number of f32 args carried by each task kind
_TASK_ARGC = {
    TASK_GOTO: 4,
    TASK_CARROT_UPDATE: 4,
    TASK_ARM_DOOR_TRAVERSAL: 0,
    TASK_ABORT: 0,
    TASK_SET_GIMBAL: 2,
    TASK_HOLD: 0,
}


def _check_u(value, bits, name):
    if not (0 <= value < (1 << bits)):
        raise EncodeError(f"{name} out of range for u{bits}: {value}")


def _encode_payload(m) -> tuple[int, bytes]:
    if isinstance(m, Hello):
        if len(m.uav_id) != 16:
            raise EncodeError("uav_id must be 16 bytes")
        _check_u(m.model, 8, "model")
        _check_u(m.proto_version, 16, "proto_version")
        return T_HELLO, m.uav_id + struct.pack("<BH", m.model, m.proto_version)
    if isinstance(m, HelloAck):
        _check_u(m.session, 32, "session")
        return T_HELLO_ACK, struct.pack("<IB", m.session, 1 if m.resumed else 0)
    if isinstance(m, Telemetry):
        _check_u(m.mode, 8, "mode")
        _check_u(m.battery, 8, "battery")
        return T_TELEMETRY, struct.pack(
            "<7f2Bd", m.x, m.y, m.z, m.yaw, m.vx, m.vy, m.vz,
            m.mode, m.battery, m.timestamp)
    if isinstance(m, ScanChunk):
        _check_u(m.offset, 16, "offset")
        _check_u(m.count, 16, "count")
        if len(m.distances) != m.count or len(m.valid) != m.count:
            raise EncodeError("distances/valid length must equal count")
        bits = bytearray((m.count + 7) // 8)
        for i, v in enumerate(m.valid):
            if v:
                bits[i // 8] |= 1 << (i % 8)
        return T_SCAN_CHUNK, (struct.pack("<dHH", m.timestamp, m.offset, m.count)
                              + struct.pack(f"<{m.count}f", *m.distances)
                              + bytes(bits))
    if isinstance(m, Task):
        _check_u(m.task_id, 32, "task_id")
        argc = _TASK_ARGC.get(m.kind)
        if argc is None:
            raise EncodeError(f"unknown task kind {m.kind}")
        if len(m.args) != argc:
            raise EncodeError(f"task kind {m.kind} takes {argc} args")
        return T_TASK, struct.pack("<IB", m.task_id, m.kind) + struct.pack(
            f"<{argc}f", *m.args)
    if isinstance(m, TaskStatus):
        _check_u(m.task_id, 32, "task_id")
        _check_u(m.state, 8, "state")
        return T_TASK_STATUS, struct.pack("<IB", m.task_id, m.state)
    if isinstance(m, Event):
        _check_u(m.code, 8, "code")
        return T_EVENT, bytes([m.code]) + m.detail.encode("utf-8")
    if isinstance(m, Heartbeat):
        return T_HEARTBEAT, b""
    raise EncodeError(f"not a protocol message: {m!r}")


def encode(m) -> bytes:
    mtype, payload = _encode_payload(m)
    return MAGIC + struct.pack(">I", 1 + len(payload)) + bytes([mtype]) + payload


class PayloadError(ValueError):
    pass


def _decode_payload(mtype: int, payload: bytes):
    if mtype == T_HELLO:
        if len(payload) != 19:
            raise PayloadError("bad Hello length")
        model, version = struct.unpack("<BH", payload[16:])
        return Hello(payload[:16], model, version)
    if mtype == T_HELLO_ACK:
        session, resumed = struct.unpack("<IB", payload)
        return HelloAck(session, bool(resumed))
    if mtype == T_TELEMETRY:
        vals = struct.unpack("<7f2Bd", payload)
        return Telemetry(*vals)
    if mtype == T_SCAN_CHUNK:
        ts, offset, count = struct.unpack_from("<dHH", payload, 0)
        need = 12 + 4 * count + (count + 7) // 8
        if len(payload) != need:
            raise PayloadError("bad ScanChunk length")
        distances = struct.unpack_from(f"<{count}f", payload, 12)
        bits = payload[12 + 4 * count:]
        valid = tuple(bool(bits[i // 8] >> (i % 8) & 1) for i in range(count))
        return ScanChunk(ts, offset, count, distances, valid)
    if mtype == T_TASK:
        task_id, kind = struct.unpack_from("<IB", payload, 0)
        argc = _TASK_ARGC.get(kind)
        if argc is None or len(payload) != 5 + 4 * argc:
            raise PayloadError("bad Task payload")
        args = struct.unpack_from(f"<{argc}f", payload, 5)
        return Task(task_id, kind, args)
    if mtype == T_TASK_STATUS:
        task_id, state = struct.unpack("<IB", payload)
        return TaskStatus(task_id, state)
    if mtype == T_EVENT:
        if not payload:
            raise PayloadError("empty Event payload")
        return Event(payload[0], payload[1:].decode("utf-8"))
    if mtype == T_HEARTBEAT:
        if payload:
            raise PayloadError("Heartbeat carries no payload")
        return Heartbeat()
    return None  # unknown type: caller skips the frame


class FrameDecoder:
    """Incremental frame parser tolerant of partial reads and corruption.

    Feed raw bytes; complete messages come back in order. After a bad magic
    or oversized/garbled frame the stream resynchronizes on the next magic.
    """

    def __init__(self):
        self._buf = bytearray()
        self.skipped_frames = 0
        self.resyncs = 0

    def feed(self, data: bytes) -> list:
        self._buf.extend(data)
        out = []
        while True:
            msg = self._next()
            if msg is _NEED_MORE:
                return out
            if msg is not None:
                out.append(msg)

    def _next(self):
        buf = self._buf
        idx = buf.find(MAGIC)
        if idx < 0:
            # keep one byte in case it is the first half of a split magic
            del buf[:max(0, len(buf) - 1)]
            return _NEED_MORE
        if idx > 0:
            self.resyncs += 1
            del buf[:idx]
        if len(buf) < 7:
            return _NEED_MORE
        (length,) = struct.unpack_from(">I", buf, 2)
        if length < 1 or length > MAX_FRAME_LEN:
            self.skipped_frames += 1
            del buf[:2]  # drop this magic, rescan
            return None
        if len(buf) < 6 + length:
            return _NEED_MORE
        mtype = buf[6]
        payload = bytes(buf[7:6 + length])
        try:
            msg = _decode_payload(mtype, payload)
        except (PayloadError, struct.error, UnicodeDecodeError):
            # Likely a fake magic inside garbage: drop it and rescan so any
            # real frame embedded in the supposed payload is still recovered.
            self.skipped_frames += 1
            del buf[:2]
            return None
        del buf[:6 + length]
        if msg is None:
            self.skipped_frames += 1  # unknown type: skip whole frame
            return None
        return msg


_NEED_MORE = object()


def decode_all(data: bytes) -> list:
    return FrameDecoder().feed(data)
