"""Binary wire framing for bridged topic messages.

Frame layout, all multi-byte integers little-endian:

    offset  size  field
    0       4     magic "SERN"
    4       1     version (= 1)
    5       1     tier (0 critical, 1 standard, 2 bulk)
    6       1     flags (bit 0 = replay)
    7       8     seq, per (topic, direction)
    15      8     sim_time_us
    23      2     topic_len
    25      n     topic (UTF-8)
    25+n    1     kind
    26+n    4     payload_len
    30+n    m     payload
    30+n+m  4     crc32 over all preceding bytes

An empty-payload frame with topic "/a" is exactly 36 bytes.

Decode validates, in order: buffer length, magic, declared frame length, CRC,
then version. CRC is checked before version so that any single corrupted byte
in an otherwise valid frame surfaces as BadMagic, Truncated, or CrcMismatch;
BadVersion is reserved for well-formed frames from a different protocol
revision.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, replace

MAGIC = b"SERN"
VERSION = 1

TIER_CRITICAL = 0
TIER_STANDARD = 1
TIER_BULK = 2
TIERS = (TIER_CRITICAL, TIER_STANDARD, TIER_BULK)
TIER_NAMES = {TIER_CRITICAL: "critical", TIER_STANDARD: "standard", TIER_BULK: "bulk"}
TIER_BY_NAME = {v: k for k, v in TIER_NAMES.items()}

FLAG_REPLAY = 0x01

MAX_PAYLOAD = 16 * 1024 * 1024

_HEAD = struct.Struct("<4sBBBQQH")   # magic, version, tier, flags, seq, sim_time_us, topic_len
_MID = struct.Struct("<BI")          # kind, payload_len
_CRC = struct.Struct("<I")
MIN_FRAME = _HEAD.size + _MID.size + _CRC.size  # 34 bytes, zero-length topic and payload


class FrameError(ValueError):
    """Base class for malformed-frame errors."""


class BadMagic(FrameError):
    pass


class BadVersion(FrameError):
    pass


class CrcMismatch(FrameError):
    pass


class Truncated(FrameError):
    pass


class PayloadTooLarge(FrameError):
    pass


@dataclass(frozen=True)
class Envelope:
    """One decoded wire frame."""

    tier: int
    flags: int
    seq: int
    sim_time_us: int
    topic: str
    kind: int
    payload: bytes

    @property
    def is_replay(self) -> bool:
        return bool(self.flags & FLAG_REPLAY)

    @property
    def sim_time(self) -> float:
        return self.sim_time_us / 1e6


def encode_envelope(env: Envelope) -> bytes:
    """Serialize one envelope to its bit-exact frame."""
    if len(env.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(env.payload)} bytes exceeds 16 MiB")
    topic_bytes = env.topic.encode("utf-8")
    if len(topic_bytes) > 0xFFFF:
        raise ValueError("topic longer than 65535 bytes")
    if env.tier not in TIERS:
        raise ValueError(f"tier must be one of {TIERS}")
    body = bytearray()
    body += _HEAD.pack(
        MAGIC, VERSION, env.tier, env.flags & 0xFF, env.seq, env.sim_time_us, len(topic_bytes)
    )
    body += topic_bytes
    body += _MID.pack(env.kind & 0xFF, len(env.payload))
    body += env.payload
    body += _CRC.pack(zlib.crc32(bytes(body)))
    return bytes(body)


def encode_message(
    topic: str,
    payload: bytes,
    kind: int,
    tier: int,
    seq: int,
    sim_time: float,
    flags: int = 0,
) -> bytes:
    """Frame a topic message for transmission."""
    env = Envelope(tier, flags, seq, int(round(sim_time * 1e6)), topic, int(kind), payload)
    return encode_envelope(env)


def encode_bus_message(msg, tier: int, seq: int, flags: int = 0) -> bytes:
    """Frame a bus message (anything with topic/payload/kind/publish_time)."""
    return encode_message(
        msg.topic, msg.payload, int(msg.kind), tier, seq, msg.publish_time, flags
    )


def frame_size(topic: str, payload_len: int) -> int:
    return MIN_FRAME + len(topic.encode("utf-8")) + payload_len


def _parse_one(buf: bytes, offset: int) -> tuple[Envelope, int]:
    """Parse one frame starting at offset; returns (envelope, next offset)."""
    remaining = len(buf) - offset
    if remaining < MIN_FRAME:
        raise Truncated(f"{remaining} bytes < minimum frame of {MIN_FRAME}")
    magic, version, tier, flags, seq, sim_time_us, topic_len = _HEAD.unpack_from(buf, offset)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    mid_at = offset + _HEAD.size + topic_len
    if mid_at + _MID.size + _CRC.size > len(buf):
        raise Truncated("frame ends inside topic or fixed fields")
    kind, payload_len = _MID.unpack_from(buf, mid_at)
    end = mid_at + _MID.size + payload_len + _CRC.size
    if end > len(buf):
        raise Truncated("frame ends inside payload or checksum")
    crc_at = end - _CRC.size
    (stated_crc,) = _CRC.unpack_from(buf, crc_at)
    actual_crc = zlib.crc32(buf[offset:crc_at])
    if stated_crc != actual_crc:
        raise CrcMismatch(f"crc {stated_crc:#010x} != computed {actual_crc:#010x}")
    if version != VERSION:
        raise BadVersion(f"version {version}, expected {VERSION}")
    topic = buf[offset + _HEAD.size : mid_at].decode("utf-8")
    payload = buf[mid_at + _MID.size : crc_at]
    env = Envelope(tier, flags, seq, sim_time_us, topic, kind, payload)
    return env, end


def decode_envelope(buf: bytes) -> Envelope:
    """Decode exactly one frame; the buffer must contain nothing else."""
    env, end = _parse_one(buf, 0)
    if end != len(buf):
        raise Truncated(f"frame length {end} != buffer length {len(buf)}")
    return env


def decode_stream(buf: bytes) -> list[Envelope]:
    """Decode a batch of back-to-back frames, consuming the whole buffer."""
    out: list[Envelope] = []
    offset = 0
    while offset < len(buf):
        env, offset = _parse_one(buf, offset)
        out.append(env)
    return out


def with_replay_flag(env: Envelope) -> Envelope:
    return replace(env, flags=env.flags | FLAG_REPLAY)
