"""Wire-format framing: layout, roundtrips, corruption rejection."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twinbridge.envelope import (
    MIN_FRAME,
    BadMagic,
    BadVersion,
    CrcMismatch,
    Envelope,
    FrameError,
    PayloadTooLarge,
    Truncated,
    decode_envelope,
    decode_stream,
    encode_envelope,
    encode_message,
    frame_size,
    with_replay_flag,
)


def make_env(topic="/a", payload=b"", tier=0, flags=0, seq=0, sim_time_us=0, kind=0):
    return Envelope(tier, flags, seq, sim_time_us, topic, kind, payload)


class TestLayout:
    def test_empty_payload_topic_a_is_36_bytes(self):
        # independent byte count: 4+1+1+1+8+8+2 + len("/a") + 1+4 + 0 + 4
        expected = 4 + 1 + 1 + 1 + 8 + 8 + 2 + len(b"/a") + 1 + 4 + 0 + 4
        frame = encode_envelope(make_env())
        assert expected == 36
        assert len(frame) == 36
        assert frame_size("/a", 0) == 36

    def test_magic_and_version_bytes(self):
        frame = encode_envelope(make_env())
        assert frame[:4] == b"SERN"
        assert frame[4] == 1

    def test_little_endian_seq(self):
        frame = encode_envelope(make_env(seq=0x0102030405060708))
        assert frame[7:15] == bytes([8, 7, 6, 5, 4, 3, 2, 1])

    def test_min_frame_constant(self):
        assert MIN_FRAME == 34


class TestRoundtrip:
    def test_identity(self):
        env = make_env("/robot1/odom", b"payload-bytes", tier=2, flags=1, seq=77,
                       sim_time_us=123456, kind=3)
        assert decode_envelope(encode_envelope(env)) == env

    def test_encode_message_stamps_microseconds(self):
        frame = encode_message("/t", b"x", kind=1, tier=0, seq=5, sim_time=1.5)
        env = decode_envelope(frame)
        assert env.sim_time_us == 1_500_000
        assert env.sim_time == pytest.approx(1.5)

    def test_encode_bus_message(self):
        from twinbridge.envelope import encode_bus_message
        from twinbridge.msgbus import Message, MessageKind

        msg = Message("/odom", b"state", 2.25, MessageKind.POSE)
        env = decode_envelope(encode_bus_message(msg, tier=1, seq=9))
        assert env.topic == "/odom"
        assert env.payload == b"state"
        assert env.kind == int(MessageKind.POSE)
        assert env.seq == 9
        assert env.sim_time == pytest.approx(2.25)

    def test_replay_flag(self):
        env = with_replay_flag(make_env())
        assert env.is_replay
        assert decode_envelope(encode_envelope(env)).is_replay


class TestErrors:
    def test_payload_too_large(self):
        with pytest.raises(PayloadTooLarge):
            encode_envelope(make_env(payload=b"x" * (16 * 1024 * 1024 + 1)))

    def test_truncated_mid_payload(self):
        frame = encode_envelope(make_env(payload=b"abcdef"))
        with pytest.raises(Truncated):
            decode_envelope(frame[:-8])

    def test_trailing_garbage_rejected(self):
        frame = encode_envelope(make_env())
        with pytest.raises(Truncated):
            decode_envelope(frame + b"\x00")

    def test_bad_magic(self):
        frame = bytearray(encode_envelope(make_env()))
        frame[0] = ord("X")
        with pytest.raises(BadMagic):
            decode_envelope(bytes(frame))

    def test_bad_version_with_valid_crc(self):
        # hand-build a version-2 frame with a correct checksum
        frame = bytearray(encode_envelope(make_env()))
        frame[4] = 2
        body = bytes(frame[:-4])
        import zlib

        frame[-4:] = struct.pack("<I", zlib.crc32(body))
        with pytest.raises(BadVersion):
            decode_envelope(bytes(frame))

    def test_version_flip_without_recrc_is_crc_mismatch(self):
        frame = bytearray(encode_envelope(make_env()))
        frame[4] = 2
        with pytest.raises(CrcMismatch):
            decode_envelope(bytes(frame))

    def test_any_single_byte_flip_rejected(self):
        frame = encode_envelope(make_env("/topic/x", b"some payload", tier=1, seq=9))
        for i in range(len(frame)):
            corrupted = bytearray(frame)
            corrupted[i] ^= 0xFF
            with pytest.raises((BadMagic, Truncated, CrcMismatch)):
                decode_envelope(bytes(corrupted))


class TestStream:
    def test_batch_roundtrip(self):
        envs = [make_env(f"/t{i}", bytes([i]) * i, seq=i) for i in range(5)]
        buf = b"".join(encode_envelope(e) for e in envs)
        assert decode_stream(buf) == envs

    def test_stream_truncation(self):
        buf = encode_envelope(make_env()) + encode_envelope(make_env())[:-1]
        with pytest.raises(Truncated):
            decode_stream(buf)


topics = st.text(
    alphabet=st.characters(min_codepoint=33, max_codepoint=126, exclude_characters="/"),
    min_size=1,
    max_size=24,
).map(lambda s: "/" + s)


@given(
    topic=topics,
    payload=st.binary(max_size=512),
    tier=st.integers(0, 2),
    flags=st.integers(0, 255),
    seq=st.integers(0, 2**64 - 1),
    sim_time_us=st.integers(0, 2**64 - 1),
    kind=st.integers(0, 255),
)
@settings(max_examples=300, deadline=None)
def test_roundtrip_property(topic, payload, tier, flags, seq, sim_time_us, kind):
    env = Envelope(tier, flags, seq, sim_time_us, topic, kind, payload)
    assert decode_envelope(encode_envelope(env)) == env


def test_frame_error_is_value_error():
    assert issubclass(FrameError, ValueError)
