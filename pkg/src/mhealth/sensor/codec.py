"""Fixed-length binary frame carrying one vitals reading.

Layout (23 bytes, little-endian)::

    0      sync 0x7E
    1      message type (0x01 = vitals)
    2..9   timestamp_ms      u64
    10..11 spo2_pct  x10     u16
    12..13 hr_bpm    x10     u16
    14..15 temp_c    x100    u16
    16..17 activity  x1000   u16
    18..21 reserved, zero
    22     XOR of bytes 0..21
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import reduce
from typing import Iterator, Union

from mhealth.vitals import VitalsSample, validate_sample

FRAME_LEN = 23
SYNC = 0x7E
MSG_VITALS = 0x01

SCALES = {"spo2_pct": 10, "hr_bpm": 10, "temp_c": 100, "activity_level": 1000}

_BODY = struct.Struct("<BBQHHHHI")  # 22 bytes; checksum appended
assert _BODY.size == FRAME_LEN - 1


class FrameError(ValueError):
    """Base class for anything wrong with an inbound frame."""


class BadLength(FrameError):
    pass


class BadSync(FrameError):
    pass


class BadChecksum(FrameError):
    pass


class UnknownMessageType(FrameError):
    pass


class InvalidSample(FrameError):
    def __init__(self, sample: VitalsSample, fields: list[str]):
        super().__init__(f"decoded sample violates {', '.join(fields)}")
        self.sample = sample
        self.fields = fields


class RangeError(ValueError):
    """A field does not fit its fixed-point slot."""


def xor_checksum(data: bytes) -> int:
    return reduce(lambda a, b: a ^ b, data, 0)


def quantize(value: float, field: str) -> float:
    """Snap a value onto the frame's fixed-point grid for ``field``."""
    scale = SCALES[field]
    return round(value * scale) / scale


def pack_words(timestamp_ms: int, spo2: int, hr: int, temp: int, activity: int,
               msg_type: int = MSG_VITALS, reserved: int = 0) -> bytes:
    """Build a frame from raw fixed-point words, no validation of the values."""
    body = _BODY.pack(SYNC, msg_type, timestamp_ms, spo2, hr, temp, activity, reserved)
    return body + bytes([xor_checksum(body)])


def _word(value: float, field: str) -> int:
    w = round(value * SCALES[field])
    if not 0 <= w <= 0xFFFF:
        raise RangeError(f"{field}={value} does not fit a u16 at scale {SCALES[field]}")
    return w


def encode_frame(s: VitalsSample) -> bytes:
    if not 0 <= s.timestamp_ms < 2**64:
        raise RangeError(f"timestamp_ms={s.timestamp_ms} does not fit a u64")
    return pack_words(
        s.timestamp_ms,
        _word(s.spo2_pct, "spo2_pct"),
        _word(s.hr_bpm, "hr_bpm"),
        _word(s.temp_c, "temp_c"),
        _word(s.activity_level, "activity_level"),
    )


def decode_frame(data: Union[bytes, bytearray, memoryview]) -> VitalsSample:
    data = bytes(data)
    if len(data) != FRAME_LEN:
        raise BadLength(f"expected {FRAME_LEN} bytes, got {len(data)}")
    if data[0] != SYNC:
        raise BadSync(f"sync byte is 0x{data[0]:02X}")
    if xor_checksum(data[:-1]) != data[-1]:
        raise BadChecksum("checksum mismatch")
    _, msg_type, ts, spo2, hr, temp, act, _reserved = _BODY.unpack(data[:-1])
    if msg_type != MSG_VITALS:
        raise UnknownMessageType(f"message type 0x{msg_type:02X}")
    s = VitalsSample(
        timestamp_ms=ts,
        spo2_pct=spo2 / SCALES["spo2_pct"],
        hr_bpm=hr / SCALES["hr_bpm"],
        temp_c=temp / SCALES["temp_c"],
        activity_level=act / SCALES["activity_level"],
    )
    bad = validate_sample(s)
    if bad:
        raise InvalidSample(s, bad)
    return s


@dataclass
class FrameResult:
    sample: VitalsSample | None = None
    error: FrameError | None = None


class FrameReader:
    """Split an arbitrary chunked byte stream into frames.

    Garbage before a sync byte is skipped and reported once per run. A
    23-byte candidate that starts with sync but fails to decode is dropped
    whole, so one corrupted frame costs exactly one error.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> Iterator[FrameResult]:
        self._buf.extend(chunk)
        while self._buf:
            if self._buf[0] != SYNC:
                idx = self._buf.find(bytes([SYNC]))
                skipped = len(self._buf) if idx < 0 else idx
                del self._buf[:skipped]
                yield FrameResult(error=BadSync(f"skipped {skipped} bytes before sync"))
                continue
            if len(self._buf) < FRAME_LEN:
                return
            candidate = bytes(self._buf[:FRAME_LEN])
            del self._buf[:FRAME_LEN]
            try:
                yield FrameResult(sample=decode_frame(candidate))
            except FrameError as exc:
                yield FrameResult(error=exc)

    @property
    def pending(self) -> int:
        return len(self._buf)
