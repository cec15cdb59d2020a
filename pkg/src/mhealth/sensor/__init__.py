"""Tier 1: simulated body-sensor node."""

from mhealth.sensor.codec import (
    FRAME_LEN,
    BadChecksum,
    BadLength,
    BadSync,
    FrameError,
    FrameReader,
    InvalidSample,
    RangeError,
    UnknownMessageType,
    decode_frame,
    encode_frame,
    pack_words,
    quantize,
)
from mhealth.sensor.generator import (
    Episode,
    EpisodeKind,
    EpisodeScript,
    ModeKind,
    PatientProfile,
    ReportingMode,
    ScriptError,
    generate_stream,
    label_array,
    label_oracle,
)

__all__ = [
    "FRAME_LEN", "BadChecksum", "BadLength", "BadSync", "FrameError", "FrameReader",
    "InvalidSample", "RangeError", "UnknownMessageType", "decode_frame", "encode_frame",
    "pack_words", "quantize", "Episode", "EpisodeKind", "EpisodeScript", "ModeKind",
    "PatientProfile", "ReportingMode", "ScriptError", "generate_stream", "label_array",
    "label_oracle",
]
