"""Sensor registration and the change-detection forwarding rule."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from mhealth.sensor.codec import quantize
from mhealth.sensor.generator import ReportingMode
from mhealth.vitals import VitalsSample

# Deltas are compared on the frame grid; absorb float noise so a change of
# exactly one threshold still counts.
_DELTA_TOL = 1e-9


class ConfigError(ValueError):
    pass


class SensorType(str, Enum):
    PULSE_OXIMETER = "PulseOximeter"
    MOTION = "Motion"
    OTHER = "Other"


@dataclass(frozen=True)
class Calibration:
    """Per-field additive offsets applied to every decoded reading."""

    spo2_pct: float = 0.0
    hr_bpm: float = 0.0
    temp_c: float = 0.0
    activity_level: float = 0.0

    def apply(self, s: VitalsSample) -> VitalsSample:
        return dataclasses.replace(
            s,
            spo2_pct=quantize(s.spo2_pct + self.spo2_pct, "spo2_pct"),
            hr_bpm=quantize(s.hr_bpm + self.hr_bpm, "hr_bpm"),
            temp_c=quantize(s.temp_c + self.temp_c, "temp_c"),
            activity_level=quantize(s.activity_level + self.activity_level, "activity_level"),
        )


@dataclass(frozen=True)
class SensorRegistration:
    sensor_id: str
    sensor_type: SensorType = SensorType.PULSE_OXIMETER
    sampling_hz: float = 1.0
    mode: ReportingMode = field(default_factory=ReportingMode.raw)
    calibration: Optional[Calibration] = None

    def __post_init__(self):
        object.__setattr__(self, "sensor_type", SensorType(self.sensor_type))
        if not (isinstance(self.sampling_hz, (int, float)) and self.sampling_hz > 0
                and math.isfinite(self.sampling_hz)):
            raise ConfigError(f"sampling_hz must be positive, got {self.sampling_hz!r}")


@dataclass(frozen=True)
class SessionConfig:
    registration: SensorRegistration
    stream_id: str


class SensorRegistry:
    """Holds one active registration per sensor id."""

    def __init__(self):
        self._active: dict[str, SessionConfig] = {}
        self._issued = 0

    def register(self, reg: SensorRegistration) -> SessionConfig:
        self._issued += 1
        session = SessionConfig(reg, f"{reg.sensor_id}/{self._issued}")
        self._active[reg.sensor_id] = session
        return session

    def get(self, sensor_id: str) -> SessionConfig:
        return self._active[sensor_id]

    def __contains__(self, sensor_id: str) -> bool:
        return sensor_id in self._active

    def __len__(self) -> int:
        return len(self._active)

    def sessions(self) -> list[SessionConfig]:
        return list(self._active.values())


@dataclass(frozen=True)
class ForwardPolicy:
    delta_spo2: float = 1.0
    delta_hr: float = 2.0
    delta_temp: float = 0.1
    delta_activity: float = 0.05
    heartbeat_s: int = 60

    def __post_init__(self):
        for name in ("delta_spo2", "delta_hr", "delta_temp", "delta_activity"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be >= 0, got {v}")
        if not (isinstance(self.heartbeat_s, int) and self.heartbeat_s > 0):
            raise ConfigError(f"heartbeat_s must be a positive integer, got {self.heartbeat_s!r}")

    @classmethod
    def from_mapping(cls, d: dict[str, Any]) -> "ForwardPolicy":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown policy keys: {sorted(unknown)}")
        kw = {k: (int(v) if k == "heartbeat_s" else float(v)) for k, v in d.items()}
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "ForwardPolicy":
        from mhealth.config import load_flat

        return cls.from_mapping(load_flat(path))


def should_forward(prev: Optional[VitalsSample], curr: VitalsSample, policy: ForwardPolicy) -> bool:
    """Decide whether ``curr`` is worth sending upstream.

    ``prev`` must be the last *forwarded* sample, not the last one seen;
    otherwise a slow drift below every threshold would never be reported.
    """
    if prev is None:
        return True
    if curr.timestamp_ms - prev.timestamp_ms >= policy.heartbeat_s * 1000:
        return True
    for attr, delta in (
        ("spo2_pct", policy.delta_spo2),
        ("hr_bpm", policy.delta_hr),
        ("temp_c", policy.delta_temp),
        ("activity_level", policy.delta_activity),
    ):
        change = abs(getattr(curr, attr) - getattr(prev, attr))
        if change > 0 and change >= delta - _DELTA_TOL:
            return True
    return False
