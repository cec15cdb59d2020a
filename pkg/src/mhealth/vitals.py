"""Domain values shared by the sensor, gateway and server tiers.

All types here are frozen dataclasses, so they can be handed between
threads without copying.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from enum import Enum, IntEnum
from typing import Any, Iterable, Optional

# Validity envelope for a reading. Generous on purpose: it exists to catch
# codec corruption, not to second-guess extreme but real physiology.
SAMPLE_BOUNDS: dict[str, tuple[float, float]] = {
    "spo2_pct": (0.0, 100.0),
    "hr_bpm": (0.0, 300.0),
    "temp_c": (25.0, 45.0),
    "activity_level": (0.0, 1.0),
}

SAMPLE_FIELDS = ("timestamp_ms", "spo2_pct", "hr_bpm", "temp_c", "activity_level")

# Cell fixes must never claim to be sharper than this.
GPS_DEFAULT_ACCURACY_M = 5.0


@dataclass(frozen=True)
class VitalsSample:
    timestamp_ms: int
    spo2_pct: float
    hr_bpm: float
    temp_c: float
    activity_level: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VitalsSample":
        try:
            ts = d["timestamp_ms"]
            if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts != int(ts):
                raise ValueError(f"timestamp_ms must be an integer, got {ts!r}")
            return cls(
                timestamp_ms=int(ts),
                spo2_pct=_as_float(d["spo2_pct"], "spo2_pct"),
                hr_bpm=_as_float(d["hr_bpm"], "hr_bpm"),
                temp_c=_as_float(d["temp_c"], "temp_c"),
                activity_level=_as_float(d["activity_level"], "activity_level"),
            )
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]!r}") from None

    def as_row(self) -> list[Any]:
        return [getattr(self, f) for f in SAMPLE_FIELDS]


def _as_float(v: Any, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{name} must be a number, got {v!r}")
    return float(v)


def validate_sample(s: VitalsSample) -> list[str]:
    """Return the names of the fields that break the validity envelope.

    An empty list means the sample is valid. NaN never passes a range check.
    """
    bad = []
    if not (isinstance(s.timestamp_ms, int) and s.timestamp_ms >= 0):
        bad.append("timestamp_ms")
    for name, (lo, hi) in SAMPLE_BOUNDS.items():
        v = getattr(s, name)
        if not (lo <= v <= hi):
            bad.append(name)
    return bad


def is_valid(s: VitalsSample) -> bool:
    return not validate_sample(s)


def samples_to_csv(samples: Iterable[VitalsSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_FIELDS)
    for s in samples:
        w.writerow([repr(v) if isinstance(v, float) else v for v in s.as_row()])
    return buf.getvalue()


def samples_from_csv(text: str) -> list[VitalsSample]:
    rows = csv.DictReader(io.StringIO(text))
    out = []
    for r in rows:
        out.append(
            VitalsSample(
                timestamp_ms=int(r["timestamp_ms"]),
                spo2_pct=float(r["spo2_pct"]),
                hr_bpm=float(r["hr_bpm"]),
                temp_c=float(r["temp_c"]),
                activity_level=float(r["activity_level"]),
            )
        )
    return out


@dataclass(frozen=True, order=True)
class CellIdentity:
    """Serving-cell identifiers: country, network, location area, cell."""

    mcc: int
    mnc: int
    lac: int
    ci: int

    def __post_init__(self):
        for name, hi in (("mcc", 999), ("mnc", 999), ("lac", 65535), ("ci", 2**28 - 1)):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v <= hi:
                raise ValueError(f"{name}={v!r} outside 0..{hi}")


class LocationSource(str, Enum):
    GPS = "GPS"
    CELL = "CELL"


@dataclass(frozen=True)
class LocationFix:
    lat_deg: float
    lon_deg: float
    source: LocationSource
    accuracy_m: float

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude {self.lat_deg} out of range")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"longitude {self.lon_deg} out of range")
        if not (self.accuracy_m > 0 and math.isfinite(self.accuracy_m)):
            raise ValueError(f"accuracy_m must be positive, got {self.accuracy_m}")
        src = LocationSource(self.source)
        object.__setattr__(self, "source", src)
        if src is LocationSource.CELL and self.accuracy_m < GPS_DEFAULT_ACCURACY_M:
            raise ValueError("a cell fix cannot be more precise than GPS")

    def to_dict(self) -> dict[str, Any]:
        return {
            "lat_deg": self.lat_deg,
            "lon_deg": self.lon_deg,
            "source": self.source.value,
            "accuracy_m": self.accuracy_m,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LocationFix":
        try:
            return cls(
                lat_deg=_as_float(d["lat_deg"], "lat_deg"),
                lon_deg=_as_float(d["lon_deg"], "lon_deg"),
                source=LocationSource(d["source"]),
                accuracy_m=_as_float(d["accuracy_m"], "accuracy_m"),
            )
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]!r}") from None


class PatientState(IntEnum):
    NORMAL = 0
    ANOMALY = 1

    @property
    def label(self) -> str:
        return "Normal" if self is PatientState.NORMAL else "Anomaly"


def encode_state(state: PatientState) -> int:
    return int(state)


def decode_state(value: int) -> PatientState:
    return PatientState(value)


@dataclass(frozen=True)
class AlertEvent:
    patient_id: str
    created_ms: int
    triggering_sample: VitalsSample
    location: Optional[LocationFix]
    state: PatientState = field(default=PatientState.ANOMALY)

    def __post_init__(self):
        if self.state is not PatientState.ANOMALY:
            raise ValueError("alerts are only raised for the anomaly state")
        if self.triggering_sample.timestamp_ms > self.created_ms:
            raise ValueError("alert created before its triggering sample")

    def to_dict(self) -> dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "created_ms": self.created_ms,
            "state": encode_state(self.state),
            "triggering_sample": self.triggering_sample.to_dict(),
            "location": None if self.location is None else self.location.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AlertEvent":
        loc = d.get("location")
        return cls(
            patient_id=d["patient_id"],
            created_ms=int(d["created_ms"]),
            triggering_sample=VitalsSample.from_dict(d["triggering_sample"]),
            location=None if loc is None else LocationFix.from_dict(loc),
            state=decode_state(d["state"]),
        )
