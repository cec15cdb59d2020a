"""Synthetic body-sensor streams with scripted physiological episodes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from mhealth.sensor.codec import quantize
from mhealth.vitals import SAMPLE_BOUNDS, PatientState, VitalsSample

RAMP_S = 10.0

# (field index, target mean, target sd) per anomaly kind.
EPISODE_TARGETS = {
    "hypoxia": (0, 85.0, 2.0),
    "tachycardia": (1, 150.0, 10.0),
    "fever": (2, 39.5, 0.3),
}
# During any anomaly episode the wearer slows down toward rest.
EPISODE_ACTIVITY = (0.02, 0.01)

_FIELDS = ("spo2_pct", "hr_bpm", "temp_c", "activity_level")
_LO = np.array([SAMPLE_BOUNDS[f][0] for f in _FIELDS])
_HI = np.array([SAMPLE_BOUNDS[f][1] for f in _FIELDS])


class ScriptError(ValueError):
    pass


class EpisodeKind(str, Enum):
    BASELINE = "baseline"
    HYPOXIA = "hypoxia"
    TACHYCARDIA = "tachycardia"
    FEVER = "fever"


@dataclass(frozen=True)
class Episode:
    start_s: float
    end_s: float
    kind: EpisodeKind

    def __post_init__(self):
        object.__setattr__(self, "kind", EpisodeKind(self.kind))
        if not self.start_s < self.end_s:
            raise ScriptError(f"episode start {self.start_s} not before end {self.end_s}")
        if self.start_s < 0:
            raise ScriptError("episode starts before t=0")


@dataclass(frozen=True)
class EpisodeScript:
    episodes: tuple[Episode, ...] = ()

    def __post_init__(self):
        eps = tuple(sorted(self.episodes, key=lambda e: e.start_s))
        for a, b in zip(eps, eps[1:]):
            if b.start_s < a.end_s:
                raise ScriptError(f"episodes overlap: {a} and {b}")
        object.__setattr__(self, "episodes", eps)

    @classmethod
    def of(cls, *segments: tuple[float, float, str]) -> "EpisodeScript":
        return cls(tuple(Episode(s, e, EpisodeKind(k)) for s, e, k in segments))

    @property
    def end_s(self) -> float:
        return max((e.end_s for e in self.episodes), default=0.0)


class ModeKind(str, Enum):
    RAW = "raw"
    EVENT = "event"
    AVERAGED = "averaged"


@dataclass(frozen=True)
class ReportingMode:
    kind: ModeKind = ModeKind.RAW
    window_s: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModeKind(self.kind))
        if self.kind is ModeKind.AVERAGED:
            if self.window_s is None or self.window_s < 1:
                raise ValueError("averaged mode needs window_s >= 1")
        elif self.window_s is not None:
            raise ValueError(f"{self.kind.value} mode takes no window")

    @classmethod
    def raw(cls) -> "ReportingMode":
        return cls(ModeKind.RAW)

    @classmethod
    def event(cls) -> "ReportingMode":
        return cls(ModeKind.EVENT)

    @classmethod
    def averaged(cls, window_s: int) -> "ReportingMode":
        return cls(ModeKind.AVERAGED, window_s)

    def __str__(self):
        return f"averaged({self.window_s})" if self.kind is ModeKind.AVERAGED else self.kind.value

    @classmethod
    def parse(cls, text: str) -> "ReportingMode":
        text = text.strip().lower()
        if text.startswith("averaged"):
            inner = text[len("averaged"):].strip("():= ")
            return cls.averaged(int(inner))
        return cls(ModeKind(text))


@dataclass(frozen=True)
class PatientProfile:
    """Per-field baseline mean and spread for one wearer."""

    spo2_mean: float = 97.0
    spo2_sd: float = 0.5
    hr_mean: float = 72.0
    hr_sd: float = 3.0
    temp_mean: float = 36.8
    temp_sd: float = 0.15
    activity_mean: float = 0.2
    activity_sd: float = 0.05

    @property
    def means(self) -> np.ndarray:
        return np.array([self.spo2_mean, self.hr_mean, self.temp_mean, self.activity_mean])

    @property
    def sds(self) -> np.ndarray:
        return np.array([self.spo2_sd, self.hr_sd, self.temp_sd, self.activity_sd])


def label_oracle(s: VitalsSample) -> PatientState:
    """Ground-truth label from fixed clinical norms. Boundaries count as normal."""
    anomalous = (
        s.spo2_pct < 90.0
        or s.hr_bpm < 50.0
        or s.hr_bpm > 120.0
        or s.temp_c < 36.0
        or s.temp_c > 38.5
    )
    return PatientState.ANOMALY if anomalous else PatientState.NORMAL


def label_array(values: np.ndarray) -> np.ndarray:
    """Vectorised label_oracle over rows of (spo2, hr, temp[, activity])."""
    v = np.asarray(values, dtype=float)
    return (
        (v[:, 0] < 90.0) | (v[:, 1] < 50.0) | (v[:, 1] > 120.0) | (v[:, 2] < 36.0) | (v[:, 2] > 38.5)
    ).astype(np.int64)


def ramp_weight(t_s: np.ndarray, start_s: float, end_s: float) -> np.ndarray:
    """Linear onset/offset envelope, 0 outside the episode, 1 on the plateau."""
    w = np.minimum((t_s - start_s) / RAMP_S, (end_s - t_s) / RAMP_S)
    w = np.clip(w, 0.0, 1.0)
    w[(t_s < start_s) | (t_s >= end_s)] = 0.0
    return w


def simulate_values(profile: PatientProfile, script: EpisodeScript, t_s: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Raw (n, 4) array of spo2, hr, temp, activity at the given times."""
    n = t_s.shape[0]
    vals = profile.means + profile.sds * rng.standard_normal((n, 4))
    for ep in script.episodes:
        if ep.kind is EpisodeKind.BASELINE:
            continue
        col, mu, sd = EPISODE_TARGETS[ep.kind.value]
        w = ramp_weight(t_s, ep.start_s, ep.end_s)
        idx = np.nonzero(w > 0)[0]
        if idx.size == 0:
            continue
        target = mu + sd * rng.standard_normal(idx.size)
        rest = EPISODE_ACTIVITY[0] + EPISODE_ACTIVITY[1] * rng.standard_normal(idx.size)
        vals[idx, col] += w[idx] * (target - vals[idx, col])
        vals[idx, 3] += w[idx] * (rest - vals[idx, 3])
    return np.clip(vals, _LO, _HI)


def _to_sample(ts_ms: int, row: Sequence[float]) -> VitalsSample:
    return VitalsSample(
        timestamp_ms=int(ts_ms),
        spo2_pct=quantize(float(row[0]), "spo2_pct"),
        hr_bpm=quantize(float(row[1]), "hr_bpm"),
        temp_c=quantize(float(row[2]), "temp_c"),
        activity_level=quantize(float(row[3]), "activity_level"),
    )


def generate_stream(profile: PatientProfile, script: EpisodeScript, mode: ReportingMode,
                    hz: float, seed: int, duration_s: Optional[float] = None,
                    start_ms: int = 0) -> list[VitalsSample]:
    """Generate a reading stream at ``hz`` for ``duration_s`` seconds.

    Values are snapped onto the wire-frame grid so that what the sensor
    emits survives the codec unchanged. ``duration_s`` defaults to the end
    of the last scripted episode.
    """
    if not (hz > 0 and math.isfinite(hz)):
        raise ValueError(f"sampling rate must be positive, got {hz}")
    if duration_s is None:
        duration_s = script.end_s
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    n = int(math.floor(duration_s * hz + 1e-9))
    k = np.arange(n)
    t_s = k / hz
    rng = np.random.default_rng(seed)
    vals = simulate_values(profile, script, t_s, rng)
    ts_ms = [start_ms + int(round(1000 * i / hz)) for i in range(n)]
    raw = [_to_sample(ts_ms[i], vals[i]) for i in range(n)]

    if mode.kind is ModeKind.RAW:
        return raw
    if mode.kind is ModeKind.EVENT:
        return _events(raw)
    return _averaged(raw, t_s, mode.window_s)


def _events(samples: Iterable[VitalsSample]) -> list[VitalsSample]:
    out = []
    prev = None
    for s in samples:
        state = label_oracle(s)
        if state != prev:
            out.append(s)
            prev = state
    return out


def _averaged(samples: list[VitalsSample], t_s: np.ndarray, window_s: int) -> list[VitalsSample]:
    # Only complete windows are reported; a partial trailing window is dropped.
    groups: dict[int, list[VitalsSample]] = {}
    for s, t in zip(samples, t_s):
        groups.setdefault(int(math.floor(t / window_s + 1e-9)), []).append(s)
    per_window = max(len(g) for g in groups.values()) if groups else 0
    out = []
    for key in sorted(groups):
        g = groups[key]
        if len(g) < per_window:
            continue
        n = len(g)
        means = [math.fsum(getattr(s, f) for s in g) / n for f in _FIELDS]
        out.append(_to_sample(g[-1].timestamp_ms, means))
    return out
