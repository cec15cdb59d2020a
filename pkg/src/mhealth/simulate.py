"""End-to-end scenarios: sensor -> gateway -> server in simulated time."""

from __future__ import annotations

import dataclasses
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import httpx

from mhealth.clock import SimClock
from mhealth.gateway.config import ConfigError, ForwardPolicy, SensorRegistration
from mhealth.gateway.link import HttpUplink, LinkScript, LinkSegment, ScriptedUplink
from mhealth.gateway.locator import CellDatabase, CellRecord
from mhealth.gateway.outbox import Outbox
from mhealth.gateway.runner import EventKind, Gateway
from mhealth.sensor.codec import encode_frame
from mhealth.sensor.generator import (
    EpisodeScript,
    PatientProfile,
    ReportingMode,
    generate_stream,
)
from mhealth.server.service import MedicalServer, ServiceUplink, TokenTable
from mhealth.server.store import RecordEntry
from mhealth.vitals import AlertEvent, CellIdentity, LocationFix, LocationSource, PatientState

HOME = (53.3498, -6.2603)

DEFAULT_CELLS = [
    (CellIdentity(272, 1, 100, 1001), CellRecord(53.3440, -6.2670, 450.0)),
    (CellIdentity(272, 1, 100, 1002), CellRecord(53.3525, -6.2490, 600.0)),
    (CellIdentity(272, 1, 101, 2001), CellRecord(53.3610, -6.2750, 900.0)),
]
# Seen on the air but missing from the database.
UNLISTED_CELL = CellIdentity(272, 1, 102, 3001)


class PositionTrack:
    """Deterministic position feed: GPS in alternate windows, cells otherwise.

    While GPS is off the wearer roams through the known cells and, every
    fourth window, an unlisted one, exercising the last-known-fix path.
    """

    def __init__(self, window_s: float = 90.0, cells: Optional[list[CellIdentity]] = None):
        self.window_s = window_s
        known = cells if cells is not None else [c for c, _ in DEFAULT_CELLS]
        self.cells = known + [UNLISTED_CELL]

    def __call__(self, t_ms: int) -> tuple[Optional[LocationFix], Optional[CellIdentity]]:
        w = int(t_ms / 1000.0 // self.window_s)
        if w % 2 == 0:
            # Walk slowly east; about one metre per second.
            lon = HOME[1] + (t_ms / 1000.0) * 1.5e-5
            return LocationFix(HOME[0], lon, LocationSource.GPS, 5.0), None
        return None, self.cells[(w // 2) % len(self.cells)]


@dataclass
class ScenarioConfig:
    profile: PatientProfile = field(default_factory=PatientProfile)
    script: EpisodeScript = field(default_factory=lambda: EpisodeScript(()))
    link: LinkScript = field(default_factory=LinkScript.always_up)
    policy: ForwardPolicy = field(default_factory=ForwardPolicy)
    mode: ReportingMode = field(default_factory=ReportingMode.raw)
    duration_s: float = 600.0
    sampling_hz: float = 1.0
    seed: int = 0
    patient_id: str = "p1"
    token: str = "tok-p1"
    outbox_capacity: int = 10_000
    gps_window_s: float = 90.0
    cells_path: Optional[Path] = None
    link_path: Optional[Path] = None

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be > 0")
        for p in (self.cells_path, self.link_path):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"referenced file does not exist: {p}")
        if self.link_path is not None:
            self.link = LinkScript.from_csv(self.link_path)

    @classmethod
    def from_mapping(cls, flat: dict[str, Any]) -> "ScenarioConfig":
        """Build from flat keys, e.g. ``scenario.duration_s`` or ``profile.hr_mean``.

        ``scenario.episodes`` is a list of [start_s, end_s, kind] and
        ``scenario.link_down`` a list of [start_s, end_s] outages.
        """
        sc = {k[len("scenario."):]: v for k, v in flat.items() if k.startswith("scenario.")}
        prof = {k[len("profile."):]: v for k, v in flat.items() if k.startswith("profile.")}
        pol = {k[len("policy."):]: v for k, v in flat.items() if k.startswith("policy.")}
        kw: dict[str, Any] = {}
        try:
            kw["profile"] = PatientProfile(**{k: float(v) for k, v in prof.items()})
        except TypeError as exc:
            raise ConfigError(f"bad profile settings: {exc}") from None
        kw["policy"] = ForwardPolicy.from_mapping(pol)
        if "episodes" in sc:
            kw["script"] = EpisodeScript.of(*[tuple(e) for e in sc.pop("episodes")])
        if "link_down" in sc:
            kw["link"] = LinkScript([LinkSegment(float(a), float(b), False)
                                     for a, b in sc.pop("link_down")])
        if "mode" in sc:
            kw["mode"] = ReportingMode.parse(str(sc.pop("mode")))
        for name, conv in (("duration_s", float), ("sampling_hz", float), ("seed", int),
                           ("patient_id", str), ("token", str), ("outbox_capacity", int),
                           ("gps_window_s", float), ("cells_path", Path), ("link_path", Path)):
            if name in sc:
                kw[name] = conv(sc.pop(name))
        if sc:
            raise ConfigError(f"unknown scenario keys: {', '.join(sorted(sc))}")
        return cls(**kw)

    def cell_db(self) -> CellDatabase:
        if self.cells_path is not None:
            return CellDatabase.from_csv(self.cells_path)
        return CellDatabase(DEFAULT_CELLS)

    def to_dict(self) -> dict[str, Any]:
        return {
            "profile": dataclasses.asdict(self.profile),
            "episodes": [[e.start_s, e.end_s, e.kind.value] for e in self.script.episodes],
            "link_down": [[s.start_s, s.end_s] for s in self.link.segments if not s.up],
            "policy": dataclasses.asdict(self.policy),
            "mode": str(self.mode),
            "duration_s": self.duration_s,
            "sampling_hz": self.sampling_hz,
            "seed": self.seed,
            "patient_id": self.patient_id,
        }


class _TapUplink:
    """Remembers everything the inner uplink acknowledged."""

    def __init__(self, inner):
        self.inner = inner
        self.sent = []

    def available(self) -> bool:
        return self.inner.available()

    def send(self, entry) -> None:
        self.inner.send(entry)
        self.sent.append(entry)


def _remote_view(url: str, patient_id: str) -> tuple[list[RecordEntry], list[AlertEvent]]:
    with httpx.Client(base_url=url.rstrip("/"), timeout=10.0) as c:
        hist = c.get(f"/v1/patients/{patient_id}/history")
        hist.raise_for_status()
        alerts = c.get("/v1/alerts")
        alerts.raise_for_status()
    entries = [RecordEntry.from_dict(d) for d in hist.json()]
    return entries, [a for a in map(AlertEvent.from_dict, alerts.json()) if a.patient_id == patient_id]


def _latency_stats(values: list[int]) -> dict[str, Optional[float]]:
    if not values:
        return {"count": 0, "min_ms": None, "median_ms": None, "mean_ms": None, "max_ms": None}
    return {
        "count": len(values),
        "min_ms": min(values),
        "median_ms": float(statistics.median(values)),
        "mean_ms": float(statistics.fmean(values)),
        "max_ms": max(values),
    }


def rising_edges(states: list[Optional[PatientState]]) -> int:
    """Normal->Anomaly transitions, starting from Normal; unclassified entries are skipped."""
    n, prev = 0, PatientState.NORMAL
    for s in states:
        if s is None:
            continue
        if s is PatientState.ANOMALY and prev is PatientState.NORMAL:
            n += 1
        prev = s
    return n


@dataclass
class RunResult:
    report: dict[str, Any]
    records: list[RecordEntry]
    alerts: list[AlertEvent]
    acked: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.report["violations"]


def run_scenario(cfg: ScenarioConfig, server: Optional[MedicalServer] = None,
                 server_url: Optional[str] = None, model=None) -> RunResult:
    """Run one scenario. Without ``server``/``server_url`` an in-memory server is built."""
    clock = SimClock(0)
    if server_url is None and server is None:
        server = MedicalServer(TokenTable({cfg.token: cfg.patient_id}), model, clock=clock)
    if server_url is not None:
        inner = HttpUplink(server_url, cfg.token, cfg.patient_id)
    else:
        inner = ServiceUplink(server, cfg.token, cfg.patient_id)
    tap = _TapUplink(ScriptedUplink(inner, cfg.link, clock))

    gw = Gateway(cfg.policy, cfg.cell_db(), tap, clock, PositionTrack(cfg.gps_window_s),
                 Outbox(cfg.outbox_capacity))
    gw.register(SensorRegistration("sim-oximeter", sampling_hz=cfg.sampling_hz, mode=cfg.mode))

    stream = generate_stream(cfg.profile, cfg.script, cfg.mode, cfg.sampling_hz, cfg.seed,
                             duration_s=cfg.duration_s)
    events = []
    for s in stream:
        clock.set(max(clock(), s.timestamp_ms))
        events.extend(gw.feed(encode_frame(s)))
    # One last delivery attempt at the end of the run.
    clock.set(max(clock(), int(cfg.duration_s * 1000)))
    events.extend(gw.flush_backlog())

    if server_url is not None:
        records, alerts = _remote_view(server_url, cfg.patient_id)
    else:
        records = server.query_history(cfg.patient_id)
        alerts = [a for a in server.alerts() if a.patient_id == cfg.patient_id]

    st = gw.stats
    acked = [e.sequence_no for e in tap.sent]
    violations: list[str] = []
    delivered = len(st.acked)
    still = len(gw.outbox)
    if st.forwards != delivered + still + st.dropped:
        violations.append(f"forwards {st.forwards} != delivered {delivered} + "
                          f"still_buffered {still} + dropped {st.dropped}")
    if any(b <= a for a, b in zip(acked, acked[1:])):
        violations.append("acknowledgements out of sequence order")
    stored = [e.upload.sequence_no for e in records]
    if stored != sorted(set(acked)):
        lost = sorted(set(acked) - set(stored))
        violations.append(f"server record differs from acknowledged set (lost {lost[:10]})")
    states = [e.state for e in records]
    if len(alerts) != rising_edges(states):
        violations.append(f"{len(alerts)} alerts for {rising_edges(states)} Normal->Anomaly edges")
    by_ts = {e.upload.sample.timestamp_ms: e for e in records}
    sent_by_seq = {e.sequence_no: e for e in tap.sent}
    for a in alerts:
        rec = by_ts.get(a.triggering_sample.timestamp_ms)
        if rec is None or rec.upload.location != a.location \
                or sent_by_seq[rec.upload.sequence_no].location != a.location:
            violations.append(f"alert at {a.triggering_sample.timestamp_ms} lost its location")

    kinds = {k.value: sum(1 for e in events if e.kind is k) for k in EventKind}
    report = {
        "scenario": cfg.to_dict(),
        "frames": st.frames,
        "frame_errors": st.frame_errors,
        "forwards": st.forwards,
        "suppressed": st.suppressed,
        "forwarded_direct": st.forwarded_direct,
        "buffered": st.buffered,
        "flushed": st.flushed,
        "delivered": delivered,
        "dropped": st.dropped,
        "still_buffered": still,
        "unlocated": st.unlocated,
        "events": kinds,
        "link_down_s": cfg.link.down_seconds(cfg.duration_s),
        "records": len(records),
        "anomalous_records": sum(1 for s in states if s is PatientState.ANOMALY),
        "unclassified_records": sum(1 for s in states if s is None),
        "alerts": len(alerts),
        "alert_times_ms": [a.triggering_sample.timestamp_ms for a in alerts],
        "latency": _latency_stats(st.latencies_ms),
        "violations": violations,
    }
    return RunResult(report, records, alerts, acked)
