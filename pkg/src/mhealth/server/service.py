"""The medical server: authentication, deduplicated ingest, classification, alerts."""

from __future__ import annotations

import csv
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

from mhealth.clock import wall_clock_ms
from mhealth.engine.features import normalize
from mhealth.engine.mlp import MlpModel, classify
from mhealth.gateway.outbox import LinkDown, OutboxEntry
from mhealth.server.store import RecordEntry, RecordStore, SessionUpload
from mhealth.vitals import AlertEvent, LocationFix, PatientState, VitalsSample, validate_sample

log = logging.getLogger(__name__)


class Unauthorized(PermissionError):
    pass


class NotFound(LookupError):
    pass


class ValidationError(ValueError):
    pass


class SinkError(RuntimeError):
    pass


# --- tokens -----------------------------------------------------------------

class TokenTable:
    """Bearer tokens, one per patient."""

    def __init__(self, pairs: dict[str, str] | None = None):
        self._by_token: dict[str, str] = {}
        self._by_patient: dict[str, str] = {}
        for tok, pid in (pairs or {}).items():
            self.provision(tok, pid)

    def provision(self, token: str, patient_id: str) -> None:
        """Bind ``token`` to ``patient_id``, revoking that patient's old token."""
        if not token or not patient_id:
            raise ValueError("token and patient_id must be non-empty")
        if token in self._by_token and self._by_token[token] != patient_id:
            raise ValueError("token already bound to another patient")
        old = self._by_patient.get(patient_id)
        if old is not None:
            del self._by_token[old]
        self._by_token[token] = patient_id
        self._by_patient[patient_id] = token

    def lookup(self, token: Optional[str]) -> str:
        pid = self._by_token.get(token or "")
        if pid is None:
            raise Unauthorized("unknown token")
        return pid

    @property
    def patients(self) -> frozenset[str]:
        return frozenset(self._by_patient)

    @classmethod
    def from_csv(cls, path: str | Path) -> "TokenTable":
        table = cls()
        seen: set[str] = set()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["token", "patient_id"]:
                raise ValueError(f"{path}:1: expected header token,patient_id")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 2 columns")
                tok, pid = row[0].strip(), row[1].strip()
                if pid in seen:
                    raise ValueError(f"{path}:{lineno}: second token for patient {pid!r}")
                seen.add(pid)
                table.provision(tok, pid)
        return table


# --- alert sinks --------------------------------------------------------------

class AlertLogSink:
    """Append each alert as one JSON line."""

    name = "alert_log"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def deliver(self, event: AlertEvent) -> None:
        line = json.dumps(event.to_dict(), separators=(",", ":")) + "\n"
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)


class CallbackSink:
    """Hand each alert to a callable (webhook poster, pager, test probe)."""

    def __init__(self, fn: Callable[[AlertEvent], Any], name: str = "callback"):
        self.fn = fn
        self.name = name

    def deliver(self, event: AlertEvent) -> None:
        self.fn(event)


def dispatch(event: AlertEvent, sinks) -> dict[str, Optional[str]]:
    """Deliver to every sink. Returns sink name -> None on success or the error text."""
    report: dict[str, Optional[str]] = {}
    for sink in sinks:
        try:
            sink.deliver(event)
            report[sink.name] = None
        except Exception as exc:  # a broken sink must not block the others
            log.error("alert sink %s failed: %s", sink.name, exc)
            report[sink.name] = f"{type(exc).__name__}: {exc}"
    return report


# --- records ------------------------------------------------------------------

@dataclass(frozen=True)
class Accepted:
    state: Optional[PatientState]
    alert: Optional[AlertEvent] = None
    sinks: dict[str, Optional[str]] = field(default_factory=dict)

    @property
    def classified(self) -> bool:
        return self.state is not None


@dataclass(frozen=True)
class Duplicate:
    sequence_no: int


IngestResult = Union[Accepted, Duplicate]


@dataclass(frozen=True)
class Snapshot:
    patient_id: str
    record_length: int = 0
    last_sequence_no: Optional[int] = None
    last_sample: Optional[VitalsSample] = None
    last_location: Optional[LocationFix] = None
    state: Optional[PatientState] = None
    last_alert_ms: Optional[int] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "record_length": self.record_length,
            "last_sequence_no": self.last_sequence_no,
            "last_sample": None if self.last_sample is None else self.last_sample.to_dict(),
            "last_location": None if self.last_location is None else self.last_location.to_dict(),
            "state": None if self.state is None else self.state.label,
            "last_alert_ms": self.last_alert_ms,
        }


class _PatientRecord:
    def __init__(self, patient_id: str):
        self.patient_id = patient_id
        self.lock = threading.Lock()
        self.entries: list[RecordEntry] = []
        self.snapshot = Snapshot(patient_id)
        # Edge detector; a patient starts out Normal.
        self.in_anomaly = False

    def apply(self, e: RecordEntry) -> None:
        self.entries.append(e)
        if e.state is not None:
            self.in_anomaly = e.state is PatientState.ANOMALY
        self.snapshot = Snapshot(
            self.patient_id,
            record_length=len(self.entries),
            last_sequence_no=e.upload.sequence_no,
            last_sample=e.upload.sample,
            last_location=e.upload.location,
            state=e.state,
            last_alert_ms=e.alert_ms if e.alert_ms is not None else self.snapshot.last_alert_ms,
        )


def _alert_of(e: RecordEntry) -> AlertEvent:
    return AlertEvent(e.upload.patient_id, e.alert_ms, e.upload.sample, e.upload.location)


class MedicalServer:
    """Thread-safe. Writes for one patient are serialised by that patient's lock."""

    def __init__(self, tokens: TokenTable, model: Optional[MlpModel] = None,
                 store: Optional[RecordStore] = None, clock: Optional[Callable[[], int]] = None,
                 sinks: Optional[list] = None):
        self.tokens = tokens
        self.model = model
        self.store = store if store is not None else RecordStore(None)
        self.clock = clock or wall_clock_ms
        self.sinks = list(sinks or [])
        self._records: dict[str, _PatientRecord] = {}
        self._registry_lock = threading.Lock()
        self._alerts: list[AlertEvent] = []
        self._alerts_lock = threading.Lock()
        self._replay()

    def _replay(self) -> None:
        for pid, entries in self.store.load_all().items():
            rec = self._record(pid)
            for e in entries:
                rec.apply(e)
                if e.alert_ms is not None:
                    self._alerts.append(_alert_of(e))
        self._alerts.sort(key=lambda a: (a.created_ms, a.patient_id))

    def _record(self, patient_id: str) -> _PatientRecord:
        with self._registry_lock:
            rec = self._records.get(patient_id)
            if rec is None:
                rec = self._records[patient_id] = _PatientRecord(patient_id)
            return rec

    def authenticate(self, token: Optional[str]) -> str:
        return self.tokens.lookup(token)

    def classify_sample(self, sample: VitalsSample) -> Optional[PatientState]:
        if self.model is None:
            return None
        return classify(self.model, normalize(sample, self.model.n_inputs))

    def ingest(self, token: Optional[str], upload: SessionUpload) -> IngestResult:
        pid = self.authenticate(token)
        if upload.patient_id != pid:
            raise Unauthorized("token is not bound to this patient")
        bad = validate_sample(upload.sample)
        if bad:
            raise ValidationError(f"sample out of range: {', '.join(bad)}")
        rec = self._record(pid)
        with rec.lock:
            last = rec.snapshot.last_sequence_no
            # The gateway sends in sequence order, so anything at or below the
            # high-water mark is a retry of something already stored.
            if last is not None and upload.sequence_no <= last:
                return Duplicate(upload.sequence_no)
            state = self.classify_sample(upload.sample)
            now = max(self.clock(), upload.sample.timestamp_ms)
            rising = state is PatientState.ANOMALY and not rec.in_anomaly
            entry = RecordEntry(upload, state, now, now if rising else None)
            self.store.append(entry)
            rec.apply(entry)
            if not rising:
                return Accepted(state)
            event = _alert_of(entry)
            with self._alerts_lock:
                self._alerts.append(event)
        return Accepted(state, event, dispatch(event, self.sinks))

    def _known(self, patient_id: str) -> _PatientRecord:
        with self._registry_lock:
            rec = self._records.get(patient_id)
        if rec is None:
            if patient_id not in self.tokens.patients:
                raise NotFound(patient_id)
            rec = self._record(patient_id)
        return rec

    def get_status(self, patient_id: str) -> Snapshot:
        rec = self._known(patient_id)
        with rec.lock:
            return rec.snapshot

    def query_history(self, patient_id: str, from_ms: Optional[int] = None,
                      to_ms: Optional[int] = None) -> list[RecordEntry]:
        """Accepted uploads with from_ms <= timestamp <= to_ms, in sequence order."""
        if from_ms is not None and to_ms is not None and from_ms > to_ms:
            raise ValueError("from_ms must not exceed to_ms")
        rec = self._known(patient_id)
        with rec.lock:
            entries = list(rec.entries)
        lo = float("-inf") if from_ms is None else from_ms
        hi = float("inf") if to_ms is None else to_ms
        return [e for e in entries if lo <= e.upload.sample.timestamp_ms <= hi]

    def alerts(self, since_ms: int = 0) -> list[AlertEvent]:
        with self._alerts_lock:
            return [a for a in self._alerts if a.created_ms >= since_ms]

    def patients(self) -> list[str]:
        with self._registry_lock:
            return sorted(self._records)

    def close(self) -> None:
        self.store.close()


class ServiceUplink:
    """In-process uplink straight into a MedicalServer, same contract as HTTP."""

    def __init__(self, server: MedicalServer, token: str, patient_id: str):
        self.server = server
        self.token = token
        self.patient_id = patient_id

    def available(self) -> bool:
        return True

    def send(self, entry: OutboxEntry) -> None:
        upload = SessionUpload(self.patient_id, entry.sequence_no, entry.sample, entry.location)
        try:
            self.server.ingest(self.token, upload)
        except (Unauthorized, ValidationError) as exc:
            raise LinkDown(f"server rejected upload: {exc}") from exc
