"""Append-only per-patient record logs (newline-delimited JSON)."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional
from urllib.parse import quote, unquote

from mhealth.vitals import LocationFix, PatientState, VitalsSample


@dataclass(frozen=True)
class SessionUpload:
    patient_id: str
    sequence_no: int
    sample: VitalsSample
    location: Optional[LocationFix]

    def __post_init__(self):
        if not isinstance(self.sequence_no, int) or isinstance(self.sequence_no, bool):
            raise ValueError("sequence_no must be an integer")
        if self.sequence_no < 1:
            raise ValueError("sequence_no must be >= 1")
        if not self.patient_id:
            raise ValueError("patient_id must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "sequence_no": self.sequence_no,
            "sample": self.sample.to_dict(),
            "location": None if self.location is None else self.location.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SessionUpload":
        if not isinstance(d, dict):
            raise ValueError("upload must be a JSON object")
        try:
            loc = d.get("location")
            return cls(
                patient_id=str(d["patient_id"]),
                sequence_no=d["sequence_no"],
                sample=VitalsSample.from_dict(d["sample"]),
                location=None if loc is None else LocationFix.from_dict(loc),
            )
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ValueError(str(exc)) from None


@dataclass(frozen=True)
class RecordEntry:
    """One accepted upload with what the server concluded about it.

    ``state`` is None when no model was configured (Unclassified).
    ``alert_ms`` is set when this upload raised an alert.
    """

    upload: SessionUpload
    state: Optional[PatientState]
    accepted_ms: int
    alert_ms: Optional[int] = None

    def to_dict(self) -> dict[str, Any]:
        d = self.upload.to_dict()
        d["state"] = None if self.state is None else int(self.state)
        d["accepted_ms"] = self.accepted_ms
        d["alert_ms"] = self.alert_ms
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RecordEntry":
        state = d.get("state")
        return cls(
            SessionUpload.from_dict(d),
            None if state is None else PatientState(state),
            int(d["accepted_ms"]),
            d.get("alert_ms"),
        )


class RecordStore:
    """Durable record logs under ``data_dir``, or memory only when it is None.

    ``append`` returns only after the line has been fsynced, so an
    acknowledged upload survives a crash.
    """

    SUFFIX = ".ndjson"

    def __init__(self, data_dir: Optional[str | Path] = None, fsync: bool = True):
        self.data_dir = None if data_dir is None else Path(data_dir)
        self.fsync = fsync
        self._lock = threading.Lock()
        self._files: dict[str, Any] = {}
        if self.data_dir is not None:
            (self.data_dir / "records").mkdir(parents=True, exist_ok=True)

    def _path(self, patient_id: str) -> Path:
        return self.data_dir / "records" / (quote(patient_id, safe="") + self.SUFFIX)

    def append(self, entry: RecordEntry) -> None:
        if self.data_dir is None:
            return
        pid = entry.upload.patient_id
        with self._lock:
            fh = self._files.get(pid)
            if fh is None:
                path = self._path(pid)
                _drop_torn_tail(path)
                fh = self._files[pid] = open(path, "a", encoding="utf-8")
        fh.write(json.dumps(entry.to_dict(), separators=(",", ":")) + "\n")
        fh.flush()
        if self.fsync:
            os.fsync(fh.fileno())

    def load_all(self) -> dict[str, list[RecordEntry]]:
        out: dict[str, list[RecordEntry]] = {}
        if self.data_dir is None:
            return out
        for path in sorted((self.data_dir / "records").glob("*" + self.SUFFIX)):
            pid = unquote(path.name[: -len(self.SUFFIX)])
            entries = []
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.endswith("\n"):
                        # A torn final line was never acknowledged; ignore it.
                        break
                    try:
                        entries.append(RecordEntry.from_dict(json.loads(line)))
                    except (ValueError, KeyError) as exc:
                        raise ValueError(f"{path}:{lineno}: corrupt record: {exc}") from None
            out[pid] = entries
        return out

    def close(self) -> None:
        with self._lock:
            for fh in self._files.values():
                fh.close()
            self._files.clear()


def _drop_torn_tail(path: Path) -> None:
    """Cut an unterminated last line left by a crash mid-write."""
    if not path.exists():
        return
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        with open(path, "r+b") as fh:
            fh.truncate(data.rfind(b"\n") + 1)
