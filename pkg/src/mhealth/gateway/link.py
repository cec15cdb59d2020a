"""Scripted connectivity and the concrete uplinks the gateway can use."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import httpx

from mhealth.gateway.outbox import LinkDown, OutboxEntry


@dataclass(frozen=True)
class LinkSegment:
    start_s: float
    end_s: float
    up: bool


class LinkScript:
    """Up/down timeline in scenario seconds. Time not covered is 'up'."""

    def __init__(self, segments: list[LinkSegment] | None = None):
        segs = sorted(segments or [], key=lambda s: s.start_s)
        for a, b in zip(segs, segs[1:]):
            if b.start_s < a.end_s:
                raise ValueError(f"link segments overlap at {b.start_s}")
        for s in segs:
            if not s.start_s < s.end_s:
                raise ValueError(f"empty link segment {s}")
        self.segments = segs

    def is_up(self, t_s: float) -> bool:
        for s in self.segments:
            if s.start_s <= t_s < s.end_s:
                return s.up
        return True

    def down_seconds(self, duration_s: float) -> float:
        return sum(max(0.0, min(s.end_s, duration_s) - s.start_s)
                   for s in self.segments if not s.up)

    @classmethod
    def always_up(cls) -> "LinkScript":
        return cls([])

    @classmethod
    def from_csv(cls, path: str | Path) -> "LinkScript":
        segs = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), start=2):
                state = row["state"].strip().lower()
                if state not in ("up", "down"):
                    raise ValueError(f"{path}:{lineno}: state must be up or down")
                segs.append(LinkSegment(float(row["start_s"]), float(row["end_s"]), state == "up"))
        return cls(segs)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["start_s", "end_s", "state"])
            for s in self.segments:
                w.writerow([s.start_s, s.end_s, "up" if s.up else "down"])


class ScriptedUplink:
    """Gate another uplink with a link script driven by a clock in ms."""

    def __init__(self, inner, script: LinkScript, clock: Callable[[], int], origin_ms: int = 0):
        self.inner = inner
        self.script = script
        self.clock = clock
        self.origin_ms = origin_ms

    def available(self) -> bool:
        return self.script.is_up((self.clock() - self.origin_ms) / 1000.0)

    def send(self, entry: OutboxEntry) -> None:
        if not self.available():
            raise LinkDown("scripted outage")
        self.inner.send(entry)


def upload_body(patient_id: str, entry: OutboxEntry) -> dict:
    return {
        "patient_id": patient_id,
        "sequence_no": entry.sequence_no,
        "sample": entry.sample.to_dict(),
        "location": None if entry.location is None else entry.location.to_dict(),
    }


class HttpUplink:
    """POST each entry to a medical server's ingest endpoint."""

    def __init__(self, base_url: str, token: str, patient_id: str,
                 client: Optional[httpx.Client] = None, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.patient_id = patient_id
        self.client = client or httpx.Client(timeout=timeout)

    def available(self) -> bool:
        return True

    def send(self, entry: OutboxEntry) -> None:
        try:
            r = self.client.post(
                f"{self.base_url}/v1/ingest",
                json=upload_body(self.patient_id, entry),
                headers={"Authorization": f"Bearer {self.token}"},
            )
        except httpx.HTTPError as exc:
            raise LinkDown(str(exc)) from exc
        if r.status_code != 200:
            # Rejections stay queued; the gateway never discards unacknowledged data.
            raise LinkDown(f"server answered {r.status_code}: {r.text[:200]}")
