"""The personal-server loop: frames in, decisions and uploads out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Optional

from mhealth.gateway.config import (
    ConfigError,
    ForwardPolicy,
    SensorRegistration,
    SensorRegistry,
    SessionConfig,
    should_forward,
)
from mhealth.gateway.locator import CellDatabase, UnknownCell, resolve_location
from mhealth.gateway.outbox import Outbox, OutboxEntry, Uplink
from mhealth.sensor.codec import FrameReader
from mhealth.vitals import CellIdentity, LocationFix, VitalsSample

log = logging.getLogger(__name__)

PositionSource = Callable[[int], tuple[Optional[LocationFix], Optional[CellIdentity]]]


class EventKind(str, Enum):
    FORWARDED = "Forwarded"
    SUPPRESSED = "Suppressed"
    BUFFERED = "Buffered"
    FLUSHED = "Flushed"
    DROPPED = "Dropped"
    FRAME_ERROR = "FrameError"


@dataclass(frozen=True)
class GatewayEvent:
    kind: EventKind
    t_ms: int
    sequence_nos: tuple[int, ...] = ()
    sample: Optional[VitalsSample] = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "t_ms": self.t_ms,
            "sequence_nos": list(self.sequence_nos),
            "sample": None if self.sample is None else self.sample.to_dict(),
            "detail": self.detail,
        }


@dataclass
class GatewayStats:
    frames: int = 0
    frame_errors: int = 0
    forwards: int = 0
    suppressed: int = 0
    forwarded_direct: int = 0
    buffered: int = 0
    flushed: int = 0
    dropped: int = 0
    unlocated: int = 0
    acked: list[int] = field(default_factory=list)
    latencies_ms: list[int] = field(default_factory=list)


def _no_position(_t_ms: int):
    return None, None


class Gateway:
    """Single owner of gateway state. Not thread-safe; serialise calls."""

    def __init__(self, policy: ForwardPolicy, db: CellDatabase, uplink: Uplink,
                 clock: Callable[[], int], position: PositionSource = _no_position,
                 outbox: Optional[Outbox] = None):
        self.policy = policy
        self.db = db
        self.uplink = uplink
        self.clock = clock
        self.position = position
        self.outbox = outbox if outbox is not None else Outbox()
        self.registry = SensorRegistry()
        self.stats = GatewayStats()
        self.last_forwarded: Optional[VitalsSample] = None
        self.last_fix: Optional[LocationFix] = None
        self._reader = FrameReader()
        self._session: Optional[SessionConfig] = None

    def register(self, reg: SensorRegistration) -> SessionConfig:
        self._session = self.registry.register(reg)
        return self._session

    def feed(self, chunk: bytes) -> list[GatewayEvent]:
        if self._session is None:
            raise ConfigError("no sensor registered")
        events: list[GatewayEvent] = []
        for res in self._reader.feed(chunk):
            if res.error is not None:
                self.stats.frame_errors += 1
                events.append(GatewayEvent(EventKind.FRAME_ERROR, self.clock(),
                                           detail=f"{type(res.error).__name__}: {res.error}"))
                continue
            events.extend(self.handle_sample(res.sample))
        return events

    def handle_sample(self, raw: VitalsSample) -> list[GatewayEvent]:
        self.stats.frames += 1
        cal = self._session.registration.calibration if self._session else None
        sample = cal.apply(raw) if cal is not None else raw
        now = self.clock()
        events: list[GatewayEvent] = []
        new_seq = None
        if should_forward(self.last_forwarded, sample, self.policy):
            self.last_forwarded = sample
            self.stats.forwards += 1
            new_seq = self.outbox.next_sequence_no
            dropped = self.outbox.enqueue(sample, self._locate(sample))
            if dropped is not None:
                self.stats.dropped += 1
                events.append(GatewayEvent(EventKind.DROPPED, now, (dropped.sequence_no,),
                                           dropped.sample))
        else:
            self.stats.suppressed += 1

        backlog, direct = self._flush(now, new_seq)
        if backlog:
            events.append(backlog)
        if new_seq is None:
            events.append(GatewayEvent(EventKind.SUPPRESSED, now, sample=sample))
        elif direct:
            self.stats.forwarded_direct += 1
            events.append(GatewayEvent(EventKind.FORWARDED, now, (new_seq,), sample))
        else:
            self.stats.buffered += 1
            events.append(GatewayEvent(EventKind.BUFFERED, now, (new_seq,), sample))
        return events

    def flush_backlog(self) -> list[GatewayEvent]:
        """Attempt delivery outside of frame arrival (e.g. a periodic timer)."""
        ev, _ = self._flush(self.clock(), None)
        return [ev] if ev else []

    def _flush(self, now: int, new_seq: Optional[int]) -> tuple[Optional[GatewayEvent], bool]:
        if not len(self.outbox):
            return None, False
        done: list[OutboxEntry] = self.outbox.flush(self.uplink)
        for e in done:
            self.stats.acked.append(e.sequence_no)
            self.stats.latencies_ms.append(now - e.sample.timestamp_ms)
        older = tuple(e.sequence_no for e in done if e.sequence_no != new_seq)
        direct = any(e.sequence_no == new_seq for e in done)
        self.stats.flushed += len(older)
        ev = GatewayEvent(EventKind.FLUSHED, now, older) if older else None
        return ev, direct

    def _locate(self, sample: VitalsSample) -> Optional[LocationFix]:
        gps, cell = self.position(sample.timestamp_ms)
        try:
            fix = resolve_location(gps, cell, self.db)
        except UnknownCell:
            self.stats.unlocated += 1
            log.info("no position for t=%d, reusing last fix", sample.timestamp_ms)
            return self.last_fix
        self.last_fix = fix
        return fix


def run_gateway(stream: Iterable[bytes], gateway: Gateway,
                before_chunk: Optional[Callable[[bytes], None]] = None) -> Iterator[GatewayEvent]:
    """Drive a registered gateway from a byte stream, yielding every event.

    ``before_chunk`` lets a simulation advance its clock to the chunk's
    arrival time before the gateway looks at it.
    """
    for chunk in stream:
        if before_chunk is not None:
            before_chunk(chunk)
        yield from gateway.feed(chunk)
