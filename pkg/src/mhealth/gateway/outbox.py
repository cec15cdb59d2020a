"""Bounded store-and-forward queue with ack-gated removal."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Optional, Protocol

from mhealth.vitals import LocationFix, VitalsSample

log = logging.getLogger(__name__)


class LinkDown(ConnectionError):
    """The uplink could not deliver (or could not confirm delivery)."""


@dataclass(frozen=True)
class OutboxEntry:
    sequence_no: int
    sample: VitalsSample
    location: Optional[LocationFix]


class Uplink(Protocol):
    def available(self) -> bool:
        """Whether a send is worth attempting right now."""

    def send(self, entry: OutboxEntry) -> None:
        """Deliver one entry; return only once the server acknowledged it.

        Raises LinkDown when delivery or acknowledgement fails.
        """


class Outbox:
    def __init__(self, capacity: int = 10_000, first_sequence_no: int = 1):
        if capacity < 1:
            raise ValueError("outbox capacity must be >= 1")
        self.capacity = capacity
        self._q: deque[OutboxEntry] = deque()
        self._next_seq = first_sequence_no
        self.last_error: Optional[LinkDown] = None

    def __len__(self) -> int:
        return len(self._q)

    def __iter__(self) -> Iterator[OutboxEntry]:
        return iter(list(self._q))

    @property
    def next_sequence_no(self) -> int:
        return self._next_seq

    def enqueue(self, sample: VitalsSample, fix: Optional[LocationFix]) -> Optional[OutboxEntry]:
        """Append a reading; return the evicted oldest entry if the box was full."""
        entry = OutboxEntry(self._next_seq, sample, fix)
        self._next_seq += 1
        dropped = None
        if len(self._q) >= self.capacity:
            dropped = self._q.popleft()
            log.warning("outbox full, dropped sequence %d", dropped.sequence_no)
        self._q.append(entry)
        return dropped

    def flush(self, uplink: Uplink) -> list[OutboxEntry]:
        """Upload in sequence order until the link fails or the box is empty.

        Each entry is removed only after its acknowledgement, so a failure
        mid-flush leaves every unconfirmed entry in place for the next try.
        Returns the acknowledged entries.
        """
        done = []
        while self._q and uplink.available():
            head = self._q[0]
            try:
                uplink.send(head)
            except LinkDown as exc:
                self.last_error = exc
                break
            self._q.popleft()
            done.append(head)
        return done


def flush(outbox: Outbox, uplink: Uplink) -> int:
    return len(outbox.flush(uplink))
