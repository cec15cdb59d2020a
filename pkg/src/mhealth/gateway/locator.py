"""Hybrid positioning: GPS when there is a fix, serving-cell lookup otherwise."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from mhealth.vitals import CellIdentity, LocationFix, LocationSource

CELL_CSV_HEADER = ["mcc", "mnc", "lac", "ci", "lat", "lon", "accuracy_m"]


class UnknownCell(LookupError):
    pass


@dataclass(frozen=True)
class CellRecord:
    lat_deg: float
    lon_deg: float
    accuracy_m: float


class CellDatabase:
    def __init__(self, rows: Iterable[tuple[CellIdentity, CellRecord]] = ()):
        self._rows: dict[CellIdentity, CellRecord] = {}
        for cell, rec in rows:
            self.add(cell, rec)

    def add(self, cell: CellIdentity, rec: CellRecord) -> None:
        if cell in self._rows:
            raise ValueError(f"duplicate cell {cell}")
        # Borrow LocationFix's checks for coordinate ranges and precision floor.
        LocationFix(rec.lat_deg, rec.lon_deg, LocationSource.CELL, rec.accuracy_m)
        self._rows[cell] = rec

    def get(self, cell: CellIdentity) -> Optional[CellRecord]:
        return self._rows.get(cell)

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, cell: CellIdentity) -> bool:
        return cell in self._rows

    def cells(self) -> list[CellIdentity]:
        return list(self._rows)

    @classmethod
    def from_csv(cls, path: str | Path) -> "CellDatabase":
        db = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != CELL_CSV_HEADER:
                raise ValueError(f"{path}: expected header {','.join(CELL_CSV_HEADER)}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    mcc, mnc, lac, ci = (int(x) for x in row[:4])
                    lat, lon, acc = (float(x) for x in row[4:7])
                    if len(row) != 7:
                        raise ValueError(f"expected 7 columns, got {len(row)}")
                    db.add(CellIdentity(mcc, mnc, lac, ci), CellRecord(lat, lon, acc))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        return db

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CELL_CSV_HEADER)
            for c, r in self._rows.items():
                w.writerow([c.mcc, c.mnc, c.lac, c.ci, repr(r.lat_deg), repr(r.lon_deg),
                            repr(r.accuracy_m)])


def resolve_location(gps: Optional[LocationFix], cell: Optional[CellIdentity],
                     db: CellDatabase) -> LocationFix:
    """Pick the patient's position without ever inventing coordinates.

    Raises UnknownCell when there is no GPS fix and the serving cell is not
    in the database (or no cell is known at all).
    """
    if gps is not None:
        if gps.source is LocationSource.GPS:
            return gps
        return dataclasses.replace(gps, source=LocationSource.GPS)
    rec = db.get(cell) if cell is not None else None
    if rec is None:
        raise UnknownCell(f"no GPS fix and cell {cell} not in database")
    return LocationFix(rec.lat_deg, rec.lon_deg, LocationSource.CELL, rec.accuracy_m)
