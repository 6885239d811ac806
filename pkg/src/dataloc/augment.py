"""Snapshot synthesis from beacon streams.

A capture session is shuffled, truncated to a portion of its frames and
averaged per device; sweeping the portion over a range and repeating each
portion several times turns one session into many location signatures with
realistic device dropout and signal-strength spread.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from dataloc import rng
from dataloc.errors import EmptyReadings, EmptySession, EmptyWindow, InvalidRange, MalformedLine
from dataloc.ingest import (
    RSSI_MAX,
    RSSI_MIN,
    SNAPSHOT_HEADER,
    BeaconRecord,
    CaptureSession,
    SystemSnapshot,
    _csv_line,
    _data_lines,
    _rows,
    parse_system_snapshots_text,
    valid_bssid,
)

BP_PER_UNIT = 10_000
DEFAULT_WINDOW_US = 10_000_000

AUGMENTED_HEADER = SNAPSHOT_HEADER + ("portion_bp", "rep_index", "frames_used")


def to_bp(fraction) -> int:
    """Convert a portion given as a decimal (0.05, "0.125") to basis points."""
    bp = Fraction(str(fraction)) * BP_PER_UNIT
    if bp.denominator != 1:
        raise InvalidRange(f"{fraction} is not a whole number of basis points")
    return int(bp)


def format_bp(bp: int) -> str:
    return repr(bp / BP_PER_UNIT)


@dataclass(frozen=True)
class PortionRange:
    """Sweep of portions ``start, start+step, ... <= end``, each repeated ``reps`` times."""

    start_bp: int
    end_bp: int
    step_bp: int
    reps: int = 1

    def __post_init__(self):
        if not 0 < self.start_bp <= self.end_bp <= BP_PER_UNIT:
            raise InvalidRange(
                f"need 0 < start <= end <= {BP_PER_UNIT} bp, got {self.start_bp}..{self.end_bp}"
            )
        if self.step_bp <= 0:
            raise InvalidRange("step must be positive")
        if self.reps < 1:
            raise InvalidRange("reps must be >= 1")

    @classmethod
    def from_fractions(cls, start, end, step, reps: int = 1) -> "PortionRange":
        return cls(to_bp(start), to_bp(end), to_bp(step), int(reps))

    @classmethod
    def parse(cls, text: str) -> "PortionRange":
        """Parse the ``start,end,step,reps`` notation, e.g. ``0.4,1.0,0.2,5``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise InvalidRange(f"expected start,end,step,reps, got {text!r}")
        try:
            reps = int(parts[3])
        except ValueError:
            raise InvalidRange(f"reps must be an integer, got {parts[3]!r}") from None
        try:
            return cls.from_fractions(parts[0], parts[1], parts[2], reps)
        except (ValueError, ArithmeticError):
            raise InvalidRange(f"cannot parse range {text!r}") from None

    def portions(self) -> list[int]:
        count = (self.end_bp - self.start_bp) // self.step_bp + 1
        return [self.start_bp + i * self.step_bp for i in range(count)]

    @property
    def count(self) -> int:
        """Snapshots produced per session."""
        return len(self.portions()) * self.reps

    def __str__(self) -> str:
        return ",".join([format_bp(self.start_bp), format_bp(self.end_bp),
                         format_bp(self.step_bp), str(self.reps)])


@dataclass(frozen=True)
class Provenance:
    portion_bp: int
    rep_index: int
    frames_used: int


@dataclass(frozen=True)
class Snapshot:
    """A location signature: averaged signal strength per device.

    ``provenance`` is None for raw snapshots (system scans, online windows).
    """

    zone_label: str
    position_id: str
    readings: Mapping[str, float] = field(default_factory=dict)
    provenance: Provenance | None = None

    def __post_init__(self):
        object.__setattr__(self, "readings", dict(self.readings))
        if not self.readings:
            raise EmptyReadings(f"snapshot at {self.position_id!r} has no readings")
        for bssid, value in self.readings.items():
            if not RSSI_MIN <= value <= RSSI_MAX:
                raise ValueError(f"reading {value} for {bssid} outside [{RSSI_MIN}, {RSSI_MAX}]")


def chunk_size(portion_bp: int, n: int) -> int:
    """``ceil(portion * n)``, at least 1."""
    return max(1, -(-portion_bp * n // BP_PER_UNIT))


class _Frames:
    """Session records as parallel arrays of device codes and rssi."""

    def __init__(self, records: Sequence[BeaconRecord]):
        self.bssids = sorted({r.bssid for r in records})
        index = {b: i for i, b in enumerate(self.bssids)}
        self.codes = np.fromiter((index[r.bssid] for r in records), np.int64, len(records))
        self.rssi = np.fromiter((r.rssi_dbm for r in records), np.float64, len(records))

    def __len__(self):
        return len(self.codes)

    def average(self, take) -> dict[str, float]:
        codes = self.codes[take]
        n_dev = len(self.bssids)
        sums = np.bincount(codes, weights=self.rssi[take], minlength=n_dev)
        counts = np.bincount(codes, minlength=n_dev)
        present = np.flatnonzero(counts)
        means = sums[present] / counts[present]
        return {self.bssids[i]: float(m) for i, m in zip(present.tolist(), means.tolist())}


def dataloc_plus(session: CaptureSession, portion_range: PortionRange, seed: int) -> list[Snapshot]:
    """Generate ``reps`` snapshots for each portion of the range.

    Every (portion, rep) pair shuffles the session's records from their
    original order with an independent sub-seed, keeps the first
    ``ceil(portion * N)`` frames and averages rssi per device. Output is
    ordered by portion, then rep.
    """
    if not session.records:
        raise EmptySession(session.position_id)
    frames = _Frames(session.records)
    n = len(frames)
    out = []
    for portion_bp in portion_range.portions():
        k = chunk_size(portion_bp, n)
        for rep in range(1, portion_range.reps + 1):
            if k == n:
                take = slice(None)
            else:
                perm = rng.permutation(rng.derive_seed(seed, portion_bp, rep), n)
                take = perm[:k]
            out.append(Snapshot(
                session.zone_label,
                session.position_id,
                frames.average(take),
                Provenance(portion_bp, rep, k),
            ))
    return out


def online_snapshot(window: Sequence[BeaconRecord], position_id: str = "",
                    zone_label: str = "") -> Snapshot:
    """Average every frame of the window per device; nothing is dropped."""
    if not window:
        raise EmptyWindow("no beacon frames in window")
    return Snapshot(zone_label, position_id, _Frames(window).average(slice(None)))


def select_window(records: Sequence[BeaconRecord], now_us: int,
                  window_us: int = DEFAULT_WINDOW_US) -> list[BeaconRecord]:
    """Records with ``now_us - window_us < timestamp_us <= now_us``."""
    if window_us <= 0:
        raise ValueError("window_us must be positive")
    lo = now_us - window_us
    return [r for r in records if lo < r.timestamp_us <= now_us]


def system_snapshots_to_snapshots(snaps: Iterable[SystemSnapshot]) -> list[Snapshot]:
    return [
        Snapshot(s.zone_label, s.position_id, {b: float(v) for b, v in s.readings.items()})
        for s in snaps
    ]


# -- snapshot files ---------------------------------------------------------

def format_snapshots(snapshots: Iterable[Snapshot]) -> str:
    out = [_csv_line(AUGMENTED_HEADER)]
    for idx, snap in enumerate(snapshots):
        prov = snap.provenance
        extra = ("", "", "") if prov is None else (prov.portion_bp, prov.rep_index, prov.frames_used)
        for bssid in sorted(snap.readings):
            out.append(_csv_line(
                (snap.position_id, snap.zone_label, idx, bssid, repr(float(snap.readings[bssid])))
                + tuple(extra)
            ))
    return "".join(out)


def write_snapshots(snapshots: Iterable[Snapshot], path) -> None:
    Path(path).write_text(format_snapshots(snapshots), encoding="utf-8", newline="\n")


def _parse_float(value: str, line_no: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise MalformedLine(line_no, f"rssi {value!r} is not a number") from None


def parse_snapshots_text(text: str) -> list[Snapshot]:
    """Read an augmented snapshot file; plain system-snapshot files are accepted too."""
    first = next((line for _, line in _data_lines(text) if not line.startswith("#")), "")
    if tuple(next(csv.reader([first]), [])) == SNAPSHOT_HEADER:
        return system_snapshots_to_snapshots(parse_system_snapshots_text(text))

    groups: dict[int, tuple[str, str, dict, Provenance | None]] = {}
    for line_no, f in _rows(_data_lines(text), AUGMENTED_HEADER):
        pos, zone, idx, bssid, rssi, portion, rep, used = f
        if not pos or not zone:
            raise MalformedLine(line_no, "empty position_id or zone_label")
        if not valid_bssid(bssid):
            raise MalformedLine(line_no, f"bssid {bssid!r} not in canonical form")
        value = _parse_float(rssi, line_no)
        if not RSSI_MIN <= value <= RSSI_MAX:
            raise MalformedLine(line_no, f"rssi {value} outside [{RSSI_MIN}, {RSSI_MAX}]")
        try:
            idx_i = int(idx)
            prov = None if portion == rep == used == "" else Provenance(int(portion), int(rep), int(used))
        except ValueError:
            raise MalformedLine(line_no, "non-integer index or provenance field") from None
        if idx_i not in groups:
            groups[idx_i] = (pos, zone, {}, prov)
        g_pos, g_zone, readings, g_prov = groups[idx_i]
        if (g_pos, g_zone, g_prov) != (pos, zone, prov):
            raise MalformedLine(line_no, f"snapshot {idx_i} fields disagree between rows")
        if bssid in readings:
            raise MalformedLine(line_no, f"duplicate reading for {bssid}")
        readings[bssid] = value
    return [Snapshot(zone, pos, readings, prov) for pos, zone, readings, prov in groups.values()]


def parse_snapshots(path) -> list[Snapshot]:
    return parse_snapshots_text(Path(path).read_text(encoding="utf-8"))
