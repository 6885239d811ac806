"""Beacon-log and system-snapshot file formats.

Beacon log (UTF-8, LF, ``#`` comment lines ignored)::

    position_id,zone_label,timestamp_us,bssid,ssid,channel,band,rssi_dbm
    p1,room1,0,aa:bb:cc:dd:ee:01,ward-net,6,2.4GHz,-61

An empty ssid field marks a hidden network. A comment of the form
``#@duration <position_id> <duration_us>`` records the capture length of a
session; without it the duration is the last timestamp of the session.

System snapshots::

    position_id,zone_label,snapshot_index,bssid,rssi_dbm

Rows sharing ``(position_id, snapshot_index)`` form one snapshot.
"""

from __future__ import annotations

import csv
import enum
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from dataloc.errors import (
    BandChannelMismatch,
    DuplicatePosition,
    EmptyReadings,
    EmptySession,
    MalformedLine,
)

BEACON_HEADER = (
    "position_id", "zone_label", "timestamp_us", "bssid",
    "ssid", "channel", "band", "rssi_dbm",
)
SNAPSHOT_HEADER = ("position_id", "zone_label", "snapshot_index", "bssid", "rssi_dbm")

RSSI_MIN = -99
RSSI_MAX = 0
FILL_DBM = -100

_BSSID_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")
_DURATION_PREFIX = "#@duration "


class Band(enum.Enum):
    GHZ_2_4 = "2.4GHz"
    GHZ_5 = "5GHz"

    @classmethod
    def for_channel(cls, channel: int) -> "Band | None":
        if 1 <= channel <= 14:
            return cls.GHZ_2_4
        if 32 <= channel <= 177:
            return cls.GHZ_5
        return None


def valid_bssid(bssid: str) -> bool:
    return bool(_BSSID_RE.match(bssid))


def valid_rssi(rssi) -> bool:
    return RSSI_MIN <= rssi <= RSSI_MAX


@dataclass(frozen=True)
class BeaconRecord:
    """One received beacon frame."""

    timestamp_us: int
    bssid: str
    ssid: str | None
    channel: int
    band: Band
    rssi_dbm: int

    def __post_init__(self):
        if not valid_bssid(self.bssid):
            raise ValueError(f"bad bssid {self.bssid!r}")
        if not valid_rssi(self.rssi_dbm):
            raise ValueError(f"rssi {self.rssi_dbm} outside [{RSSI_MIN}, {RSSI_MAX}]")
        if Band.for_channel(self.channel) is not self.band:
            raise ValueError(f"channel {self.channel} not in band {self.band.value}")
        if self.timestamp_us < 0:
            raise ValueError("negative timestamp")

    @property
    def hidden(self) -> bool:
        return not self.ssid


@dataclass(frozen=True)
class CaptureSession:
    position_id: str
    zone_label: str
    records: tuple[BeaconRecord, ...]
    duration_us: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise EmptySession(self.position_id)
        last = -1
        for rec in self.records:
            if rec.timestamp_us < last:
                raise ValueError(f"timestamps decrease in session {self.position_id!r}")
            last = rec.timestamp_us
        if last > self.duration_us:
            raise ValueError(f"timestamp {last} beyond duration {self.duration_us}")

    @property
    def bssids(self) -> list[str]:
        return sorted({r.bssid for r in self.records})


@dataclass(frozen=True)
class SystemSnapshot:
    """One reading set from a system scan tool (``airport -s`` style)."""

    position_id: str
    zone_label: str
    readings: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "readings", dict(self.readings))
        if not self.readings:
            raise EmptyReadings(f"snapshot at {self.position_id!r} has no readings")
        for bssid, rssi in self.readings.items():
            if not valid_bssid(bssid):
                raise ValueError(f"bad bssid {bssid!r}")
            if not valid_rssi(rssi):
                raise ValueError(f"rssi {rssi} outside [{RSSI_MIN}, {RSSI_MAX}]")


def hidden_bssids(sessions: Iterable[CaptureSession]) -> frozenset[str]:
    """Devices that never advertised an SSID in any of the sessions."""
    seen: dict[str, bool] = {}
    for s in sessions:
        for r in s.records:
            seen[r.bssid] = seen.get(r.bssid, True) and r.hidden
    return frozenset(b for b, hidden in seen.items() if hidden)


def _data_lines(text: str) -> Iterator[tuple[int, str]]:
    for line_no, line in enumerate(text.split("\n"), start=1):
        if line.endswith("\r"):
            line = line[:-1]
        if not line:
            continue
        yield line_no, line


def _parse_int(value: str, line_no: int, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise MalformedLine(line_no, f"{name} {value!r} is not an integer") from None


def _rows(lines: Iterable[tuple[int, str]], header: tuple[str, ...]):
    """Yield ``(line_no, fields)`` for data rows, checking the header first."""
    seen_header = False
    for line_no, line in lines:
        if line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if not seen_header:
            if tuple(f.strip() for f in fields) != header:
                raise MalformedLine(line_no, "missing or unexpected header")
            seen_header = True
            continue
        if len(fields) != len(header):
            raise MalformedLine(
                line_no, f"expected {len(header)} fields, got {len(fields)}"
            )
        yield line_no, fields
    if not seen_header:
        raise MalformedLine(1, "missing header")


def parse_beacon_log_text(text: str) -> list[CaptureSession]:
    records: dict[str, list[BeaconRecord]] = {}
    zones: dict[str, str] = {}
    durations: dict[str, int] = {}
    order: list[str] = []
    lines = list(_data_lines(text))

    for line_no, line in lines:
        if line.startswith(_DURATION_PREFIX):
            parts = line[len(_DURATION_PREFIX):].split()
            if len(parts) != 2:
                raise MalformedLine(line_no, "bad duration directive")
            durations[parts[0]] = _parse_int(parts[1], line_no, "duration_us")
            if parts[0] not in records:
                records[parts[0]] = []
                order.append(parts[0])

    for line_no, f in _rows(lines, BEACON_HEADER):
        pos, zone, ts, bssid, ssid, channel, band, rssi = f
        if not pos or not zone:
            raise MalformedLine(line_no, "empty position_id or zone_label")
        ts_i = _parse_int(ts, line_no, "timestamp_us")
        ch_i = _parse_int(channel, line_no, "channel")
        rssi_i = _parse_int(rssi, line_no, "rssi_dbm")
        if not valid_bssid(bssid):
            raise MalformedLine(line_no, f"bssid {bssid!r} not in canonical form")
        if not valid_rssi(rssi_i):
            raise MalformedLine(line_no, f"rssi {rssi_i} outside [{RSSI_MIN}, {RSSI_MAX}]")
        if ts_i < 0:
            raise MalformedLine(line_no, "negative timestamp")
        try:
            band_e = Band(band)
        except ValueError:
            raise MalformedLine(line_no, f"unknown band {band!r}") from None
        if Band.for_channel(ch_i) is not band_e:
            raise BandChannelMismatch(line_no, ch_i, band)

        if pos in zones and zones[pos] != zone:
            raise DuplicatePosition(pos, {zones[pos], zone})
        zones[pos] = zone
        if pos not in records:
            records[pos] = []
            order.append(pos)
        recs = records[pos]
        if recs and ts_i < recs[-1].timestamp_us:
            raise MalformedLine(line_no, f"timestamp decreases within {pos!r}")
        recs.append(BeaconRecord(ts_i, bssid, ssid or None, ch_i, band_e, rssi_i))

    sessions = []
    for pos in order:
        recs = records[pos]
        if not recs:
            raise EmptySession(pos)
        duration = durations.get(pos, recs[-1].timestamp_us)
        if duration < recs[-1].timestamp_us:
            raise MalformedLine(0, f"duration of {pos!r} shorter than its last timestamp")
        sessions.append(CaptureSession(pos, zones[pos], tuple(recs), duration))
    return sessions


def parse_beacon_log(path) -> list[CaptureSession]:
    """Load every capture session in a beacon log, in order of first appearance."""
    return parse_beacon_log_text(Path(path).read_text(encoding="utf-8"))


def _csv_line(fields: Sequence) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(fields)
    return buf.getvalue()


def format_beacon_log(sessions: Iterable[CaptureSession]) -> str:
    out = [_csv_line(BEACON_HEADER)]
    for s in sessions:
        out.append(f"{_DURATION_PREFIX}{s.position_id} {s.duration_us}\n")
        for r in s.records:
            out.append(_csv_line((
                s.position_id, s.zone_label, r.timestamp_us, r.bssid,
                r.ssid or "", r.channel, r.band.value, r.rssi_dbm,
            )))
    return "".join(out)


def write_beacon_log(sessions: Iterable[CaptureSession], path) -> None:
    Path(path).write_text(format_beacon_log(sessions), encoding="utf-8", newline="\n")


def parse_system_snapshots_text(text: str) -> list[SystemSnapshot]:
    groups: dict[tuple[str, int], dict[str, int]] = {}
    zones: dict[str, str] = {}
    for line_no, f in _rows(_data_lines(text), SNAPSHOT_HEADER):
        pos, zone, idx, bssid, rssi = f
        if not pos or not zone:
            raise MalformedLine(line_no, "empty position_id or zone_label")
        idx_i = _parse_int(idx, line_no, "snapshot_index")
        rssi_i = _parse_int(rssi, line_no, "rssi_dbm")
        if not valid_bssid(bssid):
            raise MalformedLine(line_no, f"bssid {bssid!r} not in canonical form")
        if not valid_rssi(rssi_i):
            raise MalformedLine(line_no, f"rssi {rssi_i} outside [{RSSI_MIN}, {RSSI_MAX}]")
        if pos in zones and zones[pos] != zone:
            raise DuplicatePosition(pos, {zones[pos], zone})
        zones[pos] = zone
        readings = groups.setdefault((pos, idx_i), {})
        if bssid in readings:
            raise MalformedLine(line_no, f"duplicate reading for {bssid}")
        readings[bssid] = rssi_i
    return [SystemSnapshot(pos, zones[pos], r) for (pos, _), r in groups.items()]


def parse_system_snapshots(path) -> list[SystemSnapshot]:
    return parse_system_snapshots_text(Path(path).read_text(encoding="utf-8"))


def format_system_snapshots(snapshots: Iterable[SystemSnapshot]) -> str:
    out = [_csv_line(SNAPSHOT_HEADER)]
    counters: dict[str, int] = {}
    for snap in snapshots:
        idx = counters.get(snap.position_id, 0)
        counters[snap.position_id] = idx + 1
        for bssid in sorted(snap.readings):
            out.append(_csv_line(
                (snap.position_id, snap.zone_label, idx, bssid, snap.readings[bssid])
            ))
    return "".join(out)


def write_system_snapshots(snapshots: Iterable[SystemSnapshot], path) -> None:
    Path(path).write_text(
        format_system_snapshots(snapshots), encoding="utf-8", newline="\n"
    )
