"""Synthetic indoor RF scenarios.

Received power follows a log-distance law with a per-wall penalty:

    rssi = tx - L0 - 10 n log10(max(d, d0) / d0) - wall_loss * walls

Each received beacon adds Gaussian noise (in dB), is rounded to an integer,
clamped to [-99, 0] and discarded when it falls below the detection floor.
The floor is what makes weak devices drop in and out of a capture.

Scenario files are JSON; see :func:`scenario_to_dict` for the schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from dataloc import rng
from dataloc.errors import UnknownPosition
from dataloc.ingest import RSSI_MAX, RSSI_MIN, Band, BeaconRecord, CaptureSession, SystemSnapshot

INTERVAL_JITTER = 0.10


@dataclass(frozen=True)
class Room:
    zone_label: str
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def edges(self):
        a, b, c, d = (self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1)
        return [(a, b), (b, c), (d, c), (a, d)]


@dataclass(frozen=True)
class AccessPoint:
    bssid: str
    x: float
    y: float
    tx_power_dbm: float
    channel: int
    band: Band
    beacon_interval_ms: float = 102.4
    ssid: str | None = None


@dataclass(frozen=True)
class Position:
    position_id: str
    zone_label: str
    x: float
    y: float


@dataclass(frozen=True)
class PathLoss:
    exponent: float = 3.0
    reference_distance_m: float = 1.0
    reference_loss_db: float = 40.0


@dataclass(frozen=True)
class SimScenario:
    rooms: tuple[Room, ...]
    aps: tuple[AccessPoint, ...]
    positions: tuple[Position, ...]
    pathloss: PathLoss = field(default_factory=PathLoss)
    shadowing_sigma_db: float = 4.0
    detection_floor_dbm: float = -85.0
    wall_loss_db: float = 5.0
    session_duration_s: float = 60.0
    seed: int = 0

    def __post_init__(self):
        for name in ("rooms", "aps", "positions"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.pathloss.exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.pathloss.reference_distance_m <= 0:
            raise ValueError("reference distance must be positive")
        if self.detection_floor_dbm >= 0:
            raise ValueError("detection floor must be negative")
        if self.shadowing_sigma_db < 0 or self.wall_loss_db < 0:
            raise ValueError("sigma and wall loss must be non-negative")
        if self.session_duration_s <= 0:
            raise ValueError("session duration must be positive")
        for ap in self.aps:
            if ap.beacon_interval_ms <= 0:
                raise ValueError(f"beacon interval of {ap.bssid} must be positive")
            if Band.for_channel(ap.channel) is not ap.band:
                raise ValueError(f"channel {ap.channel} of {ap.bssid} not in {ap.band.value}")
        ids = [p.position_id for p in self.positions]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate position ids")
        for p in self.positions:
            inside = [r for r in self.rooms if r.contains(p.x, p.y)]
            if len(inside) != 1:
                raise ValueError(f"position {p.position_id} lies in {len(inside)} rooms")
            if inside[0].zone_label != p.zone_label:
                raise ValueError(f"position {p.position_id} labelled {p.zone_label!r} "
                                 f"but lies in {inside[0].zone_label!r}")

    @property
    def zones(self) -> list[str]:
        return sorted({r.zone_label for r in self.rooms})

    def position(self, position_id: str) -> Position:
        for p in self.positions:
            if p.position_id == position_id:
                return p
        raise UnknownPosition(f"no position {position_id!r} in scenario")

    def walls(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        """Unique room-boundary segments (shared edges count once)."""
        seen = {}
        for room in self.rooms:
            for a, b in room.edges():
                seen.setdefault((min(a, b), max(a, b)), None)
        return list(seen)


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segments_cross(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    return (
        (d1 == 0 and _on_segment(q1, q2, p1)) or (d2 == 0 and _on_segment(q1, q2, p2))
        or (d3 == 0 and _on_segment(p1, p2, q1)) or (d4 == 0 and _on_segment(p1, p2, q2))
    )


def walls_between(scenario: SimScenario, a, b) -> int:
    return sum(segments_cross(a, b, w0, w1) for w0, w1 in scenario.walls())


def rssi_at(scenario: SimScenario, ap: AccessPoint, point) -> float:
    """Expected (noise-free, unquantised) received power of ``ap`` at ``point``."""
    pl = scenario.pathloss
    d = math.dist((ap.x, ap.y), point)
    distance_loss = 10 * pl.exponent * math.log10(max(d, pl.reference_distance_m) / pl.reference_distance_m)
    walls = walls_between(scenario, (ap.x, ap.y), tuple(point))
    return ap.tx_power_dbm - pl.reference_loss_db - distance_loss - scenario.wall_loss_db * walls


def _generator(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=rng.derive_seed(*parts)))


def _receive(expected: float, sigma: float, floor: float, gen: np.random.Generator, n: int):
    """Noisy integer readings and the mask of those above the floor."""
    noisy = expected + gen.normal(0.0, 1.0, n) * sigma
    values = np.clip(np.rint(noisy), RSSI_MIN, RSSI_MAX).astype(np.int64)
    return values, values >= floor


def simulate_session(scenario: SimScenario, position_id: str) -> CaptureSession:
    """Beacon stream captured at one position over the scenario's session length."""
    pos = scenario.position(position_id)
    duration_us = int(round(scenario.session_duration_s * 1e6))
    frames = []
    for i, ap in enumerate(scenario.aps):
        gen = _generator(scenario.seed, "session", position_id, i)
        interval_us = ap.beacon_interval_ms * 1000
        n_max = int(duration_us / (interval_us * (1 - INTERVAL_JITTER))) + 2
        offset = gen.uniform(0, interval_us)
        gaps = interval_us * (1 + gen.uniform(-INTERVAL_JITTER, INTERVAL_JITTER, n_max))
        times = np.rint(offset + np.concatenate(([0.0], np.cumsum(gaps[:-1])))).astype(np.int64)
        times = times[times <= duration_us]
        expected = rssi_at(scenario, ap, (pos.x, pos.y))
        values, kept = _receive(expected, scenario.shadowing_sigma_db,
                                scenario.detection_floor_dbm, gen, len(times))
        for t, v in zip(times[kept].tolist(), values[kept].tolist()):
            frames.append((t, ap.bssid, ap, v))
    frames.sort(key=lambda f: (f[0], f[1]))
    records = tuple(BeaconRecord(t, b, ap.ssid, ap.channel, ap.band, v) for t, b, ap, v in frames)
    return CaptureSession(pos.position_id, pos.zone_label, records, duration_us)


def simulate_system_snapshots(scenario: SimScenario, position_id: str, count: int) -> list[SystemSnapshot]:
    """``count`` independent scans: one noisy reading per detectable device."""
    if count < 1:
        raise ValueError("count must be >= 1")
    pos = scenario.position(position_id)
    per_ap = []
    for i, ap in enumerate(scenario.aps):
        gen = _generator(scenario.seed, "snapshots", position_id, i)
        expected = rssi_at(scenario, ap, (pos.x, pos.y))
        per_ap.append(_receive(expected, scenario.shadowing_sigma_db,
                               scenario.detection_floor_dbm, gen, count))
    out = []
    for k in range(count):
        readings = {
            ap.bssid: int(values[k])
            for ap, (values, kept) in zip(scenario.aps, per_ap) if kept[k]
        }
        out.append(SystemSnapshot(pos.position_id, pos.zone_label, readings))
    return out


def simulate_all(scenario: SimScenario, snapshots_per_position: int = 0):
    """Sessions (and optionally system snapshots) for every position."""
    sessions = [simulate_session(scenario, p.position_id) for p in scenario.positions]
    snaps = [
        s for p in scenario.positions
        for s in (simulate_system_snapshots(scenario, p.position_id, snapshots_per_position)
                  if snapshots_per_position else [])
    ]
    return sessions, snaps


def default_hospital_like_scenario(seed: int = 0, spread: float = 0.6) -> SimScenario:
    """Eight 6 x 5 m rooms on both sides of a 3 m corridor, 20 devices.

    Six corridor access points, one weaker device per room (printers, TVs)
    and six distant access points in neighbouring wings; two of the devices
    hide their SSID. Every room holds 2-3 measurement positions within
    ``spread`` metres of its centre (per axis). Beacon
    intervals are the effective ~820 ms a channel-hopping receiver sees
    (102.4 ms on one of eight dwell channels), giving roughly 1000-1500
    captured frames per 60 s session.
    """
    gen = _generator(seed, "scenario")
    rooms = []
    for row, (y0, y1) in enumerate(((0.0, 5.0), (8.0, 13.0))):
        for col in range(4):
            rooms.append(Room(f"room{row * 4 + col + 1}", col * 6.0, y0, col * 6.0 + 6.0, y1))

    channels_24 = (1, 6, 11)
    channels_5 = (36, 44, 52, 100, 149, 157)
    mac_prefix = gen.integers(0, 256, 2).tolist()

    def make_ap(i, x, y, tx):
        on_5 = gen.random() < 0.5
        channel = int(gen.choice(channels_5 if on_5 else channels_24))
        band = Band.GHZ_5 if on_5 else Band.GHZ_2_4
        bssid = "02:{:02x}:{:02x}:00:00:{:02x}".format(*mac_prefix, i)
        interval = 102.4 * 8 * (1 + gen.uniform(-0.05, 0.05))
        return AccessPoint(bssid, float(x), float(y), float(tx), channel, band,
                           round(float(interval), 3), f"net-{i:02d}")

    aps = []
    for k in range(6):
        aps.append(make_ap(len(aps), 2.0 + 4.0 * k + gen.uniform(-1, 1), 6.5 + gen.uniform(-1, 1),
                           gen.uniform(14, 20)))
    for room in rooms:
        aps.append(make_ap(len(aps), gen.uniform(room.x0 + 0.5, room.x1 - 0.5),
                           gen.uniform(room.y0 + 0.5, room.y1 - 0.5), gen.uniform(2, 8)))
    for k in range(6):
        angle = gen.uniform(0, 2 * math.pi)
        radius = gen.uniform(25, 40)
        aps.append(make_ap(len(aps), 12 + radius * math.cos(angle), 6.5 + radius * math.sin(angle),
                           gen.uniform(16, 22)))
    for i in gen.choice(len(aps), 2, replace=False).tolist():
        aps[i] = AccessPoint(**{**asdict(aps[i]), "ssid": None})

    positions = []
    for room in rooms:
        cx, cy = (room.x0 + room.x1) / 2, (room.y0 + room.y1) / 2
        for _ in range(int(gen.integers(2, 4))):
            positions.append(Position(
                f"p{len(positions) + 1:02d}", room.zone_label,
                round(float(cx + gen.uniform(-spread, spread)), 3),
                round(float(cy + gen.uniform(-spread, spread)), 3),
            ))
    return SimScenario(tuple(rooms), tuple(aps), tuple(positions), PathLoss(3.0, 1.0, 40.0),
                       shadowing_sigma_db=6.0, detection_floor_dbm=-88.0, wall_loss_db=2.0,
                       session_duration_s=60.0, seed=seed)


# -- scenario files ---------------------------------------------------------

def scenario_to_dict(scenario: SimScenario) -> dict:
    """JSON-ready form.

    Keys: ``rooms`` [{zone_label, x0, y0, x1, y1}], ``aps`` [{bssid, x, y,
    tx_power_dbm, channel, band ("2.4GHz"/"5GHz"), beacon_interval_ms, ssid
    (null = hidden)}], ``positions`` [{position_id, zone_label, x, y}],
    ``pathloss`` {exponent, reference_distance_m, reference_loss_db},
    ``shadowing_sigma_db``, ``detection_floor_dbm``, ``wall_loss_db``,
    ``session_duration_s``, ``seed``.
    """
    doc = asdict(scenario)
    for ap in doc["aps"]:
        ap["band"] = ap["band"].value
    return doc


def scenario_from_dict(doc: dict) -> SimScenario:
    return SimScenario(
        rooms=tuple(Room(**r) for r in doc["rooms"]),
        aps=tuple(AccessPoint(**{**a, "band": Band(a["band"])}) for a in doc["aps"]),
        positions=tuple(Position(**p) for p in doc["positions"]),
        pathloss=PathLoss(**doc.get("pathloss", {})),
        **{k: doc[k] for k in ("shadowing_sigma_db", "detection_floor_dbm", "wall_loss_db",
                               "session_duration_s", "seed") if k in doc},
    )


def save_scenario(scenario: SimScenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n", encoding="utf-8")


def load_scenario(path) -> SimScenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
