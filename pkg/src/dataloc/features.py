"""Feature matrices over a fixed device universe, splitting and sub-zone labels."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, TypeVar

import numpy as np

from dataloc import rng
from dataloc.augment import Snapshot
from dataloc.errors import (
    ClassTooSmall,
    EmptyInput,
    EmptyUniverse,
    MalformedLine,
    MissingPosition,
)
from dataloc.ingest import FILL_DBM, RSSI_MAX, RSSI_MIN, _csv_line, valid_bssid

DEFAULT_TEST_FRACTION = 0.25


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows of signal strength per device; undetected devices hold ``FILL_DBM``."""

    device_universe: tuple[str, ...]
    rows: np.ndarray
    labels: tuple[str, ...]
    fill_dbm: int = FILL_DBM

    def __post_init__(self):
        universe = tuple(self.device_universe)
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = tuple(self.labels)
        object.__setattr__(self, "device_universe", universe)
        object.__setattr__(self, "labels", labels)
        rows = rows.reshape(len(labels), len(universe)) if rows.size == 0 else rows
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

        if not universe:
            raise EmptyUniverse("feature matrix has no columns")
        if list(universe) != sorted(set(universe)):
            raise ValueError("device universe must be sorted and duplicate-free")
        if not labels:
            raise EmptyInput("feature matrix has no rows")
        if rows.shape != (len(labels), len(universe)):
            raise ValueError(f"rows shape {rows.shape} != ({len(labels)}, {len(universe)})")
        if not all(labels):
            raise ValueError("empty class label")
        ok = (rows == self.fill_dbm) | ((rows >= RSSI_MIN) & (rows <= RSSI_MAX))
        if not ok.all():
            raise ValueError("entries must be the fill value or within [-99, 0]")

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.device_universe == other.device_universe
            and self.labels == other.labels
            and self.fill_dbm == other.fill_dbm
            and np.array_equal(self.rows, other.rows)
        )

    def __len__(self):
        return len(self.labels)

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))

    def take(self, indices) -> "FeatureMatrix":
        indices = list(indices)
        return FeatureMatrix(
            self.device_universe, self.rows[indices], [self.labels[i] for i in indices]
        )

    def project(self, universe: Sequence[str]) -> "FeatureMatrix":
        """Re-express rows over another universe (missing columns become fill)."""
        cols = {b: i for i, b in enumerate(self.device_universe)}
        out = np.full((len(self), len(universe)), float(self.fill_dbm))
        for j, b in enumerate(universe):
            if b in cols:
                out[:, j] = self.rows[:, cols[b]]
        return FeatureMatrix(tuple(universe), out, self.labels)

    def observed_universe(self) -> tuple[str, ...]:
        """Columns with at least one real reading."""
        seen = (self.rows != self.fill_dbm).any(axis=0)
        return tuple(b for b, s in zip(self.device_universe, seen) if s)


def build_feature_matrix(snapshots: Sequence[Snapshot], universe: Sequence[str] | None = None,
                         exclude: Iterable[str] = ()) -> FeatureMatrix:
    """Stack snapshots into a matrix.

    Without ``universe`` the columns are the sorted union of reported
    devices minus ``exclude`` (hidden networks). Devices outside a supplied
    universe are ignored.
    """
    if not snapshots:
        raise EmptyInput("no snapshots")
    if universe is None:
        excluded = set(exclude)
        universe = sorted({b for s in snapshots for b in s.readings} - excluded)
    else:
        universe = list(universe)
        if not universe:
            raise EmptyUniverse("supplied universe is empty")
    cols = {b: i for i, b in enumerate(universe)}
    if not cols:
        raise EmptyUniverse("no non-hidden devices in snapshots")
    rows = np.full((len(snapshots), len(universe)), float(FILL_DBM))
    for i, snap in enumerate(snapshots):
        for bssid, value in snap.readings.items():
            j = cols.get(bssid)
            if j is not None:
                rows[i, j] = value
    return FeatureMatrix(tuple(universe), rows, [s.zone_label for s in snapshots])


def split_stratified(matrix: FeatureMatrix, test_fraction: float = DEFAULT_TEST_FRACTION,
                     seed: int = 0) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Per-class split: ``max(1, floor(f * n_c))`` test rows for each class."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    by_class: dict[str, list[int]] = defaultdict(list)
    for i, label in enumerate(matrix.labels):
        by_class[label].append(i)
    test: list[int] = []
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < 2:
            raise ClassTooSmall(label)
        n_test = min(len(members) - 1, max(1, math.floor(Fraction(str(test_fraction)) * len(members))))
        chosen = rng.choose(rng.derive_seed(seed, "split", label), len(members), n_test)
        test.extend(members[c] for c in chosen)
    test_set = set(test)
    train_idx = [i for i in range(len(matrix)) if i not in test_set]
    return matrix.take(train_idx), matrix.take(sorted(test_set))


T = TypeVar("T")


def subzone_label(zone_label: str, position_id: str) -> str:
    suffix = "/" + position_id
    return zone_label if zone_label.endswith(suffix) else zone_label + suffix


def subdivide_zones(items: Iterable[T]) -> list[T]:
    """Promote every position to its own class: label becomes ``zone/position``.

    Works on anything with ``position_id`` and ``zone_label`` dataclass
    fields (sessions, system snapshots, snapshots). Applying it twice is a
    no-op.
    """
    out = []
    for item in items:
        pos = getattr(item, "position_id", None)
        if not pos:
            raise MissingPosition(f"{type(item).__name__} without position_id")
        out.append(dataclasses.replace(item, zone_label=subzone_label(item.zone_label, pos)))
    return out


# -- matrix files -----------------------------------------------------------

def _format_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def format_matrix(matrix: FeatureMatrix) -> str:
    out = [_csv_line(("label",) + matrix.device_universe)]
    for label, row in zip(matrix.labels, matrix.rows.tolist()):
        out.append(_csv_line([label] + [_format_value(v) for v in row]))
    return "".join(out)


def write_matrix(matrix: FeatureMatrix, path) -> None:
    Path(path).write_text(format_matrix(matrix), encoding="utf-8", newline="\n")


def parse_matrix_text(text: str) -> FeatureMatrix:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedLine(1, "empty matrix file") from None
    if not header or header[0] != "label":
        raise MalformedLine(1, "header must start with 'label'")
    universe = header[1:]
    for b in universe:
        if not valid_bssid(b):
            raise MalformedLine(1, f"bad bssid column {b!r}")
    labels, rows = [], []
    for line_no, fields in enumerate(reader, start=2):
        if not fields:
            continue
        if len(fields) != len(header):
            raise MalformedLine(line_no, f"expected {len(header)} fields, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields[1:]])
        except ValueError:
            raise MalformedLine(line_no, "non-numeric value") from None
        labels.append(fields[0])
    try:
        return FeatureMatrix(tuple(universe), np.array(rows, dtype=np.float64), labels)
    except ValueError as exc:
        raise MalformedLine(0, str(exc)) from None


def parse_matrix(path) -> FeatureMatrix:
    return parse_matrix_text(Path(path).read_text(encoding="utf-8"))
