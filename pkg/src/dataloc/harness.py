"""Experiments: hyper-parameter grids, snapshot-vs-stream comparison,
portion variability curves and the sub-zone scaling study."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dataloc import rng
from dataloc.augment import PortionRange, Snapshot, dataloc_plus, system_snapshots_to_snapshots
from dataloc.errors import EmptySession, LabelSetMismatch, SampleCountUnreachable
from dataloc.features import (
    DEFAULT_TEST_FRACTION,
    FeatureMatrix,
    build_feature_matrix,
    split_stratified,
    subdivide_zones,
)
from dataloc.forest import ForestConfig, predict_grid, train_forest
from dataloc.ingest import CaptureSession, SystemSnapshot, _csv_line, hidden_bssids

SAMPLE_MATCH_TOLERANCE = 0.05

COMPARE_RANGES = ("0.2,1.0,0.2,1", "0.5,1.0,0.125,1", "0.8,1.0,0.05,1")
SUBZONE_RANGES = ("0.2,1.0,0.2,1", "0.2,1.0,0.1,1", "0.2,1.0,0.05,1", "0.2,1.0,0.05,2")


@dataclass(frozen=True)
class GridSpec:
    max_depths: tuple[int, ...] = (10, 15, 20, 25, 30)
    n_estimators_list: tuple[int, ...] = (10, 15, 20, 25, 30)
    max_features: str | int = "sqrt"
    min_samples_split: int = 2
    seed: int = 0
    test_fraction: float = DEFAULT_TEST_FRACTION
    split_seed: int = 0

    def __post_init__(self):
        for name in ("max_depths", "n_estimators_list"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise ValueError(f"{name} is empty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly increasing")

    def config(self, max_depth: int, n_estimators: int) -> ForestConfig:
        return ForestConfig(n_estimators, max_depth, self.max_features, self.seed,
                            self.min_samples_split)


@dataclass(frozen=True)
class GridCell:
    max_depth: int
    n_estimators: int
    train_accuracy: float
    test_accuracy: float


@dataclass(frozen=True)
class GridResult:
    cells: tuple[GridCell, ...]
    descriptor: dict = field(default_factory=dict)

    @property
    def best_test(self) -> float:
        return max(c.test_accuracy for c in self.cells)

    @property
    def best_cell(self) -> GridCell:
        return max(self.cells, key=lambda c: c.test_accuracy)  # first wins ties

    @property
    def mean_test(self) -> float:
        return statistics.fmean(c.test_accuracy for c in self.cells)

    def cell(self, max_depth: int, n_estimators: int) -> GridCell:
        for c in self.cells:
            if (c.max_depth, c.n_estimators) == (max_depth, n_estimators):
                return c
        raise KeyError((max_depth, n_estimators))


def split_for_experiment(matrix: FeatureMatrix, spec: GridSpec) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Stratified split with the columns cut down to devices seen in training."""
    train, test = split_stratified(matrix, spec.test_fraction, spec.split_seed)
    universe = train.observed_universe()
    return train.project(universe), test.project(universe)


def _accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    return float(np.count_nonzero(predicted == truth)) / len(truth)


def run_grid(matrix: FeatureMatrix, spec: GridSpec, descriptor: dict | None = None,
             jobs: int = 1) -> GridResult:
    """Train and score one forest per (max_depth, n_estimators) cell.

    The split happens once. Forest trees depend only on their index and
    node path, so the whole grid is read off one forest of the largest size
    grown to the largest depth; every cell equals an independently trained
    forest with that cell's configuration.
    """
    train, test = split_for_experiment(matrix, spec)
    deep = spec.config(max(spec.max_depths), max(spec.n_estimators_list))
    model = train_forest(train, deep, jobs=jobs)
    index = {c: i for i, c in enumerate(model.classes)}
    y_train = np.array([index[label] for label in train.labels])
    y_test = np.array([index.get(label, -1) for label in test.labels])
    p_train = predict_grid(model, train.rows, spec.max_depths, spec.n_estimators_list)
    p_test = predict_grid(model, test.rows, spec.max_depths, spec.n_estimators_list)
    cells = []
    for i, depth in enumerate(spec.max_depths):
        for j, n_est in enumerate(spec.n_estimators_list):
            cells.append(GridCell(depth, n_est, _accuracy(p_train[i, j], y_train),
                                  _accuracy(p_test[i, j], y_test)))
    info = {"samples": len(matrix), "classes": len(matrix.classes),
            "features": len(model.device_universe)}
    info.update(descriptor or {})
    return GridResult(tuple(cells), info)


# -- augmentation helpers ---------------------------------------------------

def augment_sessions(sessions: Sequence[CaptureSession], portion_range: PortionRange,
                     seed: int) -> list[Snapshot]:
    """Run the augmentation on every session with a per-position sub-seed."""
    out = []
    for s in sessions:
        out.extend(dataloc_plus(s, portion_range, rng.derive_seed(seed, "augment", s.position_id)))
    return out


def tune_range(portion_range: PortionRange, n_sessions: int, target: int,
               tolerance: float = SAMPLE_MATCH_TOLERANCE) -> PortionRange:
    """Adjust step and reps so ``n_sessions`` sessions yield ~``target`` snapshots.

    Start and end are kept. The given range is returned unchanged when it
    already lands within tolerance; otherwise the closest count wins, then
    the original reps, then the step closest to the original.
    """
    def within(r: PortionRange) -> bool:
        return abs(n_sessions * r.count - target) <= tolerance * target

    if within(portion_range):
        return portion_range
    start, end = portion_range.start_bp, portion_range.end_bp
    span = end - start
    candidates = []
    for reps in range(1, max(1, target // max(1, n_sessions)) + 2):
        for length in range(1, span + 2):
            if length == 1:
                step = max(portion_range.step_bp, span + 1)
            else:
                step = span // (length - 1)
            r = PortionRange(start, end, step, reps)
            if len(r.portions()) != length:
                continue
            candidates.append((
                abs(n_sessions * r.count - target),
                abs(reps - portion_range.reps),
                abs(step - portion_range.step_bp),
                r,
            ))
    best = min(candidates, key=lambda c: c[:3], default=None)
    if best is None or not within(best[3]):
        raise SampleCountUnreachable(
            f"no step/reps for {portion_range} gives {target} samples from {n_sessions} sessions"
        )
    return best[3]


def _zone_labels(items) -> set[str]:
    return {i.zone_label for i in items}


# -- mode comparison --------------------------------------------------------

@dataclass(frozen=True)
class CompareReport:
    snapshot: GridResult
    augmented: GridResult
    portion_range: PortionRange | None = None

    @property
    def best_delta(self) -> float:
        return self.augmented.best_test - self.snapshot.best_test

    @property
    def mean_delta(self) -> float:
        return self.augmented.mean_test - self.snapshot.mean_test

    def cell_deltas(self) -> list[tuple[int, int, float, float]]:
        """``(max_depth, n_estimators, train_delta, test_delta)`` per cell."""
        out = []
        for a, s in zip(self.augmented.cells, self.snapshot.cells):
            out.append((a.max_depth, a.n_estimators,
                        a.train_accuracy - s.train_accuracy, a.test_accuracy - s.test_accuracy))
        return out


def compare_matrices(snapshot_matrix: FeatureMatrix, augmented_matrix: FeatureMatrix,
                     spec: GridSpec, portion_range: PortionRange | None = None,
                     jobs: int = 1) -> CompareReport:
    if set(snapshot_matrix.labels) != set(augmented_matrix.labels):
        raise LabelSetMismatch("snapshot and augmented data cover different zones")
    snap = run_grid(snapshot_matrix, spec, {"mode": "snapshot"}, jobs=jobs)
    aug_info = {"mode": "augmented"}
    if portion_range is not None:
        aug_info["range"] = str(portion_range)
    aug = run_grid(augmented_matrix, spec, aug_info, jobs=jobs)
    return CompareReport(snap, aug, portion_range)


def compare_modes(stream_sessions: Sequence[CaptureSession], system_snaps: Sequence[SystemSnapshot],
                  portion_range: PortionRange, spec: GridSpec, seed: int,
                  jobs: int = 1) -> CompareReport:
    """Snapshot mode vs augmented stream mode on equal footing.

    The range is tuned so the augmented set matches the snapshot count
    within 5%; both grids share the spec, split seed and zone set.
    """
    if _zone_labels(stream_sessions) != _zone_labels(system_snaps):
        raise LabelSetMismatch(
            f"stream zones {sorted(_zone_labels(stream_sessions))} != "
            f"snapshot zones {sorted(_zone_labels(system_snaps))}"
        )
    tuned = tune_range(portion_range, len(stream_sessions), len(system_snaps))
    hidden = hidden_bssids(stream_sessions)
    augmented = augment_sessions(stream_sessions, tuned, seed)
    snap_matrix = build_feature_matrix(system_snapshots_to_snapshots(system_snaps), exclude=hidden)
    aug_matrix = build_feature_matrix(augmented, exclude=hidden)
    return compare_matrices(snap_matrix, aug_matrix, spec, tuned, jobs=jobs)


# -- variability curves -----------------------------------------------------

@dataclass(frozen=True)
class PortionCurve:
    portion_bp: int
    samples: dict[str, list[float | None]]  # per device, one entry per rep
    included_fraction: list[float]  # per rep

    @property
    def mean_included(self) -> float:
        return statistics.fmean(self.included_fraction)

    def values(self, bssid: str) -> list[float]:
        return [v for v in self.samples[bssid] if v is not None]


def variability_curves(session: CaptureSession, portions: Sequence, reps: int,
                       seed: int) -> list[PortionCurve]:
    """Per-portion averaged readings and device coverage over ``reps`` draws.

    Portions are decimals or basis points (ints above 1). Draws reuse the
    augmentation's per-(portion, rep) sub-seeds.
    """
    if not session.records:
        raise EmptySession(session.position_id)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    devices = session.bssids
    out = []
    for p in portions:
        bp = p if isinstance(p, int) and p > 1 else PortionRange.from_fractions(p, p, p).start_bp
        snaps = dataloc_plus(session, PortionRange(bp, bp, 1, reps), seed)
        samples = {b: [s.readings.get(b) for s in snaps] for b in devices}
        included = [len(s.readings) / len(devices) for s in snaps]
        out.append(PortionCurve(bp, samples, included))
    return out


# -- sub-zone scaling -------------------------------------------------------

@dataclass(frozen=True)
class SubzoneRun:
    portion_range: PortionRange
    samples: int
    result: GridResult


def subzone_experiment(stream_sessions: Sequence[CaptureSession], ranges: Sequence[PortionRange],
                       spec: GridSpec, seed: int, jobs: int = 1) -> list[SubzoneRun]:
    """Promote positions to classes, then grid-search each augmentation range."""
    per_zone: dict[str, int] = {}
    for s in stream_sessions:
        per_zone[s.zone_label] = per_zone.get(s.zone_label, 0) + 1
    if not per_zone or max(per_zone.values()) < 2:
        raise ValueError("sub-zone experiment needs a zone with at least two positions")
    sessions = subdivide_zones(stream_sessions)
    hidden = hidden_bssids(sessions)
    runs = []
    for r in ranges:
        snaps = augment_sessions(sessions, r, seed)
        matrix = build_feature_matrix(snaps, exclude=hidden)
        result = run_grid(matrix, spec, {"mode": "subzones", "range": str(r)}, jobs=jobs)
        runs.append(SubzoneRun(r, len(snaps), result))
    return runs


# -- report files -----------------------------------------------------------

def _acc(v: float) -> str:
    return repr(float(v))


def format_grid(result: GridResult) -> str:
    out = [_csv_line(("max_depth", "n_estimators", "train_acc", "test_acc"))]
    for c in result.cells:
        out.append(_csv_line((c.max_depth, c.n_estimators, _acc(c.train_accuracy), _acc(c.test_accuracy))))
    return "".join(out)


def format_compare(report: CompareReport) -> str:
    out = [_csv_line(("mode", "max_depth", "n_estimators", "train_acc", "test_acc"))]
    for mode, result in (("snapshot", report.snapshot), ("augmented", report.augmented)):
        for c in result.cells:
            out.append(_csv_line((mode, c.max_depth, c.n_estimators,
                                  _acc(c.train_accuracy), _acc(c.test_accuracy))))
    for depth, n_est, d_train, d_test in report.cell_deltas():
        out.append(_csv_line(("delta", depth, n_est, _acc(d_train), _acc(d_test))))
    return "".join(out)


def format_subzones(runs: Sequence[SubzoneRun]) -> str:
    out = [_csv_line(("range", "samples", "max_depth", "n_estimators", "train_acc", "test_acc"))]
    for run in runs:
        for c in run.result.cells:
            out.append(_csv_line((str(run.portion_range), run.samples, c.max_depth, c.n_estimators,
                                  _acc(c.train_accuracy), _acc(c.test_accuracy))))
    return "".join(out)


def format_curves(curves: Sequence[PortionCurve]) -> tuple[str, str]:
    """``(curves.csv, coverage.csv)`` contents; absent devices are skipped."""
    samples = [_csv_line(("portion_bp", "bssid", "rep", "avg_rssi"))]
    coverage = [_csv_line(("portion_bp", "rep", "included_fraction"))]
    for c in curves:
        for bssid in sorted(c.samples):
            for rep, v in enumerate(c.samples[bssid], start=1):
                if v is not None:
                    samples.append(_csv_line((c.portion_bp, bssid, rep, repr(v))))
        for rep, f in enumerate(c.included_fraction, start=1):
            coverage.append(_csv_line((c.portion_bp, rep, repr(f))))
    return "".join(samples), "".join(coverage)


def write_text(text: str, path) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")
