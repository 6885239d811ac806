"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines
appear at the end of the session (and inline with ``-s``).
"""

import hashlib
import statistics
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from dataloc.augment import PortionRange, dataloc_plus, format_snapshots, parse_snapshots_text
from dataloc.cli import main
from dataloc.features import FeatureMatrix, format_matrix, parse_matrix_text
from dataloc.forest import ForestConfig, dumps_model, loads_model, predict_many, train_forest, vote_counts
from dataloc.harness import (
    COMPARE_RANGES,
    SUBZONE_RANGES,
    GridSpec,
    compare_modes,
    subzone_experiment,
    variability_curves,
)
from dataloc.ingest import (
    Band,
    BeaconRecord,
    CaptureSession,
    format_beacon_log,
    parse_beacon_log_text,
)
from dataloc.sim import (
    AccessPoint,
    PathLoss,
    Position,
    Room,
    SimScenario,
    default_hospital_like_scenario,
    simulate_all,
    simulate_session,
)

from conftest import ACCEPTANCE_RESULTS, mac, make_session, random_session
from oracles import argmax_first, reference_dataloc_plus, reference_predict, reference_tree

SEEDS = range(10)


@contextmanager
def criterion(number, title, budget_s, spent=0.0):
    info = {"detail": ""}
    start = time.perf_counter()
    ok = False
    try:
        yield info
        elapsed = time.perf_counter() - start + spent
        info["detail"] += f" [{elapsed:.1f}s of {budget_s}s]"
        assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds {budget_s}s"
        ok = True
    finally:
        line = f"[{'PASS' if ok else 'FAIL'}] #{number} {title}:{info['detail']}"
        print(line)
        ACCEPTANCE_RESULTS.append((number, title, ok, info["detail"].strip()))


def _as_tuples(snaps):
    return [(s.provenance.portion_bp, s.provenance.rep_index, s.provenance.frames_used, s.readings)
            for s in snaps]


def test_1_algorithm_oracle_equivalence():
    with criterion(1, "augmentation oracle equivalence", 5) as info:
        gen = np.random.default_rng(101)
        for case in range(150):
            session = random_session(gen, int(gen.integers(1, 51)), int(gen.integers(1, 6)))
            start = int(gen.integers(1, 10001))
            end = int(gen.integers(start, 10001))
            step = int(gen.integers(1, 10001)) if gen.random() < 0.5 else int(gen.integers(100, 2001))
            reps = int(gen.integers(1, 4))
            seed = int(gen.integers(0, 2**63))
            got = dataloc_plus(session, PortionRange(start, end, step, reps), seed)
            assert _as_tuples(got) == reference_dataloc_plus(session, start, end, step, reps, seed), case
        info["detail"] = " 150 random sessions identical to the reference"


def test_2_count_law():
    with criterion(2, "count law", 1) as info:
        gen = np.random.default_rng(202)
        session = make_session([(0, -50), (1, -60), (0, -55)])
        for _ in range(1000):
            start = int(gen.integers(1, 10001))
            end = int(gen.integers(start, 10001))
            step = int(gen.integers(1, 10001)) if gen.random() < 0.7 else int(gen.integers(1, 200))
            r = PortionRange(start, end, step, int(gen.integers(1, 6)))
            expected = r.reps * ((end - start) // step + 1)
            assert r.count == expected
            if expected <= 60:
                assert len(dataloc_plus(session, r, 0)) == expected
        per_position = [len(dataloc_plus(session, PortionRange.parse(t), 0)) for t in SUBZONE_RANGES]
        assert per_position == [5, 9, 17, 34]
        totals = [90 * c for c in per_position]
        assert totals[0] == 450
        assert [Fraction(t, totals[0]) for t in totals[1:]] == [Fraction(9, 5), Fraction(17, 5), Fraction(34, 5)]
        info["detail"] = f" 1000 ranges exact; 90 positions give {totals} (x1.8, x3.4, x6.8)"


def test_3_variance_trend():
    with criterion(3, "variance trend", 10) as info:
        n, sigma = 1000, 2.0
        gen = np.random.default_rng(303)
        values = np.rint(gen.normal(-70, sigma, n)).astype(int)
        session = make_session([(0, int(v)) for v in values])
        pop_var = float(np.var(values))
        portions = [2000, 4000, 6000, 8000, 10000]
        samples = {p: [] for p in portions}
        r = PortionRange(2000, 10000, 2000, 1)
        for seed in range(2000):
            for snap in dataloc_plus(session, r, seed):
                samples[snap.provenance.portion_bp].append(snap.readings[mac(0)])
        rows = []
        empirical = []
        for p in portions:
            k = -(-p * n // 10000)
            expected = pop_var / k * (1 - (k - 1) / (n - 1))
            got = float(np.var(samples[p]))
            if p == 10000:
                # every draw is the full-session mean
                assert len(set(samples[p])) == 1 and expected == 0.0
                got = 0.0
            else:
                assert abs(got - expected) <= 0.15 * expected, (p, got, expected)
            empirical.append(got)
            rows.append(f"{p / 10000:g}:{got:.5f}/{expected:.5f}")
        assert all(a > b for a, b in zip(empirical, empirical[1:]))
        info["detail"] = " empirical/expected " + " ".join(rows)


def _weak_ap_session():
    aps = [AccessPoint(mac(i), 5.0 * np.cos(i), 5.0 * np.sin(i), 0.0, 6, Band.GHZ_2_4, 100.0, f"n{i}")
           for i in range(5)]
    # expected -80 dBm against a -75 dBm floor: ~3% of its frames survive
    weak = AccessPoint(mac(9), 0.0, 10.0, -10.0, 11, Band.GHZ_2_4, 100.0, "weak")
    sc = SimScenario((Room("hall", -20, -20, 20, 20),), tuple(aps) + (weak,),
                     (Position("p1", "hall", 0.0, 0.0),), PathLoss(3.0, 1.0, 40.0),
                     shadowing_sigma_db=2.6, detection_floor_dbm=-75.0, wall_loss_db=0.0,
                     session_duration_s=20.0, seed=4)
    return simulate_session(sc, "p1")


def test_4_coverage_trend():
    with criterion(4, "coverage trend", 10) as info:
        session = _weak_ap_session()
        n = len(session.records)
        weak_frames = sum(r.bssid == mac(9) for r in session.records)
        assert 1 <= weak_frames <= 0.02 * n, weak_frames
        portions = [p / 10 for p in range(1, 11)]
        sums = np.zeros(len(portions))
        for seed in range(1000):
            for i, c in enumerate(variability_curves(session, portions, reps=1, seed=seed)):
                sums[i] += c.included_fraction[0]
        means = sums / 1000
        drops = [a - b for a, b in zip(means, means[1:]) if b < a]
        assert len(drops) <= 1 and all(d < 0.01 for d in drops), means
        assert means[-1] == 1.0
        info["detail"] = (f" weak AP {weak_frames}/{n} frames; mean coverage "
                          + " ".join(f"{m:.4f}" for m in means))


def test_5_forest_correctness():
    with criterion(5, "forest correctness", 10) as info:
        gen = np.random.default_rng(505)
        # (a) exhaustive reference, bootstrap off, all features
        for case in range(100):
            n = int(gen.integers(2, 21))
            f = int(gen.integers(1, 5))
            rows = gen.integers(-70, -55, (n, f))
            labels = [f"r{int(v)}" for v in gen.integers(0, int(gen.integers(2, 5)), n)]
            labels[:2] = ["r0", "r1"]
            m = FeatureMatrix(tuple(mac(i) for i in range(f)), rows.astype(float), labels)
            depth = int(gen.integers(1, 8))
            model = train_forest(m, ForestConfig(1, depth, "all", bootstrap=False))
            y = [model.classes.index(lbl) for lbl in labels]
            ref = reference_tree(rows.tolist(), y, len(model.classes), depth, 2)
            tree = model.trees[0]
            got = [(int(a), float(t) if a >= 0 else None, c)
                   for a, t, c in zip(tree.feature, tree.threshold, tree.counts.tolist())]
            assert got == [(a, None if t is None else float(t), c) for a, t, c in ref], case
            queries = gen.integers(-72, -53, (20, f))
            expected = [model.classes[argmax_first(reference_predict(ref, q.tolist()))] for q in queries]
            assert predict_many(model, queries.astype(float)) == expected, case
        # (b) vote-count and depth laws
        for case in range(100):
            n, f = int(gen.integers(10, 40)), int(gen.integers(1, 8))
            rows = gen.integers(-99, -30, (n, f)).astype(float)
            labels = [f"r{int(v)}" for v in gen.integers(0, 4, n)]
            labels[:2] = ["r0", "r1"]
            m = FeatureMatrix(tuple(mac(i) for i in range(f)), rows, labels)
            cfg = ForestConfig(int(gen.integers(1, 6)), int(gen.integers(1, 6)), seed=case)
            model = train_forest(m, cfg)
            for tree in model.trees:
                assert tree.max_depth <= cfg.max_depth
                internal = tree.feature >= 0
                assert (tree.left[internal] > 0).all() and (tree.right[internal] > 0).all()
                assert (tree.counts[internal] == tree.counts[tree.left[internal]]
                        + tree.counts[tree.right[internal]]).all()
            for row in rows[:3]:
                votes = vote_counts(model, row)
                assert sum(votes.values()) == cfg.n_estimators
                assert predict_many(model, row[None, :])[0] == min(
                    c for c, v in votes.items() if v == max(votes.values()))
        # (c) bit-exact determinism
        m = FeatureMatrix(tuple(mac(i) for i in range(6)), gen.integers(-99, -30, (60, 6)).astype(float),
                          [f"r{i % 3}" for i in range(60)])
        cfg = ForestConfig(10, 12, seed=5)
        first = hashlib.sha256(dumps_model(train_forest(m, cfg)).encode()).hexdigest()
        second = hashlib.sha256(dumps_model(train_forest(m, cfg)).encode()).hexdigest()
        assert first == second
        info["detail"] = f" 100 reference trees, 100 forests, digest {first[:12]} stable"


@pytest.fixture(scope="module")
def mode_comparison():
    """Per seed: best test accuracy of snapshot mode and each augmentation range."""
    start = time.perf_counter()
    out = []
    for seed in SEEDS:
        sc = default_hospital_like_scenario(seed)
        sessions, snaps = simulate_all(sc, snapshots_per_position=5)
        spec = GridSpec(seed=seed, split_seed=seed)
        row = {}
        for text in COMPARE_RANGES:
            report = compare_modes(sessions, snaps, PortionRange.parse(text), spec, seed)
            n_snap = report.snapshot.descriptor["samples"]
            assert abs(report.augmented.descriptor["samples"] - n_snap) <= 0.05 * n_snap
            row["snapshot"] = report.snapshot.best_test
            row[text] = report.augmented.best_test
        out.append(row)
    return out, time.perf_counter() - start


def test_6_mode_comparison_trend(mode_comparison):
    rows, elapsed = mode_comparison
    with criterion(6, "augmented >= snapshot mode", 60, spent=elapsed) as info:
        parts = []
        for text in COMPARE_RANGES:
            deltas = [r[text] - r["snapshot"] for r in rows]
            wins = sum(d >= 0 for d in deltas)
            parts.append(f"({text}) {wins}/10 seeds, median delta {statistics.median(deltas):+.4f}")
            assert wins >= 8 and statistics.median(deltas) > 0, parts[-1]
        snap = statistics.median(r["snapshot"] for r in rows)
        info["detail"] = f" snapshot median {snap:.4f}; " + "; ".join(parts)


def test_7_portion_tightness_trend(mode_comparison):
    rows, _ = mode_comparison
    with criterion(7, "tighter portion range no worse", 60) as info:
        tight = statistics.median(r["0.8,1.0,0.05,1"] for r in rows)
        wide = statistics.median(r["0.2,1.0,0.2,1"] for r in rows)
        info["detail"] = f" median (0.8,1.0,0.05,1) {tight:.4f} vs (0.2,1.0,0.2,1) {wide:.4f}"
        assert tight >= wide


def test_8_subzone_scaling_trend():
    with criterion(8, "sub-zone scaling", 90) as info:
        ranges = [PortionRange.parse(t) for t in SUBZONE_RANGES]
        best = [[] for _ in ranges]
        for seed in SEEDS:
            sessions, _ = simulate_all(default_hospital_like_scenario(seed))
            for i, run in enumerate(subzone_experiment(sessions, ranges, GridSpec(seed=seed, split_seed=seed), seed)):
                best[i].append(run.result.best_test)
        medians = [statistics.median(b) for b in best]
        drops = [a - b for a, b in zip(medians, medians[1:]) if b < a]
        info["detail"] = " medians " + " ".join(f"{m:.4f}" for m in medians)
        assert len(drops) <= 1 and all(d < 0.02 for d in drops)


def _pipeline(root):
    files = ["log.csv", "aug.csv", "matrix.csv", "model.json", "grid.csv"]
    p = {name: str(root / name) for name in files}
    steps = [
        ["simulate", "--seed", "11", "--out", p["log.csv"]],
        ["augment", "--in", p["log.csv"], "--range", "0.8,1.0,0.05,1", "--seed", "3", "--out", p["aug.csv"]],
        ["featurize", "--in", p["aug.csv"], "--hidden-from", p["log.csv"], "--out", p["matrix.csv"]],
        ["train", "--in", p["matrix.csv"], "--seed", "3", "--out", p["model.json"]],
        ["grid", "--in", p["matrix.csv"], "--seed", "3", "--out", p["grid.csv"]],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return {name: hashlib.sha256((root / name).read_bytes()).hexdigest() for name in files}


def test_9_end_to_end_determinism(tmp_path, capsys):
    with criterion(9, "end-to-end determinism", 30) as info:
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        first = _pipeline(tmp_path / "a")
        second = _pipeline(tmp_path / "b")
        capsys.readouterr()
        assert first == second
        info["detail"] = f" {len(first)} outputs identical, grid digest {first['grid.csv'][:12]}"


def test_10_format_round_trips():
    with criterion(10, "format round trips", 5) as info:
        gen = np.random.default_rng(1010)
        for i in range(100):
            sessions = []
            for j in range(int(gen.integers(0, 4))):
                stamps = np.sort(gen.integers(0, 10**9, int(gen.integers(1, 15))))
                recs = []
                for t in stamps.tolist():
                    on5 = bool(gen.random() < 0.5)
                    recs.append(BeaconRecord(
                        t, mac(int(gen.integers(0, 5000))),
                        None if gen.random() < 0.2 else f"net {int(gen.integers(0, 9))},\"x\"",
                        int(gen.choice([36, 149])) if on5 else int(gen.integers(1, 15)),
                        Band.GHZ_5 if on5 else Band.GHZ_2_4, int(gen.integers(-99, 1))))
                sessions.append(CaptureSession(f"p{j}", f"room {i}", recs, stamps[-1] + int(gen.integers(0, 99))))
            text = format_beacon_log(sessions)
            assert parse_beacon_log_text(text) == sessions and format_beacon_log(sessions) == text

            session = random_session(gen, int(gen.integers(1, 40)), 5, position_id=f"p{i}")
            snaps = dataloc_plus(session, PortionRange(int(gen.integers(1, 10001)), 10000, 1500, 2), i)
            text = format_snapshots(snaps)
            assert parse_snapshots_text(text) == snaps and format_snapshots(parse_snapshots_text(text)) == text

            f = int(gen.integers(1, 6))
            rows = gen.integers(-100, 1, (int(gen.integers(2, 12)), f)).astype(float)
            inner = rows > -99
            rows[inner] -= np.round(gen.random(np.count_nonzero(inner)) * 0.99, 3)
            labels = [f"z{int(v)}" for v in gen.integers(0, 3, len(rows))]
            labels[:2] = ["z0", "z1"]
            matrix = FeatureMatrix(tuple(mac(k) for k in range(f)), rows, labels)
            text = format_matrix(matrix)
            assert parse_matrix_text(text) == matrix and format_matrix(parse_matrix_text(text)) == text

            model = train_forest(matrix, ForestConfig(int(gen.integers(1, 4)), 4, seed=i))
            text = dumps_model(model)
            assert loads_model(text) == model and dumps_model(loads_model(text)) == text
        info["detail"] = " 100 instances each of beacon log, snapshots, matrix, model"
