
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dataloc.augment import (
    PortionRange,
    Provenance,
    Snapshot,
    chunk_size,
    dataloc_plus,
    format_snapshots,
    online_snapshot,
    parse_snapshots_text,
    select_window,
    system_snapshots_to_snapshots,
)
from dataloc.errors import EmptyReadings, EmptyWindow, InvalidRange
from dataloc.ingest import Band, BeaconRecord, SystemSnapshot, format_system_snapshots

from conftest import mac, make_session, random_session
from oracles import reference_dataloc_plus


def as_tuples(snaps):
    return [(s.provenance.portion_bp, s.provenance.rep_index, s.provenance.frames_used, s.readings)
            for s in snaps]


# -- ranges -----------------------------------------------------------------

def test_range_parse_and_portions():
    r = PortionRange.parse("0.4,1.0,0.2,5")
    assert r.portions() == [4000, 6000, 8000, 10000]
    assert r.count == 20
    assert str(r) == "0.4,1.0,0.2,5"


def test_range_not_forced_to_end():
    assert PortionRange.parse("0.2,1.0,0.3,1").portions() == [2000, 5000, 8000]


@pytest.mark.parametrize("text", ["0,1,0.1,1", "0.5,0.4,0.1,1", "0.2,1.0,0,1", "0.2,1.0,0.2,0",
                                  "0.2,1.1,0.2,1", "0.2,1.0,0.2", "a,b,c,d", "0.00001,1,0.1,1"])
def test_invalid_ranges(text):
    with pytest.raises(InvalidRange):
        PortionRange.parse(text)


def test_subzone_range_counts_per_position():
    counts = [PortionRange.parse(t).count for t in
              ("0.2,1.0,0.2,1", "0.2,1.0,0.1,1", "0.2,1.0,0.05,1", "0.2,1.0,0.05,2")]
    assert counts == [5, 9, 17, 34]


def test_chunk_size():
    assert chunk_size(2000, 10) == 2
    assert chunk_size(2500, 10) == 3
    assert chunk_size(500, 1) == 1
    assert chunk_size(10000, 7) == 7


# -- augmentation --------------------------------------------------------------

def test_example_twenty_snapshots(gen):
    session = random_session(gen, 40, 4)
    snaps = dataloc_plus(session, PortionRange.parse("0.4,1.0,0.2,5"), seed=3)
    assert len(snaps) == 20
    assert [s.provenance.portion_bp for s in snaps[::5]] == [4000, 6000, 8000, 10000]
    assert [s.provenance.rep_index for s in snaps[:5]] == [1, 2, 3, 4, 5]


def test_full_portion_is_exact_mean():
    session = make_session([(0, -50), (1, -70), (0, -53), (0, -54), (1, -71)])
    (snap,) = dataloc_plus(session, PortionRange.parse("1.0,1.0,0.05,1"), seed=9)
    assert snap.readings == {mac(0): -52.333333333333336, mac(1): -70.5}
    assert snap.provenance == Provenance(10000, 1, 5)


def test_ten_frames_three_devices_matches_reference():
    readings = [(0, -40), (1, -60), (2, -80), (0, -42), (1, -61), (2, -85), (0, -44), (1, -66),
                (0, -47), (2, -90)]
    session = make_session(readings)
    got = dataloc_plus(session, PortionRange.parse("0.2,1.0,0.2,2"), seed=2024)
    assert as_tuples(got) == reference_dataloc_plus(session, 2000, 10000, 2000, 2, 2024)
    assert format_snapshots(got) == format_snapshots(dataloc_plus(session, PortionRange.parse("0.2,1.0,0.2,2"), 2024))


def test_single_frame_session():
    session = make_session([(5, -61)])
    for snap in dataloc_plus(session, PortionRange.parse("0.05,1.0,0.05,3"), seed=1):
        assert snap.readings == {mac(5): -61.0}
        assert snap.provenance.frames_used == 1


def test_reps_are_independent_draws(gen):
    session = random_session(gen, 200, 3)
    snaps = dataloc_plus(session, PortionRange.parse("0.3,0.3,0.1,4"), seed=0)
    assert len({tuple(sorted(s.readings.items())) for s in snaps}) == 4


def test_seed_changes_output(gen):
    session = random_session(gen, 100, 5)
    r = PortionRange.parse("0.5,0.5,0.1,1")
    assert dataloc_plus(session, r, 1) != dataloc_plus(session, r, 2)


ranges = st.builds(
    lambda s, span, step, reps: PortionRange(s, min(10000, s + span), step, reps),
    st.integers(1, 10000), st.integers(0, 10000), st.integers(1, 10000), st.integers(1, 4),
)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(1, 6), ranges, st.integers(0, 2**64 - 1), st.integers(0, 2**32))
def test_matches_reference_and_laws(n_frames, n_dev, r, seed, data_seed):
    session = random_session(np.random.default_rng(data_seed), n_frames, n_dev)
    snaps = dataloc_plus(session, r, seed)
    assert as_tuples(snaps) == reference_dataloc_plus(session, r.start_bp, r.end_bp, r.step_bp, r.reps, seed)
    # count law
    assert len(snaps) == r.reps * ((r.end_bp - r.start_bp) // r.step_bp + 1)
    # range law
    lo, hi = {}, {}
    for rec in session.records:
        lo[rec.bssid] = min(lo.get(rec.bssid, 0), rec.rssi_dbm)
        hi[rec.bssid] = max(hi.get(rec.bssid, -100), rec.rssi_dbm)
    for s in snaps:
        for b, v in s.readings.items():
            assert lo[b] <= v <= hi[b]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 80), st.integers(1, 8), st.integers(0, 2**32), st.integers(1, 10000))
def test_online_equals_full_portion(n_frames, n_dev, data_seed, step):
    session = random_session(np.random.default_rng(data_seed), n_frames, n_dev)
    (full,) = dataloc_plus(session, PortionRange(10000, 10000, step, 1), seed=5)
    assert online_snapshot(session.records).readings == full.readings


# -- online -----------------------------------------------------------------

def _recs(pairs, t0=0):
    return [BeaconRecord(t0 + i, b, "x", 1, Band.GHZ_2_4, r) for i, (b, r) in enumerate(pairs)]


def test_online_examples():
    a, b = mac(1), mac(2)
    assert online_snapshot(_recs([(a, -70), (a, -72), (b, -80)])).readings == {a: -71.0, b: -80.0}
    assert online_snapshot(_recs([(a, -55)])).readings == {a: -55.0}
    with pytest.raises(EmptyWindow):
        online_snapshot([])


def test_online_1863_frames_105_devices():
    gen = np.random.default_rng(0)
    devices = np.concatenate([np.arange(105), gen.integers(0, 105, 1863 - 105)])
    pairs = [(mac(int(d)), int(gen.integers(-95, -40))) for d in devices]
    snap = online_snapshot(_recs(pairs))
    assert len(snap.readings) == 105


def test_select_window():
    recs = [BeaconRecord(t, mac(0), "x", 1, Band.GHZ_2_4, -50) for t in (1, 5, 9)]
    assert [r.timestamp_us for r in select_window(recs, 9, 5)] == [5, 9]
    assert select_window(recs, 9, 1000) == recs
    assert select_window(recs, 0, 5) == []
    with pytest.raises(ValueError):
        select_window(recs, 9, 0)


def test_system_snapshot_conversion():
    snaps = [SystemSnapshot(f"p{i}", "z", {mac(i): -40 - i % 50}) for i in range(450)]
    out = system_snapshots_to_snapshots(snaps)
    assert len(out) == 450
    assert all(o.readings == {b: float(v) for b, v in s.readings.items()} for o, s in zip(out, snaps))
    assert all(o.provenance is None for o in out)
    assert system_snapshots_to_snapshots([]) == []


def test_snapshot_invariants():
    with pytest.raises(EmptyReadings):
        Snapshot("z", "p", {})
    with pytest.raises(ValueError):
        Snapshot("z", "p", {mac(0): -100.0})


# -- files ------------------------------------------------------------------

def test_snapshot_file_round_trip(gen):
    session = random_session(gen, 50, 6)
    snaps = dataloc_plus(session, PortionRange.parse("0.2,1.0,0.2,2"), seed=4)
    snaps.append(Snapshot("room1", "p1", {mac(3): -51.5}))
    text = format_snapshots(snaps)
    assert parse_snapshots_text(text) == snaps
    assert format_snapshots(parse_snapshots_text(text)) == text


def test_snapshot_parser_accepts_system_format():
    text = format_system_snapshots([SystemSnapshot("p1", "room1", {mac(1): -60})])
    assert parse_snapshots_text(text) == [Snapshot("room1", "p1", {mac(1): -60.0})]
