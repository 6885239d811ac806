import numpy as np
import pytest

from dataloc.ingest import Band, BeaconRecord, CaptureSession

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def mac(i: int) -> str:
    return "02:00:00:00:{:02x}:{:02x}".format(i >> 8, i & 0xFF)


def make_session(readings, position_id="p1", zone_label="room1", step_us=1000, ssid="net"):
    """Session from ``[(device_index, rssi), ...]`` with evenly spaced timestamps."""
    records = [
        BeaconRecord(i * step_us, mac(d), ssid, 6, Band.GHZ_2_4, int(r))
        for i, (d, r) in enumerate(readings)
    ]
    return CaptureSession(position_id, zone_label, records, max(0, (len(records) - 1) * step_us))


def random_session(gen: np.random.Generator, n_frames: int, n_devices: int, **kw):
    devices = gen.integers(0, n_devices, n_frames)
    rssi = gen.integers(-95, -30, n_frames)
    return make_session(list(zip(devices.tolist(), rssi.tolist())), **kw)


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] #{number} {title}: {detail}")
