import numpy as np
import pytest

from actirhythm.ingest import G, SampleSeries


def regular_series(acc, t0_ms=1_600_000_000_000, period=5.0, cat_id="cat", tz_offset=0):
    acc = np.asarray(acc, dtype=float).reshape(-1, 3)
    step = int(round(period * 1000))
    t = t0_ms + step * np.arange(len(acc), dtype=np.int64)
    return SampleSeries(cat_id=cat_id, t_ms=t, acc=acc, nominal_period=period, tz_offset=tz_offset)


@pytest.fixture
def gravity_series():
    return regular_series(np.tile([0.0, 0.0, G], (240, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_criterion_" not in getattr(rep, "nodeid", "") or rep.when != "call":
                continue
            detail = dict(rep.user_properties).get("acceptance_detail", "")
            name = rep.nodeid.split("::")[-1].removeprefix("test_criterion_")
            rows.append((name, "PASS" if outcome == "passed" else "FAIL", detail))
    if rows:
        terminalreporter.section("acceptance criteria")
        for name, verdict, detail in sorted(rows):
            terminalreporter.write_line(f"{verdict}  criterion {name}: {detail}")
