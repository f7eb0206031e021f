import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from prunelab.nn import build_model, mlp_spec

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def two_input_unit(theta=(1.0, 2.0), mask=(1.0, 1.0)):
    """Dense 2->1 without bias; the hand-worked example model."""
    model = build_model(mlp_spec((2, 1), bias=False), seed=0)
    p = model["layer00.weight"]
    p.value[:] = np.array(theta, dtype=np.float32).reshape(2, 1)
    p.mask[:] = np.array(mask, dtype=np.float32).reshape(2, 1)
    return model


@pytest.fixture
def unit_model():
    return two_input_unit()


def random_mlp(rng, max_layers=4, max_units=12, bias=True, classes=None):
    depth = int(rng.integers(1, max_layers + 1))
    sizes = [int(rng.integers(2, max_units + 1)) for _ in range(depth + 1)]
    if classes is not None:
        sizes[-1] = classes
    return mlp_spec(tuple(sizes), bias=bias)


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None and (report.when == "call" or report.failed or report.skipped):
        n, title = marker.args
        entry = _criteria.setdefault(n, {"title": title, "ok": True, "notes": []})
        if report.when == "call" or not report.passed:
            entry["ok"] &= report.passed
            entry["notes"] += [str(v) for k, v in item.user_properties if k == "detail"]
    return report


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(
            f"criterion {n:2d}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}" + (f"  [{notes}]" if notes else ""))
