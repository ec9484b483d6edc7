import numpy as np
import pytest

from tprecog.models import box_model, notched_cube, notched_half


@pytest.fixture(scope="session")
def cube100():
    return box_model(1, (100.0, 100.0, 100.0))


@pytest.fixture(scope="session")
def test_objects():
    return notched_cube(1), notched_half(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def trained(test_objects):
    """Density model, index and config trained on a small two-object suite."""
    from tprecog.config import Config
    from tprecog.evaluation import train_from_scans, two_object_scene
    from tprecog.hashing import build_index

    cfg = Config()
    big, half = test_objects
    scans = [two_object_scene(big, half, cfg.synth_params(s), s) for s in range(500, 510)]
    dm = train_from_scans(scans, cfg, 2, seed=0)
    index = build_index([big, half], cfg.q_d, cfg.gamma_init)
    return cfg, dm, index


# -- acceptance summary -------------------------------------------------------

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    failed_setup = report.when == "setup" and not report.passed
    if report.when == "call" or failed_setup:
        detail = dict(item.user_properties).get("measured", "")
        _CRITERIA.append((marker.args[0], "PASS" if report.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {label}" + (f"  [{detail}]" if detail else ""))
