import numpy as np
import pytest

from chromastack.capture import DefocusModel, capture_spectral_varying, render_ground_truth, synth_scene
from chromastack.core import ReconConfig
from chromastack.llt import reconstruct_with_reports

FIXTURE_SEED = 7
FIXTURE_SIZE = 128
FIXTURE_LAYERS = 3
FIXTURE_CHANNELS = 10
FIXTURE_KAPPA = 1.5


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion with a one-line verdict")
    config.addinivalue_line("markers", "slow: end-to-end runs on the 128x128 fixture")
    config._acceptance = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        item.config._acceptance.append((m.args, report.outcome))


def pytest_terminal_summary(terminalreporter, config):
    rows = getattr(config, "_acceptance", [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), outcome in sorted(rows, key=lambda r: r[0][0]):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {number:>2}. {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def fixture_scene():
    return synth_scene(FIXTURE_SIZE, FIXTURE_SIZE, FIXTURE_LAYERS, FIXTURE_CHANNELS, FIXTURE_SEED)


@pytest.fixture(scope="session")
def fixture_model():
    return DefocusModel.uniform(FIXTURE_CHANNELS, kappa=FIXTURE_KAPPA)


@pytest.fixture(scope="session")
def fixture_gt(fixture_scene, fixture_model):
    return render_ground_truth(fixture_scene, fixture_model)


@pytest.fixture(scope="session")
def fixture_captured(fixture_gt):
    return capture_spectral_varying(fixture_gt)


@pytest.fixture(scope="session")
def fixture_recon(fixture_captured):
    """(stack, reports, seconds) for the default-config reconstruction."""
    import time

    t0 = time.perf_counter()
    stack, reports = reconstruct_with_reports(fixture_captured, ReconConfig(), jobs=None)
    return stack, reports, time.perf_counter() - t0
