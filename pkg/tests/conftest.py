import pytest

from xaisvc.center import CoordinationCenter
from xaisvc.demo import provision_demo


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One visible pass/fail line per acceptance criterion."""
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    status = "PASS" if report.passed else "FAIL"
    terminal = item.config.pluginmanager.get_plugin("terminalreporter")
    if terminal is not None:
        terminal.write_line(f"ACCEPTANCE {status}: {marker.args[0]}")


@pytest.fixture
def center():
    c = CoordinationCenter()
    yield c
    c.close()


@pytest.fixture(scope="module")
def demo_center():
    """One center with the fully executed seeded scenario, shared per module.

    Tests using this fixture must not mutate the provisioned state.
    """
    c = CoordinationCenter()
    summary = provision_demo(c, 7)
    yield c, summary
    c.close()
