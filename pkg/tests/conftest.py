import pytest

from flexprice.linff import LinearParams

# parameter set used by every bundled scenario
REFERENCE_PARAMS = dict(eta1=-1.0, eta2=-0.9, eta3=1.0, lambda1=0.5, lambda2=0.5, capacity=2.97)


@pytest.fixture
def lin_params():
    return LinearParams(**REFERENCE_PARAMS)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get(
        "tests.test_acceptance"
    )
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
