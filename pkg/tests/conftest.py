import math

import numpy as np
import pytest
from hypothesis import settings

from wpcombine import WeightedPValues

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

# Five P-values shared by both worked examples.
EXAMPLE_P = (0.008000257, 0.008579261, 0.0008911761, 0.006967988, 0.004973110)
# Nearly equal weights.
EXAMPLE_B_WEIGHTS = (0.54531152, 0.54532057, 0.54531221, 0.54531399, 0.54531776)
# Well separated inverse weights; they already sum to M = 5.
EXAMPLE_C_INVERSE = (0.6, 0.65, 1.2, 1.25, 1.3)
WALKTHROUGH = (0.50, 0.70, 0.70, 0.71, 0.74, 1.03, 1.80, 1.82)


@pytest.fixture
def example_b():
    return WeightedPValues.from_pvalues(EXAMPLE_P, EXAMPLE_B_WEIGHTS)


@pytest.fixture
def example_c():
    return WeightedPValues.from_pvalues(EXAMPLE_P, [1.0 / r for r in EXAMPLE_C_INVERSE])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rel(a, b):
    return abs(a - b) / abs(b)


_criteria: dict[str, list[tuple[str, bool]]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    mark = getattr(report, "criterion", None)
    if mark:
        number, label = mark
        _criteria.setdefault(number, []).append((label, report.outcome == "passed"))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = (str(mark.args[0]), mark.args[1])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion check")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria, key=int):
        checks = _criteria[number]
        failed = [label for label, ok in checks if not ok]
        status = "FAIL" if failed else "PASS"
        detail = f"failed: {'; '.join(failed)}" if failed else f"{len(checks)} checks"
        terminalreporter.write_line(f"{status}  criterion {number}  ({detail})")
