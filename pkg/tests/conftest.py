"""Shared test fixtures and the acceptance summary printer.

Acceptance tests record one verdict each through the `criterion` fixture;
after the run a summary section lists every criterion with PASS or FAIL on
its own line, plus the measured numbers that decided it.
"""

import pytest

CRITERIA = {
    1: "solver matches the exhaustive oracle on tiny 1D grids",
    2: "two-cell datum (0, 10) with unit pair weight shrinks to (1, 9)",
    3: "ordered data give ordered solutions; sup norm and sign are kept",
    4: "every converged solve carries a valid dual certificate",
    5: "layer-cake identity and set-function submodularity hold exactly",
    6: "unit-interval perimeter bracket hits the closed form and scales",
    7: "curvature oracles: interval endpoint, half space, disc scaling",
    8: "superlevel sets of solves beat single- and few-cell flips",
    9: "level-set optimality defect falls as the grid refines",
    10: "boundary translation slope matches the first-variation formula",
    11: "holder datum yields holder minimizer with matched level gaps",
    12: "identical config and seed reproduce byte-identical reports",
}

_results: dict = {}


@pytest.fixture
def criterion():
    """Recorder for acceptance verdicts: criterion(num, passed, detail)."""

    def record(num: int, passed, detail: str = ""):
        _results[num] = (bool(passed), str(detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        if num in _results:
            passed, detail = _results[num]
            word = "PASS" if passed else "FAIL"
        else:
            word, detail = "NOT RUN", ""
        line = f"criterion {num:2d} [{word}] {CRITERIA[num]}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
