"""Acceptance criteria 1-13 at their pinned tolerances (seed 42).

Each criterion's checks are asserted together; a summary line per criterion
is printed at the end of the pytest run.
"""

import pytest

from bosegas.cli import main
from bosegas.experiments import SUITES, run_suite

from conftest import ACCEPTANCE_LINES

SEED = 42


@pytest.fixture(scope="module")
def results():
    return {}


def _suite(results, number):
    if number not in results:
        results[number] = run_suite(number, SEED)
    return results[number]


def _report(number, title, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}")


@pytest.mark.parametrize("number", sorted(SUITES))
def test_criterion(results, number):
    res = _suite(results, number)
    failed = [c for c in res.checks if not c.passed]
    detail = "; ".join(f"{c.name}={c.value:.6g}" for c in (failed or res.checks)[:4])
    _report(number, res.title, res.passed, detail)
    assert res.checks, "suite produced no checks"
    assert not failed, "\n".join(
        f"{c.name}: value {c.value:.10g}, reference {c.reference:.10g}, tolerance {c.tolerance:.3g}" for c in failed)


@pytest.mark.parametrize("number", sorted(SUITES))
def test_criterion_runtime(results, number):
    res = _suite(results, number)
    assert res.elapsed < res.budget, f"{res.elapsed:.1f} s over the {res.budget:.0f} s budget"


def test_criterion_13_determinism(tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["suite", "--name", "acceptance", "--seed", str(SEED), "--out", str(out)])
        assert code in (0, 4)
        runs.append(out)
    same = all((runs[0] / f).read_bytes() == (runs[1] / f).read_bytes() for f in ("results.csv", "details.csv"))
    _report(13, "determinism", same, "results.csv and details.csv byte-identical" if same else "outputs differ")
    assert same
