"""Acceptance criteria 1-15 at their stated sizes and tolerances (about 30-40 minutes on one core).

Prints one PASS/FAIL line per criterion; the lines are repeated in the
pytest terminal summary.  Run on its own with

    python tests/test_acceptance.py [k ...]
"""

import sys

import pytest

from layerwalk import acceptance

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # standalone run
    ACCEPTANCE_LINES = []

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


@pytest.fixture(scope="module")
def out_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("acceptance"))


@pytest.mark.parametrize("k", sorted(acceptance.CRITERIA))
def test_criterion(k, out_dir):
    v = acceptance.run_criterion(k, acceptance.SEEDS, out_dir)
    line = f"{v.line()} [{v.seconds:.0f}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert v.passed, line


if __name__ == "__main__":
    ks = [int(a) for a in sys.argv[1:]] or None
    verdicts = acceptance.run_all(ks, acceptance.SEEDS, "runs/acceptance")
    sys.exit(0 if all(v.passed for v in verdicts) else 1)
