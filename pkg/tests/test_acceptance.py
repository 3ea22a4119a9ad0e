"""Acceptance criteria 1-10, one test each. Every test prints a single
PASS/FAIL line (run with ``-s`` to see them) followed by its details."""
import pytest

from qpke.harness.acceptance import CHECKS, run


@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number, capsys):
    result = run(number)
    with capsys.disabled():
        print()
        print(result.headline())
        for line in result.lines:
            print("    " + line)
    assert result.passed, "\n".join(result.lines)
