"""Desk-scale acceptance criteria at their stated tolerances, one test each."""
import pytest

from avgsim import verify


@pytest.mark.slow
@pytest.mark.parametrize("criterion", verify.ALL, ids=lambda f: f.__name__)
def test_criterion(criterion, capsys):
    result = criterion()
    with capsys.disabled():
        print("\n" + result.line())
        for note in result.notes:
            print("       " + note)
    assert result.passed, result.line()
