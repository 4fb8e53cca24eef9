"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import pytest

from ramified.acceptance import CRITERIA


@pytest.mark.parametrize("criterion", CRITERIA, ids=[fn.__name__ for fn in CRITERIA])
def test_criterion(criterion, capsys):
    result = criterion()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
