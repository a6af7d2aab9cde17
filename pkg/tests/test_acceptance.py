"""Acceptance gate: every criterion at its stated tolerance, one line each."""

import pytest

from treepot import report


@pytest.mark.parametrize("criterion", report.ALL_CRITERIA,
                         ids=[fn.__name__.replace("criterion_", "") for fn in
                              report.ALL_CRITERIA])
def test_acceptance(criterion):
    result = criterion()
    print(result.line())
    assert result.passed, result.detail
