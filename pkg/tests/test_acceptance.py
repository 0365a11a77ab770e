"""Acceptance gate: every criterion at full scale (4096 paths, dt = 1/4096).

Each test prints one ``criterion NN PASS|FAIL`` line. A red criterion fails
its test; tolerances are fixed in the experiments and are not relaxed here.
"""

import pytest

from semilt.acceptance import CRITERIA, Scale, run_criterion

SCALE = Scale()


@pytest.mark.parametrize("number", [c.number for c in CRITERIA],
                         ids=[f"c{c.number:02d}_{c.title.replace(' ', '_')}" for c in CRITERIA])
def test_criterion(number, capsys):
    result = run_criterion(number, SCALE)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail


def test_scale_matches_contract():
    assert (SCALE.paths, SCALE.steps, SCALE.horizon, SCALE.tol_scale) == (4096, 4096, 1.0, 1.0)
