"""
Tests for the property suite.
"""

import numpy as np
import pytest

from cdlab.small_scales import SmallScaleField
from cdlab.time_integration import make_alpha
from cdlab.verify import PropertySuite, condensation_direct


@pytest.fixture(scope="module")
def suite():
    return PropertySuite(mesh=16, include_sweep=False)


@pytest.mark.parametrize("check", ["oracle_assembly", "small_scale_integrator", "tau_algebra",
                                   "linear_coincidence", "initial_condition"])
def test_fast_checks_pass(suite, check):
    """The checks that do not need a benchmark run pass."""
    result = getattr(suite, f"check_{check}")()
    assert result.name == check
    assert result.passed, result.detail


def test_condensation_direct_steady_state():
    """The direct small-scale solve keeps the quasi-static fixed point."""
    v_alpha, r_alpha, value, rate = condensation_direct(make_alpha("crank-nicolson", 0.1), 0.05, -0.1, 0.0, 2.0)
    assert value == pytest.approx(-0.1)
    assert rate == pytest.approx(0.0, abs=1e-14)
    field = SmallScaleField(1, value=[-0.1])
    cond = field.condensation_coefficients(make_alpha("crank-nicolson", 0.1), 0.05)
    assert cond.value(np.array([2.0]))[0] == pytest.approx(v_alpha)


def test_failing_check_is_reported(suite, monkeypatch):
    """A check that raises is recorded as a failure and the suite continues."""

    def broken():
        raise RuntimeError("boom")

    monkeypatch.setattr(suite, "checks", lambda: [broken, suite.check_tau_algebra])
    results = suite.run()
    assert [r.passed for r in results] == [False, True]
    assert "boom" in results[0].detail
