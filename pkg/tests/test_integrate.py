import numpy as np
import pytest

from subriem.errors import BlowUpError, MissingControls
from subriem.integrate import Trajectory, relative_drift, rk4, rk4_floats, step_count


def test_step_count():
    assert step_count(1.0, 1e-3) == 1000
    assert step_count(6.2832, 1e-3) == 6284
    assert step_count(0.1, 1.0) == 1
    with pytest.raises(ValueError):
        step_count(0.0, 1e-3)


def test_rk4_exponential_fourth_order():
    errs = []
    for h in (0.1, 0.05):
        t, y = rk4(lambda t, y: -y, [1.0], 1.0, h)
        errs.append(abs(y[-1, 0] - np.exp(-1.0)))
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_float_integrator_matches_array_integrator():
    rhs = lambda t, y: np.array([y[1], -y[0] + np.sin(t)])
    t1, y1 = rk4(rhs, [1.0, 0.0], 2.0, 1e-2)
    t2, y2 = rk4_floats(lambda t, y: [y[1], -y[0] + np.sin(t)], [1.0, 0.0], 2.0, 1e-2)
    np.testing.assert_array_equal(t1, t2)
    np.testing.assert_allclose(y1, y2, rtol=0, atol=1e-14)


@pytest.mark.parametrize("integrator", [rk4, rk4_floats])
def test_blow_up(integrator):
    rhs = lambda t, y: [y[0] ** 2] if integrator is rk4_floats else y**2
    with pytest.raises(BlowUpError) as info:
        integrator(rhs, [1.0], 2.0, 1e-3)
    assert info.value.time == pytest.approx(1.0, abs=0.01)


def test_trajectory_validation_and_columns():
    t = np.linspace(0, 1, 5)
    tr = Trajectory(t, np.zeros((5, 3)), u=np.ones((5, 2)))
    header, table = tr.columns()
    assert header == ["t", "q1", "q2", "q3", "u1", "u2"]
    assert table.shape == (5, 6)
    with pytest.raises(ValueError):
        Trajectory(t[::-1], np.zeros((5, 3)))
    with pytest.raises(ValueError):
        Trajectory(t, np.zeros((4, 3)))
    with pytest.raises(MissingControls):
        Trajectory(t, np.zeros((5, 3))).control_function()


def test_relative_drift():
    assert relative_drift([2.0, 2.0, 2.2]) == pytest.approx(0.1)
    assert relative_drift([0.0, 1e-3]) == pytest.approx(1e-3)
