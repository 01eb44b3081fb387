import numpy as np
import pytest

from subriem.errors import NonHorizontalCurve
from subriem.geometry import SRStructure, structure_functions
from subriem.hamiltonian import horizontal_curve_from_control
from subriem.integrate import Trajectory
from subriem.schouten import (
    compare_straightest_shortest,
    parallel_transport,
    projected_levi_civita_residual,
    s_geodesic,
    schouten_christoffels,
    schouten_curvature,
)

FLAT = SRStructure([["1", "0", "0"], ["0", "1", "0"]], [["0", "0", "1"]])
SPHERE_FRAME = SRStructure([["(1+q1^2+q2^2)/2", "0"], ["0", "(1+q1^2+q2^2)/2"]], [])
SKEW_VALUE = 0.003638108348534064


def random_structure(rng, gD=None):
    a = rng.uniform(-0.3, 0.3, 8).tolist()
    X = [
        ["1", f"{a[0]!r}*q3", f"-q2/2 + {a[1]!r}*q1*q2 + {a[2]!r}*q3^2"],
        [f"{a[3]!r}*q2^2", "1", f"q1/2 + {a[4]!r}*q1^2"],
    ]
    Y = [[f"{a[5]!r}", f"{a[6]!r}*q1", f"1 + {a[7]!r}*q2"]]
    return SRStructure(X, Y, gD)


class TestChristoffels:
    def test_flat(self):
        assert np.all(schouten_christoffels(FLAT, [0.2, 0.3, 0.4]).gamma == 0)

    def test_heisenberg_vanishes(self, heisenberg, rng):
        for _ in range(5):
            assert np.max(np.abs(schouten_christoffels(heisenberg.structure, rng.normal(size=3)).gamma)) < 1e-15

    @pytest.mark.parametrize("gD", [None, [[2.0, 0.3], [0.3, 1.0]]])
    def test_torsion_and_metric(self, rng, gD):
        for _ in range(10):
            S = random_structure(rng, gD)
            for _ in range(5):
                tab = schouten_christoffels(S, rng.uniform(-1, 1, 3))
                assert tab.torsion_residual() < 1e-10
                assert tab.metric_residual(S.gD) < 1e-10

    def test_rigging_change_covariance(self, heisenberg, rng):
        S = heisenberg.structure.with_rigging([["0.3", "0", "1 - 0.15*q2"]])
        q = rng.normal(size=3)
        tab = schouten_christoffels(S, q)
        assert np.max(np.abs(tab.gamma)) > 1e-2
        assert tab.torsion_residual() < 1e-10
        assert tab.metric_residual(S.gD) < 1e-10


class TestSGeodesic:
    def test_flat_line(self):
        tr = s_geodesic(FLAT, [0, 0, 0], [0.6, 0.8], 1.0, 1e-2)
        np.testing.assert_allclose(tr.q[-1], [0.6, 0.8, 0], atol=1e-14)
        assert np.all(tr.u == tr.u[0])

    def test_heisenberg_line(self, heisenberg):
        tr = s_geodesic(heisenberg.structure, [0, 0, 0], [1, 0], 1.0, 1e-3)
        np.testing.assert_allclose(tr.q, np.column_stack([tr.times, 0 * tr.times, 0 * tr.times]), atol=1e-14)

    def test_speed_drift(self, skew):
        S = skew.structure.with_metric([[2.0, 0.3], [0.3, 1.0]])
        tr = s_geodesic(S, [0.1, 0.2, 0], [0.5, 0.5], 1.0, 1e-3)
        assert tr.diagnostics["speed_drift"] < 1e-8

    def test_projected_levi_civita(self, skew):
        tr = s_geodesic(skew.structure, [0.1, 0.2, 0], [0.6, 0.8], 1.0, 1e-2)
        assert projected_levi_civita_residual(skew.structure, tr) < 1e-6


class TestTransport:
    def test_tangent_is_autoparallel(self, skew):
        tr = s_geodesic(skew.structure, [0, 0, 0], [0.6, 0.8], 1.0, 1e-3)
        w = parallel_transport(skew.structure, tr, tr.u[0])
        np.testing.assert_allclose(w.u, tr.u, atol=1e-8)

    def test_flat_constant(self):
        tr = horizontal_curve_from_control(FLAT, [0, 0, 0], lambda t: [np.cos(t), np.sin(2 * t)], 1.0, 1e-2)
        w = parallel_transport(FLAT, tr, [0.3, -0.1])
        np.testing.assert_allclose(w.u, np.tile([0.3, -0.1], (len(tr.times), 1)), atol=1e-15)

    def test_norm_drift_on_random_curves(self, skew, rng):
        S = skew.structure.with_metric([[1.5, -0.2], [-0.2, 1.0]])
        for _ in range(3):
            a = rng.normal(size=4)
            u = lambda t, a=a: [a[0] + a[1] * np.sin(3 * t), a[2] * np.cos(t) + a[3] * t]
            tr = horizontal_curve_from_control(S, rng.uniform(-0.5, 0.5, 3), u, 1.0, 1e-3)
            w = parallel_transport(S, tr, rng.normal(size=2))
            assert w.diagnostics["norm_drift"] < 1e-8

    def test_rejects_non_horizontal(self, heisenberg):
        t = np.linspace(0, 1, 50)
        tr = Trajectory(t, np.column_stack([0 * t, 0 * t, t]))
        with pytest.raises(NonHorizontalCurve):
            parallel_transport(heisenberg.structure, tr, [1, 0])

    def test_rejects_bad_vector(self, heisenberg):
        tr = s_geodesic(heisenberg.structure, [0, 0, 0], [1, 0], 0.1, 1e-2)
        with pytest.raises(ValueError):
            parallel_transport(heisenberg.structure, tr, [np.inf, 0])


class TestCurvature:
    def test_flat(self):
        assert np.max(np.abs(schouten_curvature(FLAT, [0.1, 0.2, 0.3]))) < 1e-12

    def test_unit_sphere(self, rng):
        for _ in range(3):
            R = schouten_curvature(SPHERE_FRAME, rng.uniform(-1, 1, 2))
            np.testing.assert_allclose(R[:, 0, 1, 1], [1, 0], atol=1e-5)
            np.testing.assert_allclose(R[:, 0, 1, 0], [0, -1], atol=1e-5)

    def test_antisymmetry(self, skew, rng):
        R = schouten_curvature(skew.structure, rng.uniform(-1, 1, 3))
        np.testing.assert_allclose(R, -R.transpose(0, 2, 1, 3), atol=1e-6)

    def test_indices(self, skew):
        q = [0.2, 0.1, 0.0]
        np.testing.assert_array_equal(schouten_curvature(skew.structure, q, (0, 1, 1)),
                                      schouten_curvature(skew.structure, q)[:, 0, 1, 1])

    def test_metric_skewness_with_symmetric_rigging(self, rng):
        # Y = d/dz is a symmetry of this frame, so R is skew in its last pair
        S = SRStructure([["1", "0", "-q2/2 + 0.2*q2^2"], ["0", "1", "q1/2 + 0.1*q1^3"]], [["0", "0", "1"]])
        for _ in range(5):
            R = schouten_curvature(S, rng.uniform(-1, 1, 3))
            low = np.einsum("bijk,bl->ijkl", R, S.gD)
            assert np.max(np.abs(low + low.transpose(0, 1, 3, 2))) < 1e-5

    def test_skewness_defect_from_rigging_flow(self, skew, rng):
        # the symmetric part equals minus the Lie derivative of gD along the vertical bracket
        S, m = skew.structure, 2
        for _ in range(5):
            q = rng.uniform(-1, 1, 3)
            R = schouten_curvature(S, q)
            c = structure_functions(S, q)
            low = np.einsum("bijk,bl->ijkl", R, S.gD)
            D = np.einsum("aij,bak,bl->ijkl", c[m:, :m, :m], c[:m, m:, :m], S.gD)
            assert np.max(np.abs(low + low.transpose(0, 1, 3, 2) + D + D.transpose(0, 1, 3, 2))) < 1e-5


class TestCompare:
    def test_heisenberg(self, heisenberg, rng):
        for _ in range(3):
            v = rng.normal(size=2)
            dev, _ = compare_straightest_shortest(heisenberg.structure, rng.normal(size=3), v / np.linalg.norm(v), 1.0, 1e-3)
            assert dev < 1e-6

    def test_flat(self):
        assert compare_straightest_shortest(FLAT, [0, 0, 0], [1, 0], 1.0, 1e-2)[0] < 1e-14

    def test_skew_regression(self, skew):
        dev, (t, gap) = compare_straightest_shortest(skew.structure, [0, 0, 0], [1, 0], 1.0, 1e-3)
        assert dev > 1e-3
        assert dev == pytest.approx(SKEW_VALUE, rel=1e-6)
        assert gap[0] == 0 and len(t) == len(gap)
