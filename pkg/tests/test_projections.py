from fractions import Fraction

import numpy as np
import pytest

from packdist.covering import PointCloud
from packdist.digitsets import DigitFractal, enumerate_points, schedule_for_density
from packdist.norms import euclidean, hexagonal, linf, lp
from packdist.projections import (FiberIndex, ProjectionError, ProjectionFamily, coordinate_project, fiber_cover,
                                  jarvenpaa_check, projection_identity_check, recheck_cover, weak_transversality_scan,
                                  xi_samples)


def grid(n, side=1.0):
    g = (np.arange(n) + 0.5) * side / n
    X, Y = np.meshgrid(g, g, indexing="ij")
    return PointCloud.from_floats(np.column_stack([X.ravel(), Y.ravel()]))


class TestCoordinateProject:
    def test_first_coordinate(self):
        cloud = PointCloud.from_fractions([[Fraction(1, 3), 5]])
        proj = coordinate_project(cloud, [0])
        assert proj.point(0) == (Fraction(1, 3),) and proj.exact

    def test_product_projects_to_factor(self):
        s = schedule_for_density(Fraction(1, 2), 2, 3)
        E = enumerate_points(DigitFractal(s, 12, 2))
        F = enumerate_points(DigitFractal(s, 12, 1))
        for i in (0, 1):
            assert np.array_equal(coordinate_project(E, [i]).unique().points, F.unique().points)

    def test_identity(self):
        cloud = PointCloud.from_fractions([[1, 2, 3], [4, 5, 6]])
        assert np.array_equal(coordinate_project(cloud, [0, 1, 2]).points, cloud.points)

    @pytest.mark.parametrize("idx", [[], [1, 0], [0, 0], [3], [-1]])
    def test_bad_indices(self, idx):
        with pytest.raises(ProjectionError):
            coordinate_project(PointCloud.from_fractions([[1, 2, 3]]), idx)


class TestJarvenpaa:
    @pytest.mark.parametrize("d", [2, 3])
    def test_product_exact_margin(self, d):
        s = schedule_for_density(Fraction(1, 2), 5, 3)
        rep = jarvenpaa_check(DigitFractal(s, s.checkpoints[-1], d), 1)
        assert rep.margin == 0 and isinstance(rep.margin, Fraction)
        assert all(v == rep.set_slope / d for v in rep.subset_slopes.values())
        assert len(rep.subset_slopes) == d and rep.passed

    def test_product_two_of_three(self):
        s = schedule_for_density(Fraction(1, 3), 4, 3)
        rep = jarvenpaa_check(DigitFractal(s, s.checkpoints[-1], 3), 2)
        assert rep.margin == 0 and len(rep.subset_slopes) == 3

    def test_segment(self):
        seg = PointCloud.from_floats(np.column_stack([np.linspace(0, 1, 5000), np.zeros(5000)]))
        rep = jarvenpaa_check(seg, 1)
        assert rep.best_subset == (0,)
        assert abs(rep.margin - 0.5) <= 0.05

    def test_full_dimension(self):
        cloud = grid(64)
        rep = jarvenpaa_check(cloud, 2)
        assert rep.margin == pytest.approx(0.0, abs=1e-12)

    def test_bad_n(self):
        with pytest.raises(ProjectionError):
            jarvenpaa_check(grid(8), 3)


class TestProjectionIdentity:
    def test_full_space(self):
        pts = [(Fraction(i, 7), Fraction(i * i % 5, 3)) for i in range(10)]
        rep = projection_identity_check(pts, linf(2), [0, 1], [(-100, 0), (0, -100)])
        # both cones contain these points; V = R^2 so the identity is trivial
        assert rep.passed and rep.pairs_checked == 45

    def test_linf_cone_cloud(self):
        # points on a line of slope 1/2: |dx| >= |dy| for every pair
        pts = [(Fraction(k, 5), Fraction(k, 10) + 1) for k in range(12)]
        rep = projection_identity_check(pts, linf(2), [0], [(-50, 0)])
        assert rep.passed and rep.pairs_checked == 66

    def test_violating_pair(self):
        pts = [(Fraction(k, 5), Fraction(k, 10)) for k in range(5)] + [(Fraction(1, 5), Fraction(2, 3))]
        rep = projection_identity_check(pts, linf(2), [0], [(-50, 0)])
        assert not rep.passed and rep.offending_pair is not None
        x, y = rep.offending_pair
        assert abs(x[1] - y[1]) > abs(x[0] - y[0])

    def test_cone_precondition(self):
        rep = projection_identity_check([(0, 0), (1, 40)], linf(2), [0], [(-5, 0)])
        assert not rep.passed and rep.offending_point == (1, 40) and rep.pairs_checked == 0

    def test_hexagonal_facet(self):
        pts = [(Fraction(k, 3), Fraction(k, 3)) for k in range(6)]
        rep = projection_identity_check(pts, hexagonal(), [2], [(-10, -10)])
        assert rep.passed


class TestFamily:
    def test_validation(self):
        with pytest.raises(ProjectionError):
            ProjectionFamily(((0, 0), (0, 0)), euclidean(2))
        with pytest.raises(ProjectionError):
            ProjectionFamily(((0, 0, 0),), euclidean(2))
        fam = ProjectionFamily(((0.5, 0.5),), euclidean(2))
        with pytest.raises(ProjectionError, match="belongs to the cloud"):
            fam.check_cloud(PointCloud.from_floats([[0.5, 0.5], [0.1, 0.2]]))
        ProjectionFamily(((0.5, 0.5),), euclidean(2), allow_pins_in_cloud=True).check_cloud(
            PointCloud.from_floats([[0.5, 0.5]]))

    def test_evaluate(self):
        fam = ProjectionFamily(((0, 0), (3, 0)), euclidean(2))
        assert np.allclose(fam.evaluate([[0, 4]]), [[4, 5]])


@pytest.fixture(scope="module")
def square4():
    return grid(2000, 4.0)


class TestFiberCover:
    def test_transversal_intersection(self, square4):
        fam = ProjectionFamily(((0, 0), (4, 0)), euclidean(2))
        rep = fiber_cover(fam, square4, (2.5, 2.5), 0.05)
        # one intersection point (2, 1.5) in the square; greedy is within a factor 5 of 2 balls
        assert rep.certified and 1 <= rep.m <= 4 * 5
        assert np.all(np.linalg.norm(rep.centers - [2.0, 1.5], axis=1) < 0.2)

    def test_tangent_circles_elongate(self, square4):
        fam = ProjectionFamily(((0, 0), (4, 0)), euclidean(2))
        tangent = fiber_cover(fam, square4, (2, 2), 0.05)
        crossing = fiber_cover(fam, square4, (2.5, 2.5), 0.05)
        assert tangent.certified and tangent.m > crossing.m

    def test_empty_fiber(self, square4):
        fam = ProjectionFamily(((0, 0), (4, 0)), euclidean(2))
        rep = fiber_cover(fam, square4, (100, 100), 0.05)
        assert rep.m == 0 and rep.certified and rep.fiber_size == 0

    def test_single_pin_annulus(self):
        cloud = grid(400)
        fam = ProjectionFamily(((-0.3, -0.2),), linf(2))
        ms = [fiber_cover(fam, cloud, (0.9,), d).m for d in (0.08, 0.04, 0.02)]
        assert ms[0] < ms[1] < ms[2] and ms[2] >= 1.5 * ms[1]

    def test_monotone_up_to_greedy_factor(self):
        cloud = grid(600)
        for norm in (euclidean(2), lp(4, 2)):
            fam = ProjectionFamily(((-1.0, -1.2), (2.1, -0.9)), norm)
            index = FiberIndex(fam, cloud)
            for xi in xi_samples(fam, cloud, 10, seed=2):
                m = {d: fiber_cover(fam, cloud, xi, d, index=index).m for d in (0.16, 0.08, 0.04, 0.02)}
                assert all(m[2 * d] <= 5 * max(m[d], 1) for d in (0.08, 0.04, 0.02))

    def test_recheck_detects_gap(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert recheck_cover(pts, pts[:1] * 0 + [[0.5, 0]], 0.5)
        assert not recheck_cover(pts, np.array([[0.0, 0.0]]), 0.5)
        assert not recheck_cover(pts, np.zeros((0, 2)), 0.5)

    def test_bad_input(self, square4):
        fam = ProjectionFamily(((0, 0), (4, 0)), euclidean(2))
        with pytest.raises(ProjectionError):
            fiber_cover(fam, square4, (1, 1), 0)
        with pytest.raises(ProjectionError):
            fiber_cover(fam, square4, (1,), 0.1)


class TestScan:
    def test_two_pins_flat(self):
        fam = ProjectionFamily(((-1.0, -1.2), (2.1, -0.9)), euclidean(2))
        scan = weak_transversality_scan(fam, grid(500), [2.0**-k for k in range(4, 8)], n_xi=16, recheck=True)
        assert scan.exponent <= 0.15 and scan.all_certified and len(scan.worst_xi) == 4

    def test_single_pin_grows(self):
        fam = ProjectionFamily(((-1.0, -1.2),), euclidean(2))
        scan = weak_transversality_scan(fam, grid(500), [2.0**-k for k in range(4, 8)], n_xi=4)
        assert scan.exponent >= 0.8

    def test_errors(self):
        fam = ProjectionFamily(((-1.0, -1.2),), euclidean(2))
        with pytest.raises(ProjectionError):
            weak_transversality_scan(fam, grid(50), [0.1, 0.05])
        with pytest.raises(ProjectionError):
            weak_transversality_scan(fam, grid(50), [0.1, 0.05, 0.02], xis=[[100.0]])

    def test_deterministic(self):
        fam = ProjectionFamily(((-1.0, -1.2), (2.1, -0.9)), lp(4, 2))
        a = weak_transversality_scan(fam, grid(300), [0.1, 0.05, 0.025], n_xi=8, seed=4)
        b = weak_transversality_scan(fam, grid(300), [0.1, 0.05, 0.025], n_xi=8, seed=4)
        assert a == b
