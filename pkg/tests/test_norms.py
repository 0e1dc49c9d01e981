import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from packdist.norms import (ConeSpec, DomainError, LpNorm, NormError, PolyhedralNorm, cone_contains, cone_X_contains,
                            direction_aperture, direction_cone, direction_constant, dump_norm, duality_check,
                            duality_residuals, euclidean, geomlem_constant, gradient, hexagonal, linf, load_norm, lp,
                            modulus_h, transversality_volume)

rationals = st.fractions(min_value=-10, max_value=10, max_denominator=50)
SMOOTH = [lp(1.5, 2), euclidean(2), lp(3, 2), lp(4, 2), LpNorm(3.0, (1.0, 2.5, 0.5))]
POLY = [linf(2), hexagonal(), PolyhedralNorm(((Fraction(1, 2), Fraction(1, 2)), (Fraction(1, 2), Fraction(-1, 2)))),
        linf(3, Fraction(1, 3))]


def rng(seed=0):
    return np.random.Generator(np.random.Philox(key=seed))


class TestEvaluate:
    def test_linf_coordinate_max(self):
        assert linf(2)((3, -4)) == 4
        assert isinstance(linf(2)((Fraction(3), Fraction(-4))), Fraction)

    @pytest.mark.parametrize("norm", SMOOTH[:4] + POLY[:3])
    def test_origin(self, norm):
        assert norm((0,) * norm.dim) == 0

    def test_rotated_square(self):
        norm = PolyhedralNorm(((Fraction(1, 2), Fraction(1, 2)), (Fraction(1, 2), Fraction(-1, 2))))
        assert norm((1, 1)) == 1
        assert norm.common_denominator == 2

    def test_non_spanning_rejected(self):
        with pytest.raises(NormError):
            PolyhedralNorm(((1, 1), (2, 2)))
        with pytest.raises(NormError):
            PolyhedralNorm(((1, 0),))

    def test_bad_lp(self):
        with pytest.raises(NormError):
            LpNorm(1.0, (1.0, 1.0))
        with pytest.raises(NormError):
            LpNorm(2.0, (1.0, -1.0))

    def test_exact_many_matches_scalar(self):
        norm = hexagonal()
        X = rng().integers(-50, 50, size=(200, 2))
        nums = norm.evaluate_exact_many(X)
        for row, n in zip(X, nums):
            assert Fraction(int(n), norm.common_denominator) == norm(tuple(int(v) for v in row))

    def test_big_integer_path(self):
        X = np.array([[3**50, -(3**49)]], dtype=object)
        assert linf(2).evaluate_exact_many(X)[0] == 3**50

    def test_smooth_extreme_scale(self):
        norm = lp(4, 2)
        assert norm((1e200, 1e200)) == pytest.approx(2**0.25 * 1e200, rel=1e-12)
        assert norm((1e-200, 0)) == pytest.approx(1e-200, rel=1e-12)


@given(st.sampled_from(POLY), st.lists(rationals, min_size=3, max_size=3), rationals)
def test_polyhedral_homogeneity_exact(norm, x, t):
    x = tuple(x[: norm.dim])
    assert norm(tuple(t * c for c in x)) == abs(t) * norm(x)


@given(st.sampled_from(POLY), st.lists(rationals, min_size=9, max_size=9))
def test_polyhedral_triangle_exact(norm, v):
    d = norm.dim
    x, y = tuple(v[:d]), tuple(v[3:3 + d])
    assert norm(tuple(a + b for a, b in zip(x, y))) <= norm(x) + norm(y)


@given(st.sampled_from(POLY), st.lists(rationals, min_size=3, max_size=3))
def test_polyhedral_argmax_cone(norm, x):
    x = tuple(x[: norm.dim])
    if norm(x) == 0:
        return
    vals = norm.facet_values(x)
    i = max(range(len(vals)), key=vals.__getitem__)
    assert cone_contains(norm, (0,) * norm.dim, i, tuple(-c for c in x))
    # brute-force agreement for every facet
    for j in range(norm.n_facets):
        assert cone_contains(norm, (0,) * norm.dim, j, x) == (vals[j] == max(vals))


@pytest.mark.parametrize("norm", SMOOTH)
def test_smooth_homogeneity_and_triangle(norm):
    g = rng(1)
    X = g.normal(size=(1000, norm.dim))
    Y = g.normal(size=(1000, norm.dim))
    t = g.normal(size=1000) * 10
    nx = norm.evaluate_many(X)
    assert np.allclose(norm.evaluate_many(t[:, None] * X), np.abs(t) * nx, rtol=1e-12, atol=0)
    assert np.all(norm.evaluate_many(X + Y) <= (nx + norm.evaluate_many(Y)) * (1 + 1e-12))


class TestGradient:
    def test_euclidean_radial(self):
        assert np.allclose(gradient(euclidean(2), (3, 4)), (0.6, 0.8))

    @pytest.mark.parametrize("p", [1.5, 2, 3, 4, 7])
    def test_axis_point(self, p):
        assert np.allclose(gradient(lp(p, 3), (1, 0, 0)), (1, 0, 0))

    def test_l4_diagonal(self):
        # d/dx_i (x1^4 + x2^4)^(1/4) at (1,1) = 2^(-3/4)
        assert np.allclose(gradient(lp(4, 2), (1, 1)), (2**-0.75, 2**-0.75), rtol=0, atol=1e-15)

    def test_origin_is_domain_error(self):
        with pytest.raises(DomainError):
            gradient(lp(3, 2), (0, 0))

    def test_polyhedral_facet_and_tie(self):
        assert gradient(linf(2), (Fraction(3), Fraction(-1))) == (1, 0)
        assert gradient(linf(2), (Fraction(-1), Fraction(-3))) == (0, -1)
        with pytest.raises(DomainError):
            gradient(linf(2), (Fraction(1), Fraction(1)))

    @pytest.mark.parametrize("norm", SMOOTH)
    def test_euler_identity(self, norm):
        X = rng(2).normal(size=(1000, norm.dim))
        G = norm.gradient_many(X)
        nx = norm.evaluate_many(X)
        assert np.max(np.abs(np.einsum("ij,ij->i", G, X) - nx) / nx) <= 1e-9

    @pytest.mark.parametrize("norm", SMOOTH)
    def test_finite_differences(self, norm):
        g = rng(3)
        X = g.normal(size=(1000, norm.dim))
        X *= (g.uniform(0.5, 2, size=1000) / norm.evaluate_many(X))[:, None]
        h = 1e-6
        fd = np.empty_like(X)
        for i in range(norm.dim):
            e = np.zeros(norm.dim)
            e[i] = h
            fd[:, i] = (norm.evaluate_many(X + e) - norm.evaluate_many(X - e)) / (2 * h)
        assert np.max(np.abs(fd - norm.gradient_many(X))) <= 1e-5


class TestDuality:
    def test_self_dual(self):
        r = duality_check(euclidean(2), (3, 4))
        assert r.passed and r.pairing_residual <= 1e-15 and r.norm_residual <= 1e-15
        assert np.allclose(r.functional, (3, 4))

    def test_l3(self):
        assert duality_check(lp(3, 2), (1, 2), tol=1e-9).passed

    def test_l4_axis(self):
        r = duality_check(lp(4, 2), (0, 1))
        assert r.passed and np.allclose(r.functional, (0, 1))

    def test_weighted_vectorized(self):
        norm = LpNorm(1.5, (2.0, 0.5, 1.0))
        r1, r2 = duality_residuals(norm, rng(4).normal(size=(1000, 3)))
        assert max(r1.max(), r2.max()) <= 1e-9

    def test_origin(self):
        with pytest.raises(DomainError):
            duality_check(lp(3, 2), (0, 0))


class TestCones:
    def test_linf_examples(self):
        assert cone_contains(linf(2), (0, 0), 0, (2, 1))
        assert not cone_contains(linf(2), (0, 0), 0, (1, 2))

    def test_bad_index(self):
        with pytest.raises(IndexError):
            cone_contains(linf(2), (0, 0), 2, (1, 0))

    def test_cone_X_examples(self):
        cone = ConeSpec((0, 0), ((1, 0),), 0.5)
        assert cone_X_contains(cone, (1, 0.4))
        assert cone_X_contains(cone, (-3, 0))
        assert not cone_X_contains(cone, (0, 2))
        with pytest.raises(DomainError):
            cone_X_contains(cone, (0, 0))

    def test_conespec_validation(self):
        with pytest.raises(ValueError):
            ConeSpec((0, 0), ((1, 1),), 0.5)
        with pytest.raises(ValueError):
            ConeSpec((0, 0), ((1, 0),), 1.0)

    @pytest.mark.parametrize("norm", SMOOTH)
    def test_direction_lemma(self, norm):
        lam = direction_constant(norm)
        eta = direction_aperture(norm)
        assert 0 < lam <= 0.5 and eta == pytest.approx(math.sqrt(1 - lam * lam))
        Z = rng(5).normal(size=(1000, norm.dim))
        assert all(cone_X_contains(direction_cone(norm, z), z) for z in Z)


class TestTransversality:
    def test_orthogonal_pins(self):
        assert transversality_volume(euclidean(2), (0.5, 0.5), [(0, 0), (1, 0)]) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("norm", [euclidean(2), euclidean(3)])
    def test_single_pin_unit(self, norm):
        x = (0.3,) * norm.dim
        assert transversality_volume(norm, x, [(1.0,) * norm.dim]) == pytest.approx(1.0, abs=1e-12)

    def test_single_pin_lp_dual_norm_one(self):
        norm = lp(4, 2)
        g = norm.gradient((0.3, -1.2))
        assert norm.dual(g) == pytest.approx(1.0, abs=1e-12)
        assert transversality_volume(norm, (0.3, -1.2), [(0, 0)]) == pytest.approx(np.linalg.norm(g), abs=1e-12)

    def test_collinear_zero(self):
        assert transversality_volume(euclidean(2), (2.0, 0.0), [(0, 0), (1, 0)]) == pytest.approx(0.0, abs=1e-7)

    def test_errors_name_pin(self):
        with pytest.raises(DomainError, match="pin 1"):
            transversality_volume(euclidean(2), (1.0, 1.0), [(0, 0), (1, 1)])
        with pytest.raises(DomainError, match="pin 0"):
            transversality_volume(linf(2), (Fraction(1), Fraction(1)), [(0, 0), (2, 0)])

    def test_polyhedral_interior(self):
        v = transversality_volume(linf(2), (Fraction(3), Fraction(1)), [(0, 0), (Fraction(3), Fraction(5))])
        assert v == pytest.approx(1.0)

    @given(st.floats(0.1, 5), st.floats(0.1, 5))
    def test_ray_invariance(self, s1, s2):
        x = np.array([0.4, 0.7])
        z1, z2 = np.array([-1.0, 0.2]), np.array([1.5, -0.4])
        base = transversality_volume(euclidean(2), x, [z1, z2])
        moved = transversality_volume(euclidean(2), x, [x + s1 * (z1 - x), x + s2 * (z2 - x)])
        assert moved == pytest.approx(base, abs=1e-12)

    def test_geomlem_constant(self):
        assert geomlem_constant(0.5, 4) == 4.0
        assert geomlem_constant(0.0, 2) == math.inf


class TestModulus:
    def test_euclidean_taylor_bound(self):
        assert 0 <= modulus_h(euclidean(2), 0.1) <= 0.01

    @pytest.mark.parametrize("norm", [euclidean(2), lp(4, 2), lp(1.5, 2)])
    def test_ratio_decreases(self, norm):
        ratios = [modulus_h(norm, e) / e for e in (0.1, 0.01, 0.001)]
        assert ratios[0] > ratios[1] > ratios[2]
        assert ratios[2] < 0.1 * ratios[0] or ratios[2] < 1e-3

    def test_zero_and_monotone(self):
        norm = lp(3, 2)
        assert modulus_h(norm, 0) == 0
        vals = [modulus_h(norm, e) for e in np.geomspace(1e-7, 1, 30)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_reproducible(self):
        assert modulus_h(lp(3, 2), 0.05) == modulus_h(LpNorm(3.0, (1.0, 1.0)), 0.05)


class TestNormFiles:
    @pytest.mark.parametrize("norm", [hexagonal(), linf(3, Fraction(1, 3)), lp(4, 2), LpNorm(1.5, (1.0, 2.0))])
    def test_round_trip(self, norm, tmp_path):
        path = tmp_path / "norm.json"
        path.write_text(dump_norm(norm))
        assert load_norm(str(path)) == norm
        assert load_norm(dump_norm(norm)) == norm

    def test_fraction_strings(self):
        data = json.loads(dump_norm(hexagonal()))
        assert data["polyhedral"]["facets"][2] == ["2/3", "2/3"]

    def test_bad_documents(self):
        with pytest.raises(NormError):
            load_norm({"ellipse": {}})
        with pytest.raises(NormError):
            load_norm({"polyhedral": {"q": 2, "facets": [["1/3", "0"], ["0", "1/3"]]}})
