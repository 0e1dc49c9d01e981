from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from packdist.digitsets import (BlockSchedule, DigitFractal, EnumerationCapError, ScheduleError, density_profile,
                                digit_vector, enumerate_points, exact_covering_count, random_dust, sample_points,
                                schedule_for_density, validate_digits)
from packdist.norms import hexagonal, linf
from packdist.rational import exact_power


def fractal(blocks, depth, d=1, q=3):
    return DigitFractal(BlockSchedule(tuple(blocks), Fraction(0), q), depth, d)


class TestSchedule:
    def test_full_density_abuts(self):
        s = schedule_for_density(1, 3, 2)
        assert all(m2 == M1 + 1 for (_, M1), (m2, _) in zip(s.blocks, s.blocks[1:]))
        M3 = s.checkpoints[-1]
        assert density_profile(s, M3) >= 1 - Fraction(3, M3)

    def test_zero_density(self):
        s = schedule_for_density(0, 3, 2)
        assert density_profile(s, s.checkpoints[-1]) <= Fraction(1, 10)
        prev = 0
        for k, (m, M) in enumerate(s.blocks, start=1):
            assert m - prev == k * 2 ** (k + 3)
            prev = M

    def test_half_density_k8(self):
        s = schedule_for_density(Fraction(1, 2), 8, 3)
        # independent recount of the active levels
        active = sum(1 for n in range(1, s.checkpoints[-1] + 1) if any(m <= n <= M for m, M in s.blocks))
        assert abs(Fraction(active, s.checkpoints[-1]) - Fraction(1, 2)) <= Fraction(5, 100)
        assert all(M - m == 2**k for k, (m, M) in enumerate(s.blocks, start=1))

    def test_known_blocks(self):
        s = schedule_for_density(Fraction(1, 2), 6, 3)
        assert s.blocks == ((4, 6), (12, 16), (26, 34), (52, 68), (102, 134), (200, 264))

    @pytest.mark.parametrize("rho", [-0.1, 1.5, "3/2"])
    def test_bad_density(self, rho):
        with pytest.raises(ScheduleError):
            schedule_for_density(rho, 3)

    def test_invariants_enforced(self):
        with pytest.raises(ScheduleError):
            BlockSchedule(((1, 2),), Fraction(1, 2))
        with pytest.raises(ScheduleError):
            BlockSchedule(((1, 3), (3, 8)), Fraction(1, 2))
        with pytest.raises(ScheduleError):
            BlockSchedule(((0, 3),), Fraction(1, 2))

    @given(st.fractions(0, 1, max_denominator=12), st.integers(1, 9), st.integers(2, 5))
    def test_checkpoint_density_property(self, rho, K, q):
        s = schedule_for_density(rho, K, q)
        assert s.K == K
        for k, M in enumerate(s.checkpoints, start=1):
            assert abs(density_profile(s, M) - rho) <= Fraction(2, k)
            if rho > 0:
                assert density_profile(s, M) <= rho or s.blocks[k - 1][0] == (s.blocks[k - 2][1] + 1 if k > 1 else 1)

    def test_text_round_trip(self):
        s = schedule_for_density(Fraction(1, 3), 5, 3)
        assert BlockSchedule.from_text(s.to_text(["seed=0"])) == s

    def test_density_profile_examples(self):
        assert density_profile(BlockSchedule(((1, 4),), 1, 2), 4) == 1
        assert density_profile(BlockSchedule(((3, 5),), 1, 2), 4) == Fraction(1, 2)
        assert density_profile(BlockSchedule(((1, 3), (5, 9)), 1, 2), 8) == Fraction(7, 8)
        with pytest.raises(ValueError):
            density_profile(BlockSchedule(((1, 3),), 1, 2), 0)


class TestCounts:
    def test_examples(self):
        assert exact_covering_count(fractal([(1, 3)], 3), 2) == 9
        assert exact_covering_count(fractal([(1, 3)], 3, d=2), 2) == 81
        assert exact_covering_count(fractal([(5, 7)], 7), 4) == 1
        with pytest.raises(ValueError):
            exact_covering_count(fractal([(1, 3)], 3), 4)

    def test_enumeration_cross_check(self):
        pts = enumerate_points(fractal([(1, 3)], 2, d=2))
        assert len(pts.unique()) == 81

    @given(st.fractions(0, 1, max_denominator=6), st.integers(1, 5), st.integers(2, 4), st.integers(1, 3))
    def test_product_monotone_sandwich(self, rho, K, q, d):
        s = schedule_for_density(rho, K, q)
        D = s.checkpoints[-1]
        F, E = DigitFractal(s, D, 1), DigitFractal(s, D, d)
        counts = [exact_covering_count(E, m) for m in range(D + 1)]
        assert all(exact_covering_count(F, m) ** d == counts[m] for m in range(D + 1))
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        for M in s.checkpoints:
            assert Fraction(exact_power(counts[M], q), M) == d * density_profile(s, M)


class TestPoints:
    def test_small_examples(self):
        pts = enumerate_points(DigitFractal(BlockSchedule(((1, 3),), 1, 2), 1))
        assert sorted(pts.point(i)[0] for i in range(len(pts))) == [0, Fraction(1, 2)]

    def test_single_level(self):
        s = BlockSchedule(((2, 4),), Fraction(1, 2), 3)
        pts = enumerate_points(DigitFractal(s, 2))
        assert sorted(pts.point(i)[0] for i in range(len(pts))) == [0, Fraction(1, 9), Fraction(2, 9)]

    def test_cap(self):
        with pytest.raises(EnumerationCapError, match="sample"):
            enumerate_points(fractal([(1, 20)], 20, d=2))

    def test_digits_vanish_off_schedule(self):
        s = schedule_for_density(Fraction(1, 2), 2, 3)
        F = DigitFractal(s, 16, 1)
        pts = enumerate_points(F)
        for i in range(0, len(pts), 97):
            digs = digit_vector(pts.point(i)[0], 3, 16)
            assert all(digs[m - 1] == 0 for m in range(1, 17) if not s.is_active(m))
        assert validate_digits(pts, F)

    def test_validator_rejects(self):
        s = schedule_for_density(Fraction(1, 2), 2, 3)
        F = DigitFractal(s, 16, 1)
        from packdist.covering import PointCloud
        assert not validate_digits(PointCloud.from_fractions([[Fraction(1, 3)]]), F)
        assert not validate_digits(PointCloud.from_floats([[0.0]]), F)

    def test_sample_valid_and_deterministic(self):
        s = schedule_for_density(Fraction(1, 2), 3, 3)
        F = DigitFractal(s, 34, 2)
        a = sample_points(F, 10**5, seed=7)
        b = sample_points(F, 10**5, seed=7)
        assert np.array_equal(a.points, b.points) and len(a) == 10**5
        assert validate_digits(a, F)
        assert not np.array_equal(a.points, sample_points(F, 10**5, seed=8).points)
        one = sample_points(F, 1, seed=3)
        assert len(one) == 1 and validate_digits(one, F)

    def test_sample_big_depth(self):
        s = schedule_for_density(Fraction(1, 2), 5, 3)
        F = DigitFractal(s, 134, 2)
        pts = sample_points(F, 50, seed=1)
        assert pts.points.dtype == object and validate_digits(pts, F)

    @pytest.mark.parametrize("norm", [linf(2, Fraction(1, 3)), hexagonal()])
    def test_norm_values_are_q_adic(self, norm):
        s = schedule_for_density(Fraction(1, 2), 2, 3)
        pts = sample_points(DigitFractal(s, 16, 2), 30, seed=2)
        for i in range(len(pts)):
            val = norm(pts.point(i))
            assert exact_power(val.denominator, 3) is not None

    def test_random_dust(self):
        a = random_dust(2, 3, 4, 8, 1000, seed=5)
        assert np.array_equal(a.points, random_dust(2, 3, 4, 8, 1000, seed=5).points)
        assert a.denominator == 3**8 and a.points.min() >= 0 and a.points.max() < 3**8
        with pytest.raises(ValueError):
            random_dust(2, 3, 10, 8, 10, seed=0)
