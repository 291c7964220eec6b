"""Scalar kernel: frac/theta/nu/psi, sigma3 gluing, decimal round trips."""

import random
from fractions import Fraction

import mpmath
import pytest
from mpmath import mp

from superx.scalar import (
    DEFAULT_PRECISION,
    Activation,
    BigReal,
    DomainError,
    decimal_str,
    frac,
    nu,
    parse_decimal,
    psi,
    sigma3,
    sigma3_deriv,
    sigma3_second_deriv,
    theta,
)

P = DEFAULT_PRECISION
TOL = BigReal.of(2, P) ** 0 if False else None  # placeholder, see _tol


def _tol(bits_off: int = 8) -> mpmath.mpf:
    return mpmath.mpf(2) ** (-(P - bits_off))


def br(x) -> BigReal:
    return BigReal.of(x, P)


class TestBigReal:
    def test_precision_propagates_as_max(self):
        a = BigReal.of("1.5", 128)
        b = BigReal.of("2.25", 192)
        assert (a + b).precision == 192
        assert (a * b).precision == 192
        assert (-a).precision == 128

    def test_arithmetic_exact_on_dyadics(self):
        assert (br("1.25") + br("0.5")).to_decimal() == "1.75"
        assert (br("1.5") * br("1.5")).to_decimal() == "2.25"
        assert (br(7) / br(2)).to_decimal() == "3.5"

    def test_decimal_round_trip_random(self):
        rng = random.Random(7)
        for _ in range(50):
            with mp.workprec(P):
                x = mpmath.mpf(rng.getrandbits(64)) / mpmath.mpf(2) ** rng.randrange(0, 80)
                if rng.random() < 0.5:
                    x = -x
            s = decimal_str(x)
            back = parse_decimal(s, P)
            assert back == x
            assert decimal_str(back) == s

    def test_decimal_round_trip_full_mantissa(self):
        with mp.workprec(P):
            x = mpmath.sqrt(2)
        assert parse_decimal(decimal_str(x), P) == x

    def test_fraction_round_trip(self):
        x = br("0.1")
        assert BigReal.of(x.as_fraction(), P) == x

    def test_comparisons(self):
        assert br("0.5") < br("0.75")
        assert br(3) == 3
        assert abs(br(-2)) == 2


class TestFrac:
    @pytest.mark.parametrize("x,expect", [("1.25", "0.25"), ("-0.25", "0.75"), (3, "0")])
    def test_examples(self, x, expect):
        assert frac(br(x)).to_decimal() == expect

    def test_shift_invariance(self):
        rng = random.Random(11)
        for _ in range(1000):
            x = br(rng.random() * 8 - 4)
            n = rng.randint(-10**6, 10**6)
            lhs = frac(x + n)
            rhs = frac(x)
            assert abs((lhs - rhs).value) < _tol()

    def test_range(self):
        rng = random.Random(12)
        for _ in range(200):
            v = frac(br(rng.random() * 100 - 50))
            assert 0 <= v.value < 1


class TestThetaNuPsi:
    @pytest.mark.parametrize("x,expect", [(0, "0"), ("0.5", "0.5"), ("1.5", "-0.5")])
    def test_theta_examples(self, x, expect):
        assert theta(br(x)).to_decimal() == expect

    def test_theta_matches_arcsin_sin_form(self):
        rng = random.Random(13)
        for _ in range(200):
            x = br(rng.random() * 20 - 10)
            with mp.workprec(P + 16):
                ref = mpmath.asin(mpmath.sinpi(x.value)) / mp.pi
            assert abs(theta(x).value - ref) < _tol()

    def test_theta_period_odd_bounded(self):
        rng = random.Random(14)
        for _ in range(1000):
            x = br(rng.random() * 6 - 3)
            assert abs((theta(x + 2) - theta(x)).value) < _tol()
            assert abs((theta(-x) + theta(x)).value) < _tol()
            assert abs(theta(x).value) <= mpmath.mpf(1) / 2

    @pytest.mark.parametrize("x,expect", [(1, "1"), ("0.75", "1"), ("1.25", "1")])
    def test_nu_examples(self, x, expect):
        assert nu(br(x)).to_decimal() == expect

    def test_nu_constant_on_odd_plateaus(self):
        rng = random.Random(15)
        for _ in range(500):
            k = 2 * rng.randint(-5, 5) + 1
            t = rng.random() - 0.5  # inside [k - 1/2, k + 1/2]
            assert nu(br(k + t)).to_decimal() == str(k)

    @pytest.mark.parametrize("x,expect", [("0.5", "1"), (0, "0"), ("0.25", "0.5")])
    def test_psi_examples(self, x, expect):
        assert psi(br(x)).to_decimal() == expect

    def test_psi_matches_composed_definition(self):
        rng = random.Random(16)
        for _ in range(300):
            x = br(rng.random() * 8 - 4)
            composed = nu(theta(x) - br("0.5")) + 1
            assert abs((psi(x) - composed).value) < _tol()

    def test_psi_zero_on_upper_half_period(self):
        rng = random.Random(17)
        for _ in range(300):
            x = br(1 + rng.random())  # [1, 2]
            assert psi(x).to_decimal() == "0"
            assert psi(x + 2 * rng.randint(-3, 3)).to_decimal() == "0"

    def test_partition_of_unity(self):
        rng = random.Random(18)
        for _ in range(10_000):
            t = br(rng.random() * 10 - 5)
            total = sum((psi(t - Fraction(q, 2)) for q in (-1, 0, 1, 2)), br(0))
            assert abs((total - 1).value) < _tol()


class TestSigma3:
    def test_value_examples(self):
        assert abs(sigma3(br(-1)).value - 1) < _tol()
        assert abs(sigma3(br(1)).value - 4) < _tol()

    def test_tail_limits(self):
        assert abs(sigma3(br(-10**9)).value) < 1e-8
        assert abs(sigma3(br(10**9)).value - 7) < 1e-8

    def test_c1_gluing(self):
        eps = BigReal(mpmath.mpf(2) ** -(P // 2), P)
        sqrt_mod = 2 * mpmath.sqrt(2 * eps.value)  # sqrt-modulus of sigma3' at the junctions
        for junction in (br(-1), br(1)):
            assert abs((sigma3(junction - eps) - sigma3(junction + eps)).value) < 8 * eps.value
            d = sigma3_deriv(junction - eps) - sigma3_deriv(junction + eps)
            assert abs(d.value) < sqrt_mod

    def test_branch_residuals_at_junctions(self):
        # evaluate each branch formula exactly at the junction points
        with mp.workprec(P + 32):
            left_m1 = -1 / mpmath.mpf(-1)
            mid_m1 = (mpmath.mpf(-1) * mpmath.asin(-1) + 0) / mp.pi - mpmath.mpf(3) / 2 + 2
            mid_p1 = (mpmath.mpf(1) * mpmath.asin(1) + 0) / mp.pi + mpmath.mpf(3) / 2 + 2
            right_p1 = 7 - 3 + mpmath.sinpi(mpmath.mpf(1)) / mp.pi
            d_left_m1 = mpmath.mpf(1)
            d_mid_m1 = mpmath.asin(-1) / mp.pi + mpmath.mpf(3) / 2
            d_mid_p1 = mpmath.asin(1) / mp.pi + mpmath.mpf(3) / 2
            d_right_p1 = 3 + mpmath.cospi(mpmath.mpf(1)) - 2 * mpmath.sinpi(mpmath.mpf(1)) / mp.pi
        assert abs(left_m1 - mid_m1) < _tol()
        assert abs(mid_p1 - right_p1) < _tol()
        assert abs(d_left_m1 - d_mid_m1) < _tol()
        assert abs(d_mid_p1 - d_right_p1) < _tol()

    def test_deriv_at_junctions(self):
        assert abs(sigma3_deriv(br(-1)).value - 1) < _tol()
        assert abs(sigma3_deriv(br(1)).value - 2) < _tol()

    def test_monotone_and_bounded(self):
        rng = random.Random(19)
        for _ in range(10_000):
            x = br(rng.random() * 100 - 50)
            assert sigma3_deriv(x).value > 0
            v = sigma3(x).value
            assert 0 < v < 7

    def test_arcsin_plus_three_halves_on_middle(self):
        rng = random.Random(20)
        for _ in range(200):
            x = br(rng.random() * 2 - 1)
            with mp.workprec(P + 16):
                ref = mpmath.asin(x.value) / mp.pi + mpmath.mpf(3) / 2
            assert abs(sigma3_deriv(x).value - ref) < _tol()

    def test_second_deriv_at_zero(self):
        with mp.workprec(P + 16):
            ref = 1 / mp.pi
        assert abs(sigma3_second_deriv(br(0)).value - ref) < _tol()


class TestActivation:
    def test_arcsin_strict_domain(self):
        with pytest.raises(DomainError):
            Activation.arcsin().apply(br("1.0000001"))

    def test_apply_basics(self):
        assert Activation.relu().apply(br(-2)).to_decimal() == "0"
        assert Activation.relu().apply(br("1.5")).to_decimal() == "1.5"
        assert Activation.leaky_relu("0.5").apply(br(-2)).to_decimal() == "-1"
        assert Activation.step().apply(br(0)).to_decimal() == "1"
        assert Activation.step().apply(br("-0.001")).to_decimal() == "0"
        assert Activation.floor().apply(br("2.75")).to_decimal() == "2"

    def test_token_round_trip(self):
        acts = [Activation.sin(), Activation.leaky_relu("0.01"), Activation.sigma3()]
        for a in acts:
            assert Activation.from_token(a.token()) == a

    def test_fraction_apply(self):
        assert Activation.relu().apply_fraction(Fraction(-1, 2)) == 0
        assert Activation.leaky_relu("0.5").apply_fraction(Fraction(-1, 2)) == Fraction(-1, 4)
        with pytest.raises(DomainError):
            Activation.sin().apply_fraction(Fraction(1))
