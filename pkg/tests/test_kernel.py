import math
import random
from fractions import Fraction

import numpy as np
import pytest

from echobits.errors import ArithmeticDomainError, ConfigurationError
from echobits.kernel import (
    Backend,
    PrecisionContext,
    RoundedReal,
    bits_from_dynamic_range_db,
    cabs2,
    cadd,
    cdot,
    cfloat,
    cmake,
    cmul,
    context_create,
    rounded_arith,
)


def round_oracle(x: Fraction, m: int) -> Fraction:
    """Independent round-to-nearest-even at m significand bits via exact
    rational arithmetic (binary search for the exponent, no float anywhere)."""
    if x == 0:
        return Fraction(0)
    s = -1 if x < 0 else 1
    y = abs(x)
    # find e with 2^(m-1) <= y * 2^-e < 2^m
    e = 0
    while y * Fraction(2) ** (-e) >= 2 ** m:
        e += 1
    while y * Fraction(2) ** (-e) < 2 ** (m - 1):
        e -= 1
    scaled = y * Fraction(2) ** (-e)
    lo = int(scaled)  # floor
    frac = scaled - lo
    if frac > Fraction(1, 2):
        lo += 1
    elif frac == Fraction(1, 2) and lo % 2 == 1:
        lo += 1
    return s * lo * Fraction(2) ** e


@pytest.fixture(scope="module")
def ctx53():
    return PrecisionContext.software(53)


class TestContext:
    def test_eps_is_power_of_base(self, ctx53):
        assert ctx53.eps == 2.0 ** -53
        f = Fraction(ctx53.eps)
        assert f.numerator == 1 and (f.denominator & (f.denominator - 1)) == 0

    def test_native_widths(self):
        assert PrecisionContext.native32().m == 23
        assert PrecisionContext.native64().m == 53

    def test_decimal_digits_against_integer_oracle(self):
        # smallest d with 10^d >= 2^m, except exact powers never coincide
        for m in [2, 10, 15, 24, 50, 53, 90, 200, 256]:
            d = PrecisionContext.software(m).decimal_digits
            assert 10 ** d >= 2 ** m
            assert 10 ** (d - 1) < 2 ** m

    def test_decimal_digits_example(self):
        assert PrecisionContext.software(50).decimal_digits == 16

    def test_width_bounds(self):
        PrecisionContext.software(2)
        PrecisionContext.software(256)
        with pytest.raises(ConfigurationError):
            PrecisionContext.software(1)
        with pytest.raises(ConfigurationError):
            PrecisionContext.software(257)

    def test_context_create(self):
        assert context_create("software", 53).m == 53
        assert context_create("native32").m == 23
        assert context_create("native64").m == 53
        with pytest.raises(ConfigurationError):
            context_create("software")
        with pytest.raises(ConfigurationError):
            context_create("native32", 24)
        with pytest.raises(ConfigurationError):
            context_create("quantum")

    def test_describe(self, ctx53):
        assert ctx53.describe() == {"backend": "software", "m": 53, "beta": 2}


class TestRoundedArith:
    def test_swamped_add(self):
        ctx = PrecisionContext.software(23)
        ops = ctx.ops
        a = ops.from_float(2.0 ** 34)
        b = ops.from_float(1.0)
        r = rounded_arith("add", a, b, ctx)
        assert r == a
        assert not r.exact

    def test_tie_to_even_add(self):
        ctx = PrecisionContext.software(24)
        ops = ctx.ops
        r = ops.add(ops.from_float(2.0 ** 24), ops.from_float(1.0))
        assert r.to_float() == 2.0 ** 24

    def test_tie_to_even_round(self):
        # 1.25 sits exactly between the m=2 neighbours 1.0 and 1.5
        ctx = PrecisionContext.software(2)
        assert ctx.ops.from_float(1.25).to_float() == 1.0

    def test_division_by_zero(self, ctx53):
        ops = ctx53.ops
        with pytest.raises(ArithmeticDomainError):
            ops.div(ops.from_float(1.0), ops.zero())

    def test_sqrt_negative(self, ctx53):
        with pytest.raises(ArithmeticDomainError):
            ctx53.ops.sqrt(ctx53.ops.from_float(-1.0))

    @pytest.mark.parametrize("m", [2, 5, 11, 24, 53, 100, 256])
    def test_ops_match_rational_oracle(self, m):
        ctx = PrecisionContext.software(m)
        ops = ctx.ops
        rng = random.Random(1000 + m)
        for _ in range(300):
            xa = Fraction(rng.randint(-(2 ** m), 2 ** m), rng.randint(1, 2 ** 10))
            xb = Fraction(rng.randint(1, 2 ** m), rng.randint(1, 2 ** 10))
            a = _from_fraction(ops, round_oracle(xa, m))
            b = _from_fraction(ops, round_oracle(xb, m))
            fa, fb = a.to_fraction(), b.to_fraction()
            assert ops.add(a, b).to_fraction() == round_oracle(fa + fb, m)
            assert ops.sub(a, b).to_fraction() == round_oracle(fa - fb, m)
            assert ops.mul(a, b).to_fraction() == round_oracle(fa * fb, m)
            assert ops.div(a, b).to_fraction() == round_oracle(fa / fb, m)

    @pytest.mark.parametrize("m", [2, 11, 53, 200])
    def test_sqrt_matches_rational_oracle(self, m):
        ctx = PrecisionContext.software(m)
        ops = ctx.ops
        rng = random.Random(2000 + m)
        for _ in range(200):
            a = _from_fraction(ops, round_oracle(Fraction(rng.randint(1, 2 ** (m + 4)), rng.randint(1, 7)), m))
            r = ops.sqrt(a).to_fraction()
            fa = a.to_fraction()
            # r must be the correctly rounded square root: check |r^2 - fa|
            # against both neighbours
            ulp = Fraction(2) ** (_ulp_exp(r, m))
            for cand in (r - ulp, r + ulp):
                assert abs(r * r - fa) <= abs(cand * cand - fa)

    def test_exact_flags(self, ctx53):
        ops = ctx53.ops
        assert ops.add(ops.from_float(1.0), ops.from_float(2.0)).exact
        assert ops.mul(ops.from_float(1.5), ops.from_float(2.0)).exact
        assert not ops.div(ops.from_float(1.0), ops.from_float(3.0)).exact
        assert ops.sqrt(ops.from_float(4.0)).exact
        assert not ops.sqrt(ops.from_float(2.0)).exact

    def test_zero_only_from_true_zero(self, ctx53):
        # unbounded exponent: tiny results never flush to zero
        ops = ctx53.ops
        t = ops.pow2(-8000)
        assert not ops.is_zero(ops.mul(t, t))
        x = ops.from_float(3.5)
        assert ops.is_zero(ops.sub(x, x))

    def test_unknown_op(self, ctx53):
        with pytest.raises(ConfigurationError):
            rounded_arith("pow", ctx53.ops.from_float(1.0), None, ctx53)


def _ulp_exp(r: Fraction, m: int) -> int:
    v = abs(r)
    e = 0
    while v * Fraction(2) ** (-e) >= 2 ** m:
        e += 1
    while v * Fraction(2) ** (-e) < 2 ** (m - 1):
        e -= 1
    return e


def _from_fraction(ops, f: Fraction):
    if f == 0:
        return ops.zero()
    num, den = f.numerator, f.denominator
    # rationals from round_oracle always have power-of-two denominators
    assert den & (den - 1) == 0
    sign = 1 if num < 0 else 0
    from echobits.kernel import _round_to
    return _round_to(sign, abs(num), -(den.bit_length() - 1), ops.m)


class TestDynamicRangeBits:
    def test_sixty_db(self):
        v = bits_from_dynamic_range_db(60.0)
        assert abs(v - 60.0 / (20.0 * math.log10(2.0))) < 1e-12
        assert round(v) == 10  # ~10 effective bits

    def test_one_bit(self):
        assert abs(bits_from_dynamic_range_db(6.0206) - 1.0) < 1e-4

    def test_96_db(self):
        assert abs(bits_from_dynamic_range_db(96.0) - 96.0 / 6.0205999132796239) < 1e-9

    def test_negative_rejected(self):
        with pytest.raises(ArithmeticDomainError):
            bits_from_dynamic_range_db(-1.0)


class TestComplex:
    def test_cmul_is_componentwise(self, ctx53):
        # the complex product must equal the explicit 4-multiply/2-add form
        ops = ctx53.ops
        rng = random.Random(7)
        for _ in range(200):
            a = cmake(ctx53, complex(rng.uniform(-2, 2), rng.uniform(-2, 2)))
            b = cmake(ctx53, complex(rng.uniform(-2, 2), rng.uniform(-2, 2)))
            p = cmul(ctx53, a, b)
            re = ops.sub(ops.mul(a.re, b.re), ops.mul(a.im, b.im))
            im = ops.add(ops.mul(a.re, b.im), ops.mul(a.im, b.re))
            assert p.re == re and p.im == im

    def test_cmul_matches_hardware_complex(self):
        # native64 componentwise product == CPython complex product
        ctx = PrecisionContext.native64()
        rng = random.Random(11)
        for _ in range(500):
            za = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
            zb = complex(rng.uniform(-3, 3), rng.uniform(-3, 3))
            assert cfloat(ctx, cmul(ctx, cmake(ctx, za), cmake(ctx, zb))) == za * zb

    def test_cdot_correctly_rounded(self, ctx53):
        # one rounding per part: compare against the exact rational value
        rng = random.Random(13)
        for _ in range(100):
            coeffs = [cmake(ctx53, complex(rng.uniform(-2, 2), rng.uniform(-2, 2))) for _ in range(2)]
            vec = [cmake(ctx53, complex(rng.uniform(-2, 2), rng.uniform(-2, 2))) for _ in range(2)]
            d = cdot(ctx53, coeffs, vec)
            re_exact = sum(c.re.to_fraction() * v.re.to_fraction() - c.im.to_fraction() * v.im.to_fraction()
                           for c, v in zip(coeffs, vec))
            im_exact = sum(c.re.to_fraction() * v.im.to_fraction() + c.im.to_fraction() * v.re.to_fraction()
                           for c, v in zip(coeffs, vec))
            assert d.re.to_fraction() == round_oracle(re_exact, 53)
            assert d.im.to_fraction() == round_oracle(im_exact, 53)

    def test_cabs2(self, ctx53):
        z = cmake(ctx53, 3 + 4j)
        assert ctx53.ops.to_float(cabs2(ctx53, z)) == 25.0

    def test_native32_stays_float32(self):
        ctx = PrecisionContext.native32()
        z = cadd(ctx, cmake(ctx, 1.0 + 1.0j), cmake(ctx, 2.0 ** -30 + 0j))
        assert isinstance(z.re, np.float32)
        assert float(z.re) == 1.0  # swamped at 23 bits
