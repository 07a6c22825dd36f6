"""Arithmetic kernel: m-bit rounded reals and complexes plus native float backends.

The software backend models a binary floating-point number with an m-bit
significand and an unbounded exponent.  Every elementary operation (add, sub,
mul, div, sqrt) returns the infinitely precise result rounded to nearest with
ties to even.  Because the exponent is unbounded there are no subnormals and
no overflow: a zero result always means the exact result was zero.

Native backends delegate to IEEE float64 (Python floats) and float32 (numpy
scalars), which implement the same rounding rule in hardware at 53 and 23
stored significand bits.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import ArithmeticDomainError, ConfigurationError

MIN_BITS = 2
MAX_BITS = 256

#: stored significand bits reported for the native formats
NATIVE32_BITS = 23
NATIVE64_BITS = 53

_LOG2_10 = math.log2(10.0)


class Backend(enum.Enum):
    SOFTWARE = "software"
    NATIVE32 = "native32"
    NATIVE64 = "native64"


class RoundedReal:
    """A software floating-point value: (-1)**sign * man * 2**exp.

    ``man`` is either zero or normalized (top bit set) with at most the
    context's significand width.  ``exact`` records whether the operation that
    produced the value was exact (no bits discarded).  With an unbounded
    exponent a zero value is always a true zero; nothing ever underflows or
    flushes to zero.
    """

    __slots__ = ("sign", "man", "exp", "exact")

    def __init__(self, sign: int, man: int, exp: int, exact: bool = True):
        self.sign = sign
        self.man = man
        self.exp = exp
        self.exact = exact

    def is_zero(self) -> bool:
        return self.man == 0

    def to_float(self) -> float:
        """Nearest float64.  int->float conversion rounds the significand
        correctly; the power-of-two scaling is exact, so no double rounding."""
        if self.man == 0:
            return 0.0
        try:
            v = math.ldexp(float(self.man), self.exp)
        except OverflowError:
            v = math.inf
        return -v if self.sign else v

    def to_fraction(self) -> Fraction:
        if self.man == 0:
            return Fraction(0)
        num = -self.man if self.sign else self.man
        if self.exp >= 0:
            return Fraction(num << self.exp)
        return Fraction(num, 1 << -self.exp)

    def __eq__(self, other):
        if not isinstance(other, RoundedReal):
            return NotImplemented
        return (self.sign, self.man, self.exp) == (other.sign, other.man, other.exp)

    def __hash__(self):
        return hash((self.sign, self.man, self.exp))

    def __repr__(self):
        return f"RoundedReal({self.to_float()!r}, man={self.man}, exp={self.exp})"


_ZERO = RoundedReal(0, 0, 0)


def _round_to(sign: int, man: int, exp: int, m: int, sticky: int = 0) -> RoundedReal:
    """Round a positive integer significand to m bits, nearest, ties to even.

    ``sticky`` flags discarded low-order magnitude beyond ``man``.
    """
    if man == 0:
        return RoundedReal(0, 0, 0, exact=sticky == 0)
    drop = man.bit_length() - m
    if drop <= 0:
        # widen to the canonical m-bit significand (exact)
        return RoundedReal(sign, man << -drop, exp + drop, exact=sticky == 0)
    rem = man & ((1 << drop) - 1)
    man >>= drop
    exp += drop
    half = 1 << (drop - 1)
    if rem > half or (rem == half and (sticky or (man & 1))):
        man += 1
        if man.bit_length() > m:
            man >>= 1
            exp += 1
    return RoundedReal(sign, man, exp, exact=(rem == 0 and sticky == 0))


class SoftwareOps:
    """Elementary rounded arithmetic at a fixed significand width."""

    backend = Backend.SOFTWARE

    def __init__(self, m: int):
        if not (MIN_BITS <= m <= MAX_BITS):
            raise ConfigurationError(
                f"software significand width must be in [{MIN_BITS}, {MAX_BITS}], got {m}")
        self.m = m

    # -- constructors ------------------------------------------------------

    def zero(self) -> RoundedReal:
        return _ZERO

    def from_int(self, n: int) -> RoundedReal:
        if n == 0:
            return _ZERO
        sign = 1 if n < 0 else 0
        return _round_to(sign, abs(n), 0, self.m)

    def from_float(self, x: float) -> RoundedReal:
        if x == 0.0:
            return _ZERO
        if not math.isfinite(x):
            raise ArithmeticDomainError(f"non-finite operand: {x}")
        num, den = float(abs(x)).as_integer_ratio()
        return _round_to(1 if x < 0 else 0, num, -(den.bit_length() - 1), self.m)

    def from_mpf(self, x) -> RoundedReal:
        """Round an mpmath real into the context."""
        sign, man, exp, bc = mpmath.mpf(x)._mpf_
        if man == 0:
            if bc != 0:
                raise ArithmeticDomainError(f"non-finite operand: {x}")
            return _ZERO
        return _round_to(sign, int(man), int(exp), self.m)

    def pow2(self, k: int) -> RoundedReal:
        """Exact power of two 2**k (always representable)."""
        return RoundedReal(0, 1 << (self.m - 1), k - (self.m - 1))

    # -- queries -----------------------------------------------------------

    def to_float(self, a: RoundedReal) -> float:
        return a.to_float()

    def to_fraction(self, a: RoundedReal) -> Fraction:
        return a.to_fraction()

    def is_zero(self, a: RoundedReal) -> bool:
        return a.man == 0

    # -- elementary operations ---------------------------------------------

    def neg(self, a: RoundedReal) -> RoundedReal:
        if a.man == 0:
            return _ZERO
        return RoundedReal(a.sign ^ 1, a.man, a.exp, a.exact)

    def abs(self, a: RoundedReal) -> RoundedReal:
        if a.sign:
            return RoundedReal(0, a.man, a.exp, a.exact)
        return a

    def add(self, a: RoundedReal, b: RoundedReal) -> RoundedReal:
        m = self.m
        if a.man == 0:
            return RoundedReal(b.sign, b.man, b.exp, True)
        if b.man == 0:
            return RoundedReal(a.sign, a.man, a.exp, True)
        # order so that a has the higher top-bit position
        if a.exp + a.man.bit_length() < b.exp + b.man.bit_length():
            a, b = b, a
        # if b lies entirely below a's guard range it only contributes a sticky
        gap = a.exp - (b.exp + b.man.bit_length())
        if gap > m + 2:
            wide = a.man << (m + 3)
            wide = wide - 1 if a.sign != b.sign else wide + 1
            return _round_to(a.sign, wide, a.exp - (m + 3), m)
        e = min(a.exp, b.exp)
        sa = a.man << (a.exp - e)
        sb = b.man << (b.exp - e)
        total = (-sa if a.sign else sa) + (-sb if b.sign else sb)
        if total == 0:
            return _ZERO
        return _round_to(1 if total < 0 else 0, abs(total), e, m)

    def sub(self, a: RoundedReal, b: RoundedReal) -> RoundedReal:
        return self.add(a, self.neg(b))

    def mul(self, a: RoundedReal, b: RoundedReal) -> RoundedReal:
        if a.man == 0 or b.man == 0:
            return _ZERO
        return _round_to(a.sign ^ b.sign, a.man * b.man, a.exp + b.exp, self.m)

    def div(self, a: RoundedReal, b: RoundedReal) -> RoundedReal:
        if b.man == 0:
            raise ArithmeticDomainError("division by zero")
        if a.man == 0:
            return _ZERO
        m = self.m
        shift = m + 2 + max(0, b.man.bit_length() - a.man.bit_length())
        q, r = divmod(a.man << shift, b.man)
        exp = a.exp - b.exp - shift
        if r:
            q = (q << 1) | 1
            exp -= 1
        return _round_to(a.sign ^ b.sign, q, exp, m)

    def sqrt(self, a: RoundedReal) -> RoundedReal:
        if a.man == 0:
            return _ZERO
        if a.sign:
            raise ArithmeticDomainError("sqrt of a negative value")
        m = self.m
        man, exp = a.man, a.exp
        # widen so the integer root has at least m+3 bits, keeping exp even
        k = 2 * m + 6 - man.bit_length()
        if k < 0:
            k = 0
        if (exp - k) & 1:
            k += 1
        man <<= k
        exp -= k
        s = math.isqrt(man)
        r = man - s * s
        h = exp // 2
        if r:
            s = (s << 1) | 1
            h -= 1
        return _round_to(0, s, h, m)

    def sum_products(self, terms: Sequence[tuple]) -> RoundedReal:
        """Correctly rounded sum of signed products: round(sum s*a*b) once.

        Each term is (a, b, s) with s in {+1, -1}.  The accumulation is exact
        (integer arithmetic), so the result carries a single rounding error.
        Used for the dense linear-algebra products; the elementary-op surface
        above is unchanged.
        """
        e_min = None
        parts = []
        for a, b, s in terms:
            if a.man == 0 or b.man == 0:
                continue
            man = a.man * b.man
            if a.sign ^ b.sign:
                s = -s
            exp = a.exp + b.exp
            parts.append((man if s > 0 else -man, exp))
            if e_min is None or exp < e_min:
                e_min = exp
        if not parts:
            return _ZERO
        total = 0
        for man, exp in parts:
            total += man << (exp - e_min)
        if total == 0:
            return _ZERO
        return _round_to(1 if total < 0 else 0, abs(total), e_min, self.m)

    # -- transcendental scalars ---------------------------------------------

    def _from_hp(self, fn) -> RoundedReal:
        with mpmath.workprec(self.m + 40):
            return self.from_mpf(fn())

    def exp(self, a: RoundedReal) -> RoundedReal:
        return self._from_hp(lambda: mpmath.exp(_to_mpf(a)))

    def cos(self, a: RoundedReal) -> RoundedReal:
        return self._from_hp(lambda: mpmath.cos(_to_mpf(a)))

    def sin(self, a: RoundedReal) -> RoundedReal:
        return self._from_hp(lambda: mpmath.sin(_to_mpf(a)))


def _to_mpf(a: RoundedReal):
    return mpmath.mpf((a.sign, a.man, a.exp, a.man.bit_length()))


class _NativeOps:
    """Shared implementation for the hardware float backends."""

    _t = None  # scalar constructor

    def zero(self):
        return self._t(0.0)

    def from_int(self, n: int):
        return self._t(n)

    def from_float(self, x: float):
        if not math.isfinite(x):
            raise ArithmeticDomainError(f"non-finite operand: {x}")
        return self._t(x)

    def from_mpf(self, x):
        return self._t(_mpf_to_float(x, self.m))

    def pow2(self, k: int):
        return self._t(math.ldexp(1.0, k))

    def to_float(self, a) -> float:
        return float(a)

    def to_fraction(self, a) -> Fraction:
        return Fraction(float(a))

    def is_zero(self, a) -> bool:
        return float(a) == 0.0

    def neg(self, a):
        return self._t(-a)

    def abs(self, a):
        return self._t(abs(a))

    def add(self, a, b):
        return self._t(a + b)

    def sub(self, a, b):
        return self._t(a - b)

    def mul(self, a, b):
        return self._t(a * b)

    def div(self, a, b):
        if float(b) == 0.0:
            raise ArithmeticDomainError("division by zero")
        return self._t(a / b)

    def sum_products(self, terms):
        """Hardware backends accumulate sequentially, one rounding per op."""
        acc = self.zero()
        for a, b, s in terms:
            p = self.mul(a, b)
            acc = self.add(acc, p) if s > 0 else self.sub(acc, p)
        return acc

    def exp(self, a):
        return self._t(math.exp(float(a)))

    def cos(self, a):
        return self._t(math.cos(float(a)))

    def sin(self, a):
        return self._t(math.sin(float(a)))


class Native64Ops(_NativeOps):
    backend = Backend.NATIVE64
    m = NATIVE64_BITS
    _t = staticmethod(float)

    def sqrt(self, a):
        if a < 0.0:
            raise ArithmeticDomainError("sqrt of a negative value")
        return math.sqrt(a)


class Native32Ops(_NativeOps):
    backend = Backend.NATIVE32
    m = NATIVE32_BITS
    _t = staticmethod(np.float32)

    def sqrt(self, a):
        if a < 0.0:
            raise ArithmeticDomainError("sqrt of a negative value")
        return np.sqrt(np.float32(a))


def _mpf_to_float(x, m: int) -> float:
    v = float(mpmath.mpf(x))
    return float(np.float32(v)) if m == NATIVE32_BITS else v


@dataclass(frozen=True)
class PrecisionContext:
    """Arithmetic backend with base beta=2 and precision floor eps = 2**-m."""

    backend: Backend
    m: int
    beta: int = 2

    def __post_init__(self):
        if self.beta != 2:
            raise ConfigurationError("only base 2 is supported at runtime")
        if self.backend is Backend.SOFTWARE:
            if not (MIN_BITS <= self.m <= MAX_BITS):
                raise ConfigurationError(
                    f"software significand width must be in [{MIN_BITS}, {MAX_BITS}], got {self.m}")
        elif self.m != {Backend.NATIVE32: NATIVE32_BITS, Backend.NATIVE64: NATIVE64_BITS}[self.backend]:
            raise ConfigurationError(f"{self.backend.value} has a fixed width")
        object.__setattr__(self, "_ops", _make_ops(self.backend, self.m))

    @classmethod
    def software(cls, m: int) -> "PrecisionContext":
        return cls(Backend.SOFTWARE, m)

    @classmethod
    def native32(cls) -> "PrecisionContext":
        return cls(Backend.NATIVE32, NATIVE32_BITS)

    @classmethod
    def native64(cls) -> "PrecisionContext":
        return cls(Backend.NATIVE64, NATIVE64_BITS)

    @property
    def eps(self) -> float:
        return math.ldexp(1.0, -self.m)

    @property
    def decimal_digits(self) -> int:
        return math.ceil(self.m / _LOG2_10)

    @property
    def ops(self):
        return self._ops

    @property
    def label(self) -> str:
        if self.backend is Backend.SOFTWARE:
            return f"software-m{self.m}"
        return self.backend.value

    def describe(self) -> dict:
        """Serialized form used in run manifests."""
        return {"backend": self.backend.value, "m": self.m, "beta": self.beta}


def _make_ops(backend: Backend, m: int):
    if backend is Backend.SOFTWARE:
        return SoftwareOps(m)
    if backend is Backend.NATIVE64:
        return Native64Ops()
    return Native32Ops()


def context_create(backend: str, m: int | None = None) -> PrecisionContext:
    """Factory used by the CLI: backend name plus optional width."""
    try:
        b = Backend(backend.lower())
    except ValueError:
        raise ConfigurationError(f"unknown backend {backend!r}") from None
    if b is Backend.SOFTWARE:
        if m is None:
            raise ConfigurationError("software backend needs a significand width")
        return PrecisionContext.software(m)
    if m is not None and m != {Backend.NATIVE32: NATIVE32_BITS, Backend.NATIVE64: NATIVE64_BITS}[b]:
        raise ConfigurationError(f"{b.value} has a fixed width")
    return PrecisionContext.native32() if b is Backend.NATIVE32 else PrecisionContext.native64()


def rounded_arith(op: str, a, b, ctx: PrecisionContext):
    """Elementary-operation dispatch: op in {add, sub, mul, div, sqrt}."""
    ops = ctx.ops
    table = {"add": ops.add, "sub": ops.sub, "mul": ops.mul, "div": ops.div}
    if op == "sqrt":
        return ops.sqrt(a)
    try:
        fn = table[op]
    except KeyError:
        raise ConfigurationError(f"unknown operation {op!r}") from None
    return fn(a, b)


def bits_from_dynamic_range_db(dr_db: float) -> float:
    """Effective significand bits equivalent to a dynamic range in decibels."""
    if dr_db < 0:
        raise ArithmeticDomainError("dynamic range must be non-negative")
    return dr_db / (20.0 * math.log10(2.0))


# ---------------------------------------------------------------------------
# complex layer
# ---------------------------------------------------------------------------

class RoundedComplex:
    """Complex value whose parts are context scalars (RoundedReal on the
    software backend, machine floats on the native ones)."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        self.re = re
        self.im = im

    def __repr__(self):
        return f"RoundedComplex({self.re!r}, {self.im!r})"


def cmake(ctx: PrecisionContext, z: complex) -> RoundedComplex:
    ops = ctx.ops
    return RoundedComplex(ops.from_float(z.real), ops.from_float(z.imag))


def cfloat(ctx: PrecisionContext, z: RoundedComplex) -> complex:
    ops = ctx.ops
    return complex(ops.to_float(z.re), ops.to_float(z.im))


def cadd(ctx, a: RoundedComplex, b: RoundedComplex) -> RoundedComplex:
    ops = ctx.ops
    return RoundedComplex(ops.add(a.re, b.re), ops.add(a.im, b.im))


def csub(ctx, a: RoundedComplex, b: RoundedComplex) -> RoundedComplex:
    ops = ctx.ops
    return RoundedComplex(ops.sub(a.re, b.re), ops.sub(a.im, b.im))


def cneg(ctx, a: RoundedComplex) -> RoundedComplex:
    ops = ctx.ops
    return RoundedComplex(ops.neg(a.re), ops.neg(a.im))


def conj(ctx, a: RoundedComplex) -> RoundedComplex:
    ops = ctx.ops
    return RoundedComplex(a.re, ops.neg(a.im))


def cmul(ctx, a: RoundedComplex, b: RoundedComplex) -> RoundedComplex:
    """Four real multiplies and two adds, each individually rounded."""
    ops = ctx.ops
    re = ops.sub(ops.mul(a.re, b.re), ops.mul(a.im, b.im))
    im = ops.add(ops.mul(a.re, b.im), ops.mul(a.im, b.re))
    return RoundedComplex(re, im)


def cabs2(ctx, a: RoundedComplex):
    """|a|^2 as a context scalar (correctly rounded sum of squares)."""
    return ctx.ops.sum_products([(a.re, a.re, 1), (a.im, a.im, 1)])


def cdiv(ctx, a: RoundedComplex, b: RoundedComplex) -> RoundedComplex:
    ops = ctx.ops
    den = cabs2(ctx, b)
    if ops.is_zero(den):
        raise ArithmeticDomainError("complex division by zero")
    re = ops.div(ops.sum_products([(a.re, b.re, 1), (a.im, b.im, 1)]), den)
    im = ops.div(ops.sum_products([(a.im, b.re, 1), (a.re, b.im, -1)]), den)
    return RoundedComplex(re, im)


def cdot(ctx, coeffs: Sequence[RoundedComplex], vec: Sequence[RoundedComplex],
         conj_coeffs: bool = False) -> RoundedComplex:
    """sum_j coeffs[j]*vec[j] with each real part rounded once on the software
    backend (exact accumulation) and sequentially on hardware backends."""
    ops = ctx.ops
    ci = -1 if conj_coeffs else 1
    re_terms, im_terms = [], []
    for c, v in zip(coeffs, vec):
        re_terms.append((c.re, v.re, 1))
        re_terms.append((c.im, v.im, -ci))
        im_terms.append((c.re, v.im, 1))
        im_terms.append((c.im, v.re, ci))
    return RoundedComplex(ops.sum_products(re_terms), ops.sum_products(im_terms))


def czero(ctx) -> RoundedComplex:
    z = ctx.ops.zero()
    return RoundedComplex(z, z)


def cfrom_mpc(ctx, re_mpf, im_mpf) -> RoundedComplex:
    ops = ctx.ops
    return RoundedComplex(ops.from_mpf(re_mpf), ops.from_mpf(im_mpf))
