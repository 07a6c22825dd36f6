"""Dense complex linear algebra at context precision for small systems.

Closed forms for 2x2 (SVD, eigendecomposition, gain/loss propagator) plus a
general scaling-and-squaring matrix exponential.  Entries of matrix products
are correctly rounded on the software backend (exact accumulation, one
rounding per real part); hardware backends accumulate with sequentially
rounded machine operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import mpmath

from .errors import (
    ArithmeticDomainError,
    ConditioningError,
    ConfigurationError,
    ExceptionalPointError,
)
from .kernel import (
    PrecisionContext,
    RoundedComplex,
    cadd,
    cdiv,
    cdot,
    cfloat,
    cmake,
    cmul,
    cneg,
    conj,
    csub,
    czero,
)

#: 13th-order diagonal rational approximant coefficients for exp
_PADE13 = (
    64764752532480000, 32382376266240000, 7771770303897600, 1187353796428800,
    129060195264000, 10559470521600, 670442572800, 33522128640, 1323241920,
    40840800, 960960, 16380, 182, 1,
)
_THETA13 = 5.371920351148152


@dataclass(frozen=True)
class ComplexMatrix:
    """Square matrix of context-rounded complex entries."""

    rows: tuple
    ctx: PrecisionContext

    @property
    def dim(self) -> int:
        return len(self.rows)

    @classmethod
    def from_complex(cls, rows: Sequence[Sequence[complex]], ctx: PrecisionContext) -> "ComplexMatrix":
        n = len(rows)
        if n < 1 or any(len(r) != n for r in rows):
            raise ConfigurationError("matrix must be square and non-empty")
        return cls(tuple(tuple(cmake(ctx, complex(z)) for z in r) for r in rows), ctx)

    @classmethod
    def identity(cls, n: int, ctx: PrecisionContext) -> "ComplexMatrix":
        one = ctx.ops.from_int(1)
        zero = ctx.ops.zero()
        return cls(tuple(tuple(RoundedComplex(one if i == j else zero, zero)
                               for j in range(n)) for i in range(n)), ctx)

    def entry(self, i: int, j: int) -> RoundedComplex:
        return self.rows[i][j]

    def to_complex(self) -> list[list[complex]]:
        return [[cfloat(self.ctx, z) for z in r] for r in self.rows]

    def column(self, j: int) -> tuple:
        return tuple(r[j] for r in self.rows)


def matvec(m: ComplexMatrix, vec: Sequence[RoundedComplex]) -> tuple:
    """Matrix-vector product; each output part rounded per the backend rule."""
    ctx = m.ctx
    return tuple(cdot(ctx, row, vec) for row in m.rows)


def matmul(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    ctx = a.ctx
    n = a.dim
    cols = [b.column(j) for j in range(n)]
    return ComplexMatrix(tuple(tuple(cdot(ctx, a.rows[i], cols[j])
                                     for j in range(n)) for i in range(n)), ctx)


def mat_add(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    ctx = a.ctx
    return ComplexMatrix(tuple(tuple(cadd(ctx, x, y) for x, y in zip(ra, rb))
                               for ra, rb in zip(a.rows, b.rows)), ctx)


def mat_sub(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    ctx = a.ctx
    return ComplexMatrix(tuple(tuple(csub(ctx, x, y) for x, y in zip(ra, rb))
                               for ra, rb in zip(a.rows, b.rows)), ctx)


def mat_scale_real(a: ComplexMatrix, s) -> ComplexMatrix:
    ctx = a.ctx
    ops = ctx.ops
    return ComplexMatrix(tuple(tuple(RoundedComplex(ops.mul(z.re, s), ops.mul(z.im, s))
                                     for z in r) for r in a.rows), ctx)


def det_2x2(m: ComplexMatrix) -> RoundedComplex:
    ctx = m.ctx
    r = m.rows
    return cdot(ctx, (r[0][0], cneg(ctx, r[0][1])), (r[1][1], r[1][0]))


def _abs_estimate(z: RoundedComplex, ctx) -> float:
    ops = ctx.ops
    return math.hypot(ops.to_float(z.re), ops.to_float(z.im))


# ---------------------------------------------------------------------------
# 2x2 singular values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SvdResult:
    """Extreme singular values with underflow protection on the smaller one."""

    sigma_max: object
    sigma_min: object
    floor_applied: bool
    ctx: PrecisionContext

    def sigma_max_float(self) -> float:
        return self.ctx.ops.to_float(self.sigma_max)

    def sigma_min_float(self) -> float:
        return self.ctx.ops.to_float(self.sigma_min)

    def ln_kappa(self) -> float:
        """ln(sigma_max/sigma_min) evaluated from the exact stored values, so
        it neither overflows nor loses accuracy for extreme ratios."""
        ops = self.ctx.ops
        fmax = ops.to_fraction(self.sigma_max)
        fmin = ops.to_fraction(self.sigma_min)
        if fmin == 0:
            raise ArithmeticDomainError("zero sigma_min")
        with mpmath.workprec(80):
            return float(mpmath.log(mpmath.mpf(fmax.numerator) / fmax.denominator)
                         - mpmath.log(mpmath.mpf(fmin.numerator) / fmin.denominator))


def svd_2x2(m: ComplexMatrix, floor=None) -> SvdResult:
    """Extreme singular values via the trace/determinant closed form on M†M.

    sigma_min is recovered as |det|/sigma_max (stable at huge condition
    numbers) and floored at beta^(-2m) by default.
    """
    if m.dim != 2:
        raise ConfigurationError("svd_2x2 needs a 2x2 matrix")
    ctx = m.ctx
    ops = ctx.ops
    if floor is None:
        floor = ops.pow2(-2 * ctx.m)
    (a, b), (c, d) = m.rows
    # Gram matrix entries (Hermitian): g11, g22 real; g12 complex
    g11 = ops.sum_products([(a.re, a.re, 1), (a.im, a.im, 1),
                            (c.re, c.re, 1), (c.im, c.im, 1)])
    g22 = ops.sum_products([(b.re, b.re, 1), (b.im, b.im, 1),
                            (d.re, d.re, 1), (d.im, d.im, 1)])
    g12 = cdot(ctx, (a, c), (b, d), conj_coeffs=True)
    half = ops.pow2(-1)
    diff_half = ops.mul(ops.sub(g11, g22), half)
    # discriminant ((g11-g22)/2)^2 + |g12|^2: a sum of squares, no cancellation
    disc = ops.sum_products([(diff_half, diff_half, 1),
                             (g12.re, g12.re, 1), (g12.im, g12.im, 1)])
    mu_max = ops.add(ops.mul(ops.add(g11, g22), half), ops.sqrt(disc))
    sigma_max = ops.sqrt(mu_max)
    det = det_2x2(m)
    abs_det = ops.sqrt(ops.sum_products([(det.re, det.re, 1), (det.im, det.im, 1)]))
    if ops.is_zero(sigma_max):
        sigma_max = floor
    sigma_min = ops.div(abs_det, sigma_max)
    floor_applied = False
    if ops.to_fraction(sigma_min) < ops.to_fraction(floor):
        sigma_min = floor
        floor_applied = True
    return SvdResult(sigma_max, sigma_min, floor_applied, ctx)


# ---------------------------------------------------------------------------
# 2x2 eigendecomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigResult:
    """Eigenvalues plus unit-column eigenvector matrix and its inverse."""

    eigenvalues: tuple          # RoundedComplex pair, amplified mode first
    v: ComplexMatrix
    v_inv: ComplexMatrix

    def eigenvalues_complex(self) -> list[complex]:
        ctx = self.v.ctx
        return [cfloat(ctx, z) for z in self.eigenvalues]


def _csqrt(ctx, z: RoundedComplex) -> RoundedComplex:
    """Stable complex square root with context-rounded operations."""
    ops = ctx.ops
    if ops.is_zero(z.re) and ops.is_zero(z.im):
        return czero(ctx)
    r = ops.sqrt(ops.sum_products([(z.re, z.re, 1), (z.im, z.im, 1)]))
    half = ops.pow2(-1)
    two = ops.from_int(2)
    if ops.to_float(z.re) >= 0:
        u = ops.sqrt(ops.mul(ops.add(r, z.re), half))
        if ops.is_zero(u):
            return czero(ctx)
        v = ops.div(z.im, ops.mul(two, u))
        return RoundedComplex(u, v)
    w = ops.sqrt(ops.mul(ops.sub(r, z.re), half))
    if ops.to_float(z.im) < 0:
        w = ops.neg(w)
    u = ops.div(z.im, ops.mul(two, w))
    return RoundedComplex(u, w)


def eig_2x2(h: ComplexMatrix) -> EigResult:
    """Eigenpairs from the quadratic characteristic polynomial.

    Columns of V are unit 2-norm with the largest-magnitude component rotated
    real-positive; V^-1 comes from the adjugate.  The amplified mode (largest
    imaginary part of the eigenvalue) is listed first.
    """
    if h.dim != 2:
        raise ConfigurationError("eig_2x2 needs a 2x2 matrix")
    ctx = h.ctx
    ops = ctx.ops
    (a, b), (c, d) = h.rows
    tr = cadd(ctx, a, d)
    diff = csub(ctx, a, d)
    # discriminant (a-d)^2 + 4 b c  (equals tr^2 - 4 det)
    four = cmake(ctx, 4.0 + 0.0j)
    disc = cadd(ctx, cmul(ctx, diff, diff), cmul(ctx, four, cmul(ctx, b, c)))
    s = _csqrt(ctx, disc)
    scale = max(_abs_estimate(z, ctx) for z in (a, b, c, d))
    if _abs_estimate(s, ctx) <= 4.0 * ctx.eps * max(scale, 1.0):
        raise ExceptionalPointError("degenerate eigenvalues at working precision")
    half = ops.pow2(-1)

    def _half(z):
        return RoundedComplex(ops.mul(z.re, half), ops.mul(z.im, half))

    lam1 = _half(cadd(ctx, tr, s))
    lam2 = _half(csub(ctx, tr, s))
    # amplified mode first: larger imaginary part (growth rate of e^{-i lam t})
    k1 = (ops.to_float(lam1.im), ops.to_float(lam1.re))
    k2 = (ops.to_float(lam2.im), ops.to_float(lam2.re))
    if k2 > k1:
        lam1, lam2 = lam2, lam1
    cols = []
    for lam in (lam1, lam2):
        cand1 = (b, csub(ctx, lam, a))
        cand2 = (csub(ctx, lam, d), c)
        n1 = _abs_estimate(cand1[0], ctx) ** 2 + _abs_estimate(cand1[1], ctx) ** 2
        n2 = _abs_estimate(cand2[0], ctx) ** 2 + _abs_estimate(cand2[1], ctx) ** 2
        col = cand1 if n1 >= n2 else cand2
        cols.append(_normalize_column(ctx, col))
    v = ComplexMatrix((
        (cols[0][0], cols[1][0]),
        (cols[0][1], cols[1][1]),
    ), ctx)
    det_v = det_2x2(v)
    if ops.is_zero(det_v.re) and ops.is_zero(det_v.im):
        raise ExceptionalPointError("eigenvectors coalesce at working precision")
    v_inv = ComplexMatrix((
        (cdiv(ctx, v.rows[1][1], det_v), cdiv(ctx, cneg(ctx, v.rows[0][1]), det_v)),
        (cdiv(ctx, cneg(ctx, v.rows[1][0]), det_v), cdiv(ctx, v.rows[0][0], det_v)),
    ), ctx)
    return EigResult((lam1, lam2), v, v_inv)


def _normalize_column(ctx, col):
    ops = ctx.ops
    z1, z2 = col
    norm = ops.sqrt(ops.sum_products([(z1.re, z1.re, 1), (z1.im, z1.im, 1),
                                      (z2.re, z2.re, 1), (z2.im, z2.im, 1)]))
    if ops.is_zero(norm):
        raise ExceptionalPointError("zero eigenvector candidate")
    z1 = RoundedComplex(ops.div(z1.re, norm), ops.div(z1.im, norm))
    z2 = RoundedComplex(ops.div(z2.re, norm), ops.div(z2.im, norm))
    # rotate so the largest-magnitude component is real-positive
    big = z1 if _abs_estimate(z1, ctx) >= _abs_estimate(z2, ctx) else z2
    mag = ops.sqrt(ops.sum_products([(big.re, big.re, 1), (big.im, big.im, 1)]))
    phase = RoundedComplex(ops.div(big.re, mag), ops.neg(ops.div(big.im, mag)))
    return (cmul(ctx, z1, phase), cmul(ctx, z2, phase))


def kappa_v_numeric(h_or_v) -> float:
    """Eigenvector condition number ||V|| * ||V^-1|| (spectral norm, unit
    columns).  Accepts a Hamiltonian (eigendecomposed first) or an EigResult."""
    eig = h_or_v if isinstance(h_or_v, EigResult) else eig_2x2(h_or_v)
    s1 = svd_2x2(eig.v)
    s2 = svd_2x2(eig.v_inv)
    return s1.sigma_max_float() * s2.sigma_max_float()


# ---------------------------------------------------------------------------
# propagators
# ---------------------------------------------------------------------------

def propagator_closed_form(spec, t: float, ctx: PrecisionContext) -> ComplexMatrix:
    """Gain/loss dimer propagator from the hyperbolic closed form, evaluated
    at high precision and rounded once per entry into the context.

    Broken phase: U = cosh(eta t) I - (i/eta) sinh(eta t) H.  In the unbroken
    phase the form continues through eta -> i|eta| with cos/sin.  Diagonal
    entries are real, off-diagonal entries purely imaginary.
    """
    gamma, g = _symmetric_params(spec)
    if abs(gamma - g) < ctx.eps:
        raise ExceptionalPointError(
            f"|gamma-g|={abs(gamma - g):g} below the context resolution")
    with mpmath.workprec(max(ctx.m + 48, 140)):
        gm, gg, tt = mpmath.mpf(gamma), mpmath.mpf(g), mpmath.mpf(t)
        disc = gm * gm - gg * gg
        if disc > 0:
            eta = mpmath.sqrt(disc)
            ch = mpmath.cosh(eta * tt)
            snorm = mpmath.sinh(eta * tt) / eta
        else:
            om = mpmath.sqrt(-disc)
            ch = mpmath.cos(om * tt)
            snorm = mpmath.sin(om * tt) / om if om != 0 else tt
        u00 = ch + gm * snorm
        u11 = ch - gm * snorm
        off = -gg * snorm
        ops = ctx.ops
        zero = ops.zero()
        return ComplexMatrix((
            (RoundedComplex(ops.from_mpf(u00), zero), RoundedComplex(zero, ops.from_mpf(off))),
            (RoundedComplex(zero, ops.from_mpf(off)), RoundedComplex(ops.from_mpf(u11), zero)),
        ), ctx)


def propagator_diagonal(h_diag: Sequence[complex], t: float, ctx: PrecisionContext) -> ComplexMatrix:
    """exp(-i H t) for a diagonal Hamiltonian, entries correctly rounded."""
    ops = ctx.ops
    zero = ops.zero()
    n = len(h_diag)
    with mpmath.workprec(max(ctx.m + 48, 140)):
        entries = []
        for hk in h_diag:
            w = mpmath.exp(mpmath.mpc(0, -1) * mpmath.mpc(hk) * mpmath.mpf(t))
            entries.append(RoundedComplex(ops.from_mpf(w.real), ops.from_mpf(w.imag)))
    rows = []
    for i in range(n):
        rows.append(tuple(entries[i] if i == j else RoundedComplex(zero, zero)
                          for j in range(n)))
    return ComplexMatrix(tuple(rows), ctx)


def propagator_eigendecomp(h: ComplexMatrix, t: float, ctx: PrecisionContext) -> ComplexMatrix:
    """V exp(-i Lambda t) V^-1 with every operation rounded under the context."""
    eig = eig_2x2(h)
    kv = kappa_v_numeric(eig)
    if not math.isfinite(kv) or kv > 1.0 / ctx.eps:
        raise ConditioningError(f"eigenvector condition number {kv:g} exceeds 1/eps")
    ops = ctx.ops
    tval = ops.from_float(t)
    diag = []
    for lam in eig.eigenvalues:
        # -i*lam*t = (im(lam) - i re(lam)) * t
        re_arg = ops.mul(lam.im, tval)
        im_arg = ops.neg(ops.mul(lam.re, tval))
        radial = ops.exp(re_arg)
        cosv, sinv = ops.cos(im_arg), ops.sin(im_arg)
        diag.append(RoundedComplex(ops.mul(radial, cosv), ops.mul(radial, sinv)))
    vd = ComplexMatrix((
        (cmul(ctx, eig.v.rows[0][0], diag[0]), cmul(ctx, eig.v.rows[0][1], diag[1])),
        (cmul(ctx, eig.v.rows[1][0], diag[0]), cmul(ctx, eig.v.rows[1][1], diag[1])),
    ), ctx)
    return matmul(vd, eig.v_inv)


def propagator_series(h: ComplexMatrix, t: float, ctx: PrecisionContext) -> ComplexMatrix:
    """Scaling-and-squaring exponential of (-i H t) with the 13th-order
    diagonal rational approximant; all arithmetic at context precision."""
    ctx = h.ctx
    ops = ctx.ops
    n = h.dim
    tval = ops.from_float(t)
    # A = -i*H*t  componentwise: (re, im) -> (im*t, -re*t)
    a = ComplexMatrix(tuple(tuple(RoundedComplex(ops.mul(z.im, tval),
                                                 ops.neg(ops.mul(z.re, tval)))
                                  for z in row) for row in h.rows), ctx)
    norm = max((sum(_abs_estimate(z, ctx) for z in row) for row in a.rows), default=0.0)
    s = max(0, math.ceil(math.log2(norm / _THETA13))) if norm > _THETA13 else 0
    if s:
        a = mat_scale_real(a, ops.pow2(-s))
    # coefficients normalized by b0, so the constant term is exactly one and
    # the identity/nilpotent cases come out exact
    b0 = ops.from_int(_PADE13[0])
    b = [ops.div(ops.from_int(v), b0) for v in _PADE13]
    a2 = matmul(a, a)
    a4 = matmul(a2, a2)
    a6 = matmul(a2, a4)
    ident = ComplexMatrix.identity(n, ctx)

    def lincomb(coeffs_mats):
        acc = None
        for coeff, mat in coeffs_mats:
            term = mat_scale_real(mat, coeff)
            acc = term if acc is None else mat_add(acc, term)
        return acc

    u_inner = mat_add(matmul(a6, lincomb([(b[13], a6), (b[11], a4), (b[9], a2)])),
                      lincomb([(b[7], a6), (b[5], a4), (b[3], a2), (b[1], ident)]))
    u = matmul(a, u_inner)
    v = mat_add(matmul(a6, lincomb([(b[12], a6), (b[10], a4), (b[8], a2)])),
                lincomb([(b[6], a6), (b[4], a4), (b[2], a2), (b[0], ident)]))
    num = mat_add(v, u)
    den = mat_sub(v, u)
    x = _solve(den, num)
    for _ in range(s):
        x = matmul(x, x)
    return x


def _solve(a: ComplexMatrix, rhs: ComplexMatrix) -> ComplexMatrix:
    """Solve A X = B at context precision (adjugate for 2x2, Gaussian
    elimination with partial pivoting for small n)."""
    ctx = a.ctx
    n = a.dim
    if n == 1:
        return ComplexMatrix(((cdiv(ctx, rhs.rows[0][0], a.rows[0][0]),),), ctx)
    if n == 2:
        det = det_2x2(a)
        if ctx.ops.is_zero(det.re) and ctx.ops.is_zero(det.im):
            raise ArithmeticDomainError("singular system in series propagator")
        inv = ComplexMatrix((
            (cdiv(ctx, a.rows[1][1], det), cdiv(ctx, cneg(ctx, a.rows[0][1]), det)),
            (cdiv(ctx, cneg(ctx, a.rows[1][0]), det), cdiv(ctx, a.rows[0][0], det)),
        ), ctx)
        return matmul(inv, rhs)
    # small-n Gaussian elimination
    arows = [list(r) for r in a.rows]
    brows = [list(r) for r in rhs.rows]
    for k in range(n):
        piv = max(range(k, n), key=lambda i: _abs_estimate(arows[i][k], ctx))
        if _abs_estimate(arows[piv][k], ctx) == 0.0:
            raise ArithmeticDomainError("singular system in series propagator")
        arows[k], arows[piv] = arows[piv], arows[k]
        brows[k], brows[piv] = brows[piv], brows[k]
        for i in range(k + 1, n):
            f = cdiv(ctx, arows[i][k], arows[k][k])
            for j in range(k, n):
                arows[i][j] = csub(ctx, arows[i][j], cmul(ctx, f, arows[k][j]))
            for j in range(n):
                brows[i][j] = csub(ctx, brows[i][j], cmul(ctx, f, brows[k][j]))
    for k in range(n - 1, -1, -1):
        for j in range(n):
            acc = brows[k][j]
            for i in range(k + 1, n):
                acc = csub(ctx, acc, cmul(ctx, arows[k][i], brows[i][j]))
            brows[k][j] = cdiv(ctx, acc, arows[k][k])
    return ComplexMatrix(tuple(tuple(r) for r in brows), ctx)


def _symmetric_params(spec) -> tuple[float, float]:
    gamma = getattr(spec, "gamma", None)
    g1 = getattr(spec, "g1", None)
    g2 = getattr(spec, "g2", None)
    if gamma is None or g1 is None or g2 is None:
        raise ConfigurationError("closed form needs a dimer parameter set")
    if g1 != g2:
        raise ConfigurationError("closed form requires symmetric couplings")
    return float(gamma), float(g1)
