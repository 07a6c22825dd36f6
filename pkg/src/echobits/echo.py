"""Echo protocol: stepped forward/backward evolution at context precision,
Loschmidt fidelity, and the work-echo ratio.

States are never renormalized during evolution (the non-unitary dynamics
changes the norm by design) and the backward propagator is rebuilt from the
negated generator by the same construction route as the forward one, never by
inverting the computed forward matrix.  Fidelity is evaluated in exact
rational arithmetic from the stored binary amplitudes, so it resolves
deviations far below any working precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ArithmeticDomainError, ConfigurationError, UndefinedRatioError
from .kernel import PrecisionContext, RoundedComplex, cfloat, cmake
from .linalg import (
    ComplexMatrix,
    EigResult,
    matvec,
    propagator_closed_form,
    propagator_diagonal,
    propagator_eigendecomp,
    propagator_series,
    svd_2x2,
)
from .model import ORACLE_BITS, DimerSpec, Phase, t_dr

#: context used for diagnostics (condition numbers) so they never corrupt
#: or get corrupted by the experiment's precision
_ORACLE_CTX = PrecisionContext.software(ORACLE_BITS)

DEFAULT_DT = 0.4
DEFAULT_TAU_STEP = 0.5
DEFAULT_TAU_FACTOR = 1.6


class Direction(enum.Enum):
    FORWARD = 1
    BACKWARD = -1


class Route(enum.Enum):
    """How step propagators are constructed.

    EXACT evaluates the generator-specific closed form at high precision and
    rounds each entry once into the context (correctly rounded propagator);
    EIGEN and SERIES run the eigendecomposition / scaling-and-squaring
    routes entirely in context arithmetic.
    """

    EXACT = "exact"
    EIGEN = "eigen"
    SERIES = "series"


@dataclass(frozen=True)
class SteppingPlan:
    """Decomposition tau = n_full * dt + dt_frac with 0 <= dt_frac < dt."""

    tau: float
    dt: float
    n_full: int
    dt_frac: float


def plan_steps(tau: float, dt: float = DEFAULT_DT) -> SteppingPlan:
    if tau < 0:
        raise ConfigurationError("target time must be non-negative")
    if dt <= 0:
        raise ConfigurationError("step must be positive")
    q = tau / dt
    n = math.floor(q)
    if q - n > 1 - 1e-9:  # counter float fuzz on exact multiples
        n += 1
    frac = tau - n * dt
    if abs(frac) < 1e-12 * max(1.0, tau):
        frac = 0.0
    return SteppingPlan(tau, dt, n, frac)


@dataclass(frozen=True)
class StateVector:
    """Amplitude vector at context precision; finite, never auto-normalized."""

    amplitudes: tuple
    ctx: PrecisionContext

    @classmethod
    def from_components(cls, values: Sequence[complex], ctx: PrecisionContext,
                        normalize: bool = False) -> "StateVector":
        vals = [complex(v) for v in values]
        if normalize:
            n = math.sqrt(sum(abs(v) ** 2 for v in vals))
            if n == 0:
                raise ArithmeticDomainError("cannot normalize the zero state")
            vals = [v / n for v in vals]
        return cls(tuple(cmake(ctx, v) for v in vals), ctx)

    @property
    def dim(self) -> int:
        return len(self.amplitudes)

    def to_complex(self) -> list[complex]:
        return [cfloat(self.ctx, z) for z in self.amplitudes]

    def norm_squared_exact(self) -> Fraction:
        ops = self.ctx.ops
        total = Fraction(0)
        for z in self.amplitudes:
            total += ops.to_fraction(z.re) ** 2 + ops.to_fraction(z.im) ** 2
        return total

    def norm(self) -> float:
        return _fraction_sqrt_float(self.norm_squared_exact())

    def is_zero(self) -> bool:
        return self.norm_squared_exact() == 0


def default_initial_state(ctx: PrecisionContext) -> StateVector:
    """The standard preparation [1, 0.01], unit-normalized."""
    return StateVector.from_components([1.0, 0.01], ctx, normalize=True)


def _fraction_sqrt_float(f: Fraction) -> float:
    if f == 0:
        return 0.0
    # integer square roots with 64 guard bits; int/int division rounds correctly
    num = math.isqrt(f.numerator << 128)
    den = math.isqrt(f.denominator << 128)
    return num / den


# ---------------------------------------------------------------------------
# systems and step propagators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagonalSystem:
    """Dynamics generated by a diagonal Hamiltonian (given by its diagonal)."""

    diagonal: tuple

    @classmethod
    def from_entries(cls, entries: Sequence[complex]) -> "DiagonalSystem":
        return cls(tuple(complex(e) for e in entries))

    def describe(self) -> dict:
        return {"kind": "diagonal",
                "diagonal": [[z.real, z.imag] for z in self.diagonal]}


def build_step_propagator(system, t: float, ctx: PrecisionContext,
                          route: Route = Route.EXACT) -> ComplexMatrix:
    """exp(-i H t) for the system at context precision; backward propagators
    are the same construction at -t (identical to rebuilding from -H)."""
    if isinstance(system, DimerSpec):
        if route is Route.EXACT:
            return propagator_closed_form(system, t, ctx)
        h = system.hamiltonian(ctx)
        return _matrix_route(h, t, ctx, route)
    if isinstance(system, DiagonalSystem):
        if route is Route.EXACT:
            return propagator_diagonal(system.diagonal, t, ctx)
        h = ComplexMatrix.from_complex(
            [[system.diagonal[i] if i == j else 0.0 for j in range(len(system.diagonal))]
             for i in range(len(system.diagonal))], ctx)
        return _matrix_route(h, t, ctx, route)
    if isinstance(system, ComplexMatrix):
        if route is Route.EXACT:
            if _is_diagonal(system):
                diag = [cfloat(system.ctx, system.rows[i][i]) for i in range(system.dim)]
                return propagator_diagonal(diag, t, ctx)
            # generic exact route: context-independent construction at oracle
            # precision, entries rounded once into the experiment context
            h_hp = ComplexMatrix.from_complex(system.to_complex(), _ORACLE_CTX)
            u_hp = propagator_eigendecomp(h_hp, t, _ORACLE_CTX)
            return _round_matrix_into(u_hp, ctx)
        return _matrix_route(system, t, ctx, route)
    raise ConfigurationError(f"unsupported system type {type(system).__name__}")


def _matrix_route(h: ComplexMatrix, t: float, ctx: PrecisionContext, route: Route) -> ComplexMatrix:
    if h.ctx != ctx:
        h = ComplexMatrix.from_complex(h.to_complex(), ctx)
    if route is Route.EIGEN:
        return propagator_eigendecomp(h, t, ctx)
    if route is Route.SERIES:
        return propagator_series(h, t, ctx)
    raise ConfigurationError(f"unsupported route {route}")


def _is_diagonal(m: ComplexMatrix) -> bool:
    ops = m.ctx.ops
    return all(ops.is_zero(m.rows[i][j].re) and ops.is_zero(m.rows[i][j].im)
               for i in range(m.dim) for j in range(m.dim) if i != j)


def _round_matrix_into(m: ComplexMatrix, ctx: PrecisionContext) -> ComplexMatrix:
    src_ops = m.ctx.ops
    ops = ctx.ops
    rows = []
    for r in m.rows:
        row = []
        for z in r:
            re = ops.from_mpf(_fraction_to_mpf(src_ops.to_fraction(z.re)))
            im = ops.from_mpf(_fraction_to_mpf(src_ops.to_fraction(z.im)))
            row.append(RoundedComplex(re, im))
        rows.append(tuple(row))
    return ComplexMatrix(tuple(rows), ctx)


def _fraction_to_mpf(f: Fraction):
    import mpmath
    with mpmath.workprec(ORACLE_BITS + 16):
        return mpmath.mpf(f.numerator) / f.denominator


def stepped_evolve(psi0: StateVector, system, plan: SteppingPlan,
                   ctx: PrecisionContext, direction: Direction = Direction.FORWARD,
                   route: Route = Route.EXACT) -> StateVector:
    """Repeated rounded matrix-vector products U(dt_frac) * U(dt)^n_full.

    The full-step propagator is built once per plan and reused; the backward
    leg uses the same construction at negated time.
    """
    if psi0.is_zero():
        raise ArithmeticDomainError("initial state must be nonzero")
    sgn = 1.0 if direction is Direction.FORWARD else -1.0
    amps = psi0.amplitudes
    if plan.n_full > 0:
        u_step = build_step_propagator(system, sgn * plan.dt, ctx, route)
        for _ in range(plan.n_full):
            amps = matvec(u_step, amps)
    if plan.dt_frac > 0.0:
        u_frac = build_step_propagator(system, sgn * plan.dt_frac, ctx, route)
        amps = matvec(u_frac, amps)
    return StateVector(tuple(amps), ctx)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def _overlap_squared_exact(a: StateVector, b: StateVector) -> Fraction:
    ops_a, ops_b = a.ctx.ops, b.ctx.ops
    re = Fraction(0)
    im = Fraction(0)
    for za, zb in zip(a.amplitudes, b.amplitudes):
        ar, ai = ops_a.to_fraction(za.re), ops_a.to_fraction(za.im)
        br, bi = ops_b.to_fraction(zb.re), ops_b.to_fraction(zb.im)
        re += ar * br + ai * bi
        im += ar * bi - ai * br
    return re * re + im * im


def fidelity_exact(psi0: StateVector, psi_rec: StateVector) -> Fraction:
    n0 = psi0.norm_squared_exact()
    n1 = psi_rec.norm_squared_exact()
    if n0 == 0 or n1 == 0:
        raise ArithmeticDomainError("fidelity of a zero-norm state is undefined")
    return _overlap_squared_exact(psi0, psi_rec) / (n0 * n1)


def loschmidt_fidelity(psi0: StateVector, psi_rec: StateVector) -> float:
    """|<psi0|psi_rec>|^2 / (<psi0|psi0><psi_rec|psi_rec>), scale-invariant."""
    return float(fidelity_exact(psi0, psi_rec))


def loschmidt_infidelity(psi0: StateVector, psi_rec: StateVector) -> float:
    """1 - F evaluated exactly before the final float conversion, so values
    far below double resolution remain meaningful."""
    return float(1 - fidelity_exact(psi0, psi_rec))


@dataclass(frozen=True)
class ReadoutSpec:
    """Hermitian readout observable with its ground energy subtracted."""

    diagonal: tuple | None
    matrix: tuple | None
    e_min: float

    @classmethod
    def from_diagonal(cls, entries: Sequence[float]) -> "ReadoutSpec":
        d = tuple(float(e) for e in entries)
        return cls(d, None, min(d))

    @classmethod
    def from_matrix(cls, rows: Sequence[Sequence[complex]]) -> "ReadoutSpec":
        m = tuple(tuple(complex(z) for z in r) for r in rows)
        n = len(m)
        if any(len(r) != n for r in m):
            raise ConfigurationError("readout matrix must be square")
        for i in range(n):
            for j in range(n):
                if abs(m[i][j] - m[j][i].conjugate()) > 1e-12:
                    raise ConfigurationError("readout matrix must be Hermitian")
        if n != 2:
            raise ConfigurationError("general readouts support 2x2 only")
        a, d = m[0][0].real, m[1][1].real
        off = abs(m[0][1])
        e_min = 0.5 * (a + d) - math.hypot(0.5 * (a - d), off)
        return cls(None, m, e_min)

    def describe(self) -> dict:
        if self.diagonal is not None:
            return {"kind": "diagonal", "entries": list(self.diagonal),
                    "e_min": self.e_min}
        return {"kind": "hermitian",
                "entries": [[[z.real, z.imag] for z in r] for r in self.matrix],
                "e_min": self.e_min}


DEFAULT_READOUT = ReadoutSpec.from_diagonal([2.0, -2.0])


def work_value(psi: StateVector, readout: ReadoutSpec = DEFAULT_READOUT) -> float:
    """<psi|H0|psi>/<psi|psi> - E_min >= 0 (diagonal readouts are exact)."""
    ops = psi.ctx.ops
    n2 = psi.norm_squared_exact()
    if n2 == 0:
        raise ArithmeticDomainError("work value of a zero-norm state is undefined")
    if readout.diagonal is not None:
        num = Fraction(0)
        for h, z in zip(readout.diagonal, psi.amplitudes):
            num += Fraction(h) * (ops.to_fraction(z.re) ** 2 + ops.to_fraction(z.im) ** 2)
        w = num / n2 - Fraction(readout.e_min)
        return float(w)
    # general Hermitian 2x2: float evaluation with a non-negativity clamp
    vals = psi.to_complex()
    num = 0.0
    for i in range(2):
        for j in range(2):
            num += (vals[i].conjugate() * readout.matrix[i][j] * vals[j]).real
    return max(num / float(n2) - readout.e_min, 0.0)


def work_echo_ratio(w_out: float, w_rec: float) -> float:
    if w_out == 0.0:
        raise UndefinedRatioError("outgoing work vanishes")
    return w_rec / w_out


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EchoSample:
    tau: float
    fidelity: float
    w_out: float
    w_rec: float
    eta_w: float          # nan when undefined (reported as a missing sample)
    norm_out: float
    norm_rec: float
    ln_kappa: float


@dataclass(frozen=True)
class EchoCurve:
    samples: tuple
    system_info: dict
    backend: str
    m: int
    dt: float
    t_dr: float | None
    psi0: tuple

    def taus(self) -> list[float]:
        return [s.tau for s in self.samples]

    def values(self, observable: str) -> list[float]:
        if observable == "fidelity":
            return [s.fidelity for s in self.samples]
        if observable == "work_echo":
            return [s.eta_w for s in self.samples]
        raise ConfigurationError(f"unknown observable {observable!r}")

    def merged_with(self, other: "EchoCurve") -> "EchoCurve":
        seen = {s.tau: s for s in self.samples}
        for s in other.samples:
            seen.setdefault(s.tau, s)
        merged = tuple(sorted(seen.values(), key=lambda s: s.tau))
        return EchoCurve(merged, self.system_info, self.backend, self.m,
                         self.dt, self.t_dr, self.psi0)


def default_tau_grid(m: int, spec: DimerSpec, step: float = DEFAULT_TAU_STEP,
                     factor: float = DEFAULT_TAU_FACTOR) -> list[float]:
    """0 to factor * t_dr(m) in fixed steps (covers plateau, knee, tail)."""
    tmax = factor * t_dr(spec, m)
    return [round(step * i, 9) for i in range(int(tmax / step) + 1)]


def benchmark_grid_factor() -> float:
    """Benchmark grids run to 2*t_dr + 1 so the immune trio members are
    probed well past the non-normal member's collapse."""
    return 2.0


def _oracle_ln_kappa(system, tau: float) -> float:
    """ln kappa(U(tau)) from the SVD of the forward propagator, computed at
    oracle precision so the diagnostic never feeds back into the experiment."""
    if tau == 0.0:
        return 0.0
    u = build_step_propagator(system, tau, _ORACLE_CTX, Route.EXACT)
    return svd_2x2(u).ln_kappa()


def echo_sample(system, tau: float, ctx: PrecisionContext, *,
                dt: float = DEFAULT_DT, psi0: StateVector | None = None,
                readout: ReadoutSpec = DEFAULT_READOUT,
                route: Route = Route.EXACT,
                ln_kappa: float | None = None) -> EchoSample:
    """One independent forward+backward echo run at target time tau."""
    if psi0 is None:
        psi0 = default_initial_state(ctx)
    plan = plan_steps(tau, dt)
    out = stepped_evolve(psi0, system, plan, ctx, Direction.FORWARD, route)
    rec = stepped_evolve(out, system, plan, ctx, Direction.BACKWARD, route)
    f = loschmidt_fidelity(psi0, rec)
    w_out = work_value(out, readout)
    w_rec = work_value(rec, readout)
    try:
        eta = work_echo_ratio(w_out, w_rec)
    except UndefinedRatioError:
        eta = math.nan
    if ln_kappa is None:
        ln_kappa = _oracle_ln_kappa(system, tau)
    return EchoSample(tau, f, w_out, w_rec, eta, out.norm(), rec.norm(), ln_kappa)


def echo_curve(system, tau_grid: Sequence[float], ctx: PrecisionContext, *,
               dt: float = DEFAULT_DT, psi0: StateVector | None = None,
               readout: ReadoutSpec = DEFAULT_READOUT,
               route: Route = Route.EXACT) -> EchoCurve:
    """Echo samples over an increasing tau grid (one independent run each)."""
    taus = list(tau_grid)
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ConfigurationError("tau grid must be strictly increasing")
    if psi0 is None:
        psi0 = default_initial_state(ctx)
    samples = tuple(echo_sample(system, t, ctx, dt=dt, psi0=psi0,
                                readout=readout, route=route) for t in taus)
    info = system.describe() if hasattr(system, "describe") else {"kind": "matrix"}
    tdr = None
    if isinstance(system, DimerSpec) and system.phase is Phase.BROKEN:
        tdr = t_dr(system, ctx.m)
    return EchoCurve(samples, info, ctx.backend.value, ctx.m, dt, tdr,
                     tuple(psi0.to_complex()))


def mode_coefficients(psi: StateVector, eig: EigResult) -> tuple:
    """Eigenmode coefficients c = V^-1 psi at the state's precision."""
    coeffs = matvec(eig.v_inv, psi.amplitudes)
    return tuple(coeffs)


def dynamic_range_ratio(coeffs, ctx: PrecisionContext) -> float:
    """|c_amplified| / |c_suppressed| for a coefficient pair."""
    mags = [abs(cfloat(ctx, c)) for c in coeffs]
    if mags[1] == 0:
        raise ArithmeticDomainError("suppressed-mode coefficient vanished")
    return mags[0] / mags[1]
