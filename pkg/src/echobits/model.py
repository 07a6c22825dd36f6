"""Gain/loss dimer family, matched benchmark trio, and the exact analytic
oracle for the propagator condition number and overflow time.

Oracle arithmetic always runs at ORACLE_BITS (>= 200) so the reference values
never suffer the finite-precision effects under study.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import mpmath

from .errors import ConfigurationError, ExceptionalPointError, PhaseError
from .kernel import PrecisionContext
from .linalg import ComplexMatrix, kappa_v_numeric

#: working precision (bits) of all oracle evaluations
ORACLE_BITS = 240

LN2 = math.log(2.0)


class Phase(enum.Enum):
    BROKEN = "broken"
    UNBROKEN = "unbroken"
    EXCEPTIONAL_POINT = "exceptional_point"


@dataclass(frozen=True)
class DimerSpec:
    """Two-mode gain/loss system [[i*gamma, g1], [g2, -i*gamma]]."""

    gamma: float
    g1: float
    g2: float

    @classmethod
    def symmetric(cls, gamma: float, g: float) -> "DimerSpec":
        return cls(gamma, g, g)

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigurationError("gamma must be non-negative")

    @property
    def is_symmetric(self) -> bool:
        return self.g1 == self.g2

    @property
    def g(self) -> float:
        if not self.is_symmetric:
            raise ConfigurationError("asymmetric couplings have no single g")
        return self.g1

    @property
    def phase(self) -> Phase:
        # exact rational comparison keeps the classification deterministic
        lhs = Fraction(self.gamma) ** 2
        rhs = Fraction(self.g1) * Fraction(self.g2)
        if lhs > rhs:
            return Phase.BROKEN
        if lhs == rhs:
            return Phase.EXCEPTIONAL_POINT
        return Phase.UNBROKEN

    @property
    def eta(self) -> float:
        if self.phase is not Phase.BROKEN:
            raise PhaseError("eta is defined in the broken phase only")
        return math.sqrt(self.gamma * self.gamma - self.g1 * self.g2)

    @property
    def delta_b(self) -> float:
        return 2.0 * self.eta

    def hamiltonian(self, ctx: PrecisionContext) -> ComplexMatrix:
        return ComplexMatrix.from_complex(
            [[complex(0.0, self.gamma), complex(self.g1, 0.0)],
             [complex(self.g2, 0.0), complex(0.0, -self.gamma)]], ctx)

    def describe(self) -> dict:
        out = {"gamma": self.gamma, "g1": self.g1, "g2": self.g2,
               "phase": self.phase.value}
        if self.phase is Phase.BROKEN:
            out["delta_b"] = self.delta_b
            out["eta"] = self.eta
            if self.is_symmetric:
                o = Oracle(self)
                out["kappa_V"] = o.kappa_v
                out["C"] = o.prefactor_c
        return out


def delta_b(spec: DimerSpec) -> float:
    """Eigenvalue gap 2*sqrt(gamma^2 - g1*g2) in the broken phase."""
    return spec.delta_b


def dynamic_range_bits(spec: DimerSpec, t: float) -> float:
    """Accumulated inter-mode dynamic range in bits at constant gap."""
    return spec.delta_b * t / LN2


def t_dr(spec: DimerSpec, m: float) -> float:
    """Dynamic-range timescale m*ln(beta)/delta_b for an m-bit floor."""
    if m < 0:
        raise ConfigurationError("bit count must be non-negative")
    return m * LN2 / spec.delta_b


def kappa_v(spec_or_matrix) -> float:
    """Eigenvector condition number: closed form sqrt((gamma+g)/(gamma-g))
    for a symmetric dimer, numeric ||V||*||V^-1|| for a matrix."""
    if isinstance(spec_or_matrix, DimerSpec):
        spec = spec_or_matrix
        if not spec.is_symmetric:
            raise ConfigurationError("closed form needs symmetric couplings")
        if spec.phase is Phase.EXCEPTIONAL_POINT:
            raise ExceptionalPointError("kappa(V) diverges at the exceptional point")
        return math.sqrt(abs((spec.gamma + spec.g) / (spec.gamma - spec.g)))
    return kappa_v_numeric(spec_or_matrix)


class Oracle:
    """Closed-form reference for the symmetric broken-phase dimer."""

    def __init__(self, spec: DimerSpec, knee_c: float = 1.0, prec: int = ORACLE_BITS):
        if not spec.is_symmetric:
            raise ConfigurationError("oracle requires symmetric couplings")
        if spec.phase is not Phase.BROKEN:
            raise PhaseError("oracle requires the broken phase")
        if prec < 200:
            raise ConfigurationError("oracle precision must stay >= 200 bits")
        self.spec = spec
        self.knee_c = knee_c
        self.prec = prec

    def _consts(self):
        gm = mpmath.mpf(self.spec.gamma)
        gg = mpmath.mpf(self.spec.g)
        eta = mpmath.sqrt(gm * gm - gg * gg)
        return gm, gg, eta

    @cached_property
    def eta(self) -> float:
        with mpmath.workprec(self.prec):
            return float(self._consts()[2])

    @cached_property
    def delta_b(self) -> float:
        with mpmath.workprec(self.prec):
            return float(2 * self._consts()[2])

    @cached_property
    def prefactor_c(self) -> float:
        """Geometric prefactor (gamma/eta)^2 of the asymptotic growth."""
        with mpmath.workprec(self.prec):
            gm, _, eta = self._consts()
            return float((gm / eta) ** 2)

    @cached_property
    def kappa_v(self) -> float:
        with mpmath.workprec(self.prec):
            gm, gg, _ = self._consts()
            return float(mpmath.sqrt((gm + gg) / (gm - gg)))

    def y_of_t(self, t: float) -> float:
        """Dimensionless amplification parameter (gamma/eta)*sinh(eta*t)."""
        with mpmath.workprec(self.prec):
            gm, _, eta = self._consts()
            return float(gm / eta * mpmath.sinh(eta * mpmath.mpf(t)))

    def ln_kappa_exact(self, t: float) -> float:
        """ln kappa(U(t)) = 2*asinh(y(t)), exact for all t >= 0."""
        with mpmath.workprec(self.prec):
            gm, _, eta = self._consts()
            y = gm / eta * mpmath.sinh(eta * mpmath.mpf(t))
            return float(2 * mpmath.asinh(y))

    def kappa_exact(self, t: float) -> float:
        """(sqrt(1+y^2)+y)^2; may overflow float range, use the log form then."""
        with mpmath.workprec(self.prec):
            gm, _, eta = self._consts()
            y = gm / eta * mpmath.sinh(eta * mpmath.mpf(t))
            k = mpmath.exp(2 * mpmath.asinh(y))
            return float(k) if k < mpmath.mpf(2) ** 1020 else math.inf

    def t_dr(self, m: float) -> float:
        return t_dr(self.spec, m)

    def t_of_exact(self, m: float) -> float:
        """(2/delta_b) * asinh((eta/gamma) * sinh(m ln(beta) / 2)).

        Reduces to (m ln(beta) - ln C)/delta_b for large m and to 0 at m=0.
        """
        if m < 0:
            raise ConfigurationError("bit count must be non-negative")
        with mpmath.workprec(self.prec):
            gm, _, eta = self._consts()
            arg = eta / gm * mpmath.sinh(mpmath.mpf(m) * mpmath.log(2) / 2)
            return float(mpmath.asinh(arg) / eta)  # 2/delta_b = 1/eta

    def dynamic_range_bits(self, t: float) -> float:
        return dynamic_range_bits(self.spec, t)

    def ln_kappa_threshold(self, m: float) -> float:
        """Knee level in ln kappa: m*ln(beta) + ln(knee_c)."""
        return m * LN2 + math.log(self.knee_c)


@dataclass(frozen=True)
class BenchmarkTrio:
    """Three 2x2 systems with matched eigenvalue magnitudes: the gain/loss
    dimer (non-normal), a diagonal non-Hermitian system with the same
    eigenvalues (normal), and a Hermitian system with the same energy scale."""

    h_pt: ComplexMatrix
    h_normal: ComplexMatrix
    h_hermitian: ComplexMatrix
    lam: float

    def members(self):
        return {"pt": self.h_pt, "normal": self.h_normal, "hermitian": self.h_hermitian}


def benchmark_trio(gamma: float, g: float, ctx: PrecisionContext) -> BenchmarkTrio:
    spec = DimerSpec.symmetric(gamma, g)
    if spec.phase is not Phase.BROKEN:
        raise PhaseError("benchmark trio requires the broken phase")
    lam = spec.eta
    h_pt = spec.hamiltonian(ctx)
    h_normal = ComplexMatrix.from_complex(
        [[complex(0, lam), 0], [0, complex(0, -lam)]], ctx)
    h_herm = ComplexMatrix.from_complex(
        [[complex(lam, 0), 0], [0, complex(-lam, 0)]], ctx)
    return BenchmarkTrio(h_pt, h_normal, h_herm, lam)
