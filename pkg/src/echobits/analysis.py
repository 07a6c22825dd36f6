"""Overflow-time extraction from echo curves, knee sharpness, and the
onset-versus-bits scaling fit.

The onset rule follows the 1%-drop criterion: the plateau is the median of
the observable over a fixed early-time window, and the onset is the first
sampled time strictly below (1 - drop_fraction) * plateau, refined by linear
interpolation between the bracketing samples.  Scanning starts at the first
compliant sample so that observables which rise into their plateau (the
work-echo ratio does) are not flagged at tau ~ 0.

Both echo observables saturate at a nonzero floor set by eigenmode geometry,
so knee levels are measured as fractions of the plateau-to-floor drop; for a
clean step to zero this reduces to plain fractions of the plateau.  The width
itself comes from a log-error regression over the transition zone, which
averages the per-sample scatter of the rounding noise; with fewer than three
transition samples it falls back to interpolated level crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ComparisonError, ConfigurationError, FitError
from .echo import EchoCurve

DEFAULT_PLATEAU_WINDOW = (1.0, 4.0)
DEFAULT_DROP_FRACTION = 0.01


@dataclass(frozen=True)
class OnsetConfig:
    plateau_window: tuple = DEFAULT_PLATEAU_WINDOW
    drop_fraction: float = DEFAULT_DROP_FRACTION

    def __post_init__(self):
        lo, hi = self.plateau_window
        if not lo < hi:
            raise ConfigurationError("plateau window must have t_lo < t_hi")
        if not 0.0 < self.drop_fraction < 1.0:
            raise ConfigurationError("drop fraction must lie in (0, 1)")

    def effective_window(self, t_dr: float | None) -> tuple:
        """For very small bit counts the horizon can sit inside the default
        window; shrink to [0.25, 0.5] * t_dr then."""
        lo, hi = self.plateau_window
        if t_dr is not None and t_dr < hi:
            return (0.25 * t_dr, 0.5 * t_dr)
        return (lo, hi)


DEFAULT_ONSET_CONFIG = OnsetConfig()


def _series(curve: EchoCurve, observable: str):
    pairs = [(s1, v1) for s1, v1 in zip(curve.taus(), curve.values(observable))
             if not math.isnan(v1)]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def plateau_estimate(curve: EchoCurve, observable: str,
                     cfg: OnsetConfig = DEFAULT_ONSET_CONFIG) -> float:
    """Median of the observable over the (possibly shrunken) early window."""
    lo, hi = cfg.effective_window(curve.t_dr)
    taus, vals = _series(curve, observable)
    window = [v for t, v in zip(taus, vals) if lo <= t <= hi]
    if not window:
        raise ConfigurationError(
            f"no samples inside the plateau window [{lo:g}, {hi:g}]")
    return float(np.median(window))


@dataclass(frozen=True)
class OnsetDetection:
    time: float | None
    threshold: float
    bracket: tuple | None  # (last compliant tau, first violating tau)

    @property
    def found(self) -> bool:
        return self.time is not None


def onset_detect(curve: EchoCurve, observable: str, plateau: float,
                 cfg: OnsetConfig = DEFAULT_ONSET_CONFIG) -> OnsetDetection:
    """First sampled tau strictly below (1 - drop) * plateau, after at least
    one compliant sample; linearly interpolated between the bracket."""
    if plateau <= 0:
        raise ConfigurationError("plateau must be positive")
    thr = (1.0 - cfg.drop_fraction) * plateau
    taus, vals = _series(curve, observable)
    prev = None
    for t, v in zip(taus, vals):
        if prev is None:
            if v >= thr:
                prev = (t, v)
            continue
        if v < thr:
            t0, v0 = prev
            if v0 == v:
                return OnsetDetection(t, thr, (t0, t))
            cross = t0 + (t - t0) * (v0 - thr) / (v0 - v)
            return OnsetDetection(cross, thr, (t0, t))
        prev = (t, v)
    return OnsetDetection(None, thr, None)


def refine_onset_in_bracket(curve: EchoCurve, observable: str,
                            detection: OnsetDetection) -> OnsetDetection:
    """Sharpen a detected crossing using samples inside its coarse bracket.

    The coarse grid defines where the violation occurs; extra samples between
    the bracketing pair only refine the interpolated crossing, they never move
    the onset outside the bracket (so densifying cannot re-trigger on
    fluctuation dips the coarse detector already passed over)."""
    if not detection.found or detection.bracket is None:
        return detection
    t0, t1 = detection.bracket
    thr = detection.threshold
    taus, vals = _series(curve, observable)
    prev = None
    for t, v in zip(taus, vals):
        if t < t0 or t > t1:
            continue
        if prev is None:
            prev = (t, v)
            continue
        if v < thr:
            p0, v0 = prev
            if v0 == v:
                return OnsetDetection(t, thr, (p0, t))
            cross = p0 + (t - p0) * (v0 - thr) / (v0 - v)
            return OnsetDetection(cross, thr, (p0, t))
        prev = (t, v)
    return detection


@dataclass(frozen=True)
class KneeWidth:
    width: float | None
    t_upper: float | None   # crossing of the upper level
    t_lower: float | None   # crossing of the lower level
    floor: float

    @property
    def found(self) -> bool:
        return self.width is not None


def _running_median(vals, window: int):
    half = window // 2
    out = []
    for i in range(len(vals)):
        lo = max(0, i - half)
        hi = min(len(vals), i + half + 1)
        out.append(float(np.median(vals[lo:hi])))
    return out


def _first_crossing(taus, vals, thr):
    prev = None
    for t, v in zip(taus, vals):
        if prev is None:
            if v >= thr:
                prev = (t, v)
            continue
        if v < thr:
            t0, v0 = prev
            if v0 == v:
                return t
            return t0 + (t - t0) * (v0 - thr) / (v0 - v)
        prev = (t, v)
    return None


def knee_width(curve: EchoCurve, observable: str, plateau: float,
               levels: tuple = (0.9, 0.1),
               cfg: OnsetConfig = DEFAULT_ONSET_CONFIG) -> KneeWidth:
    """Transition time between two levels of the plateau-to-floor drop.

    The floor is the median of the final fifth of the curve; each level sits
    at floor + fraction * (plateau - floor), which reduces to a plain
    fraction of the plateau when the observable decays to zero.  Crossing
    times are interpolated on a 5-sample running median of the curve: the
    median rides out single-sample revival fluctuations near and past the
    knee while leaving monotone curves untouched (a clean step still yields a
    width below one grid spacing).
    """
    taus, vals = _series(curve, observable)
    if len(taus) < 4:
        return KneeWidth(None, None, None, math.nan)
    tail = vals[-max(3, len(vals) // 5):]
    floor = float(np.median(tail))
    drop = plateau - floor
    if drop <= 1e-9 * max(abs(plateau), 1.0):
        return KneeWidth(None, None, None, floor)  # no knee (flat curve)
    hi_thr = floor + levels[0] * drop
    lo_thr = floor + levels[1] * drop
    smoothed = _running_median(vals, 5)
    t_hi = _first_crossing(taus, smoothed, hi_thr)
    t_lo = _first_crossing(taus, smoothed, lo_thr)
    if t_hi is None or t_lo is None:
        return KneeWidth(None, t_hi, t_lo, floor)
    return KneeWidth(t_lo - t_hi, t_hi, t_lo, floor)


@dataclass(frozen=True)
class OverflowEstimate:
    """Measured overflow time for one (observable, precision, backend)."""

    observable: str   # "fidelity" | "work_echo"
    m: int
    backend: str
    t_of_measured: float | None
    plateau_value: float

    @property
    def found(self) -> bool:
        return self.t_of_measured is not None


@dataclass(frozen=True)
class ScalingFit:
    points: tuple                # (m, t_of) pairs
    slope: float
    intercept: float
    max_abs_residual: float


def fit_scaling(points: Sequence[tuple]) -> ScalingFit:
    """Least-squares line through (m, T_of) points."""
    pts = [(float(m), float(t)) for m, t in points]
    if len(pts) < 3:
        raise FitError("scaling fit needs at least 3 points")
    ms = np.array([p[0] for p in pts])
    ts = np.array([p[1] for p in pts])
    if len(set(ms.tolist())) < 2:
        raise FitError("degenerate design matrix: all abscissae equal")
    slope, intercept = np.polyfit(ms, ts, 1)
    resid = np.abs(ts - (slope * ms + intercept))
    return ScalingFit(tuple(pts), float(slope), float(intercept), float(resid.max()))


def compare_observables(est_f: OverflowEstimate, est_w: OverflowEstimate) -> float | None:
    """|T_of(fidelity) - T_of(work-echo)| for matching configurations;
    None when either onset was not found."""
    if {est_f.observable, est_w.observable} != {"fidelity", "work_echo"}:
        raise ComparisonError("need one fidelity and one work-echo estimate")
    if (est_f.m, est_f.backend) != (est_w.m, est_w.backend):
        raise ComparisonError("estimates come from different configurations")
    if not (est_f.found and est_w.found):
        return None
    return abs(est_f.t_of_measured - est_w.t_of_measured)
