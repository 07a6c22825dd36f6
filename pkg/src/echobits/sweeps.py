"""Experiment orchestration: echo experiments with knee refinement, precision
sweeps, the benchmark trio, and the condition-number curve.

Each (backend, m, tau) echo run is independent and pure, so sweep tasks can
execute in a process pool; results are gathered and emitted in sorted key
order to keep every output deterministic regardless of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .analysis import (
    OnsetConfig,
    OverflowEstimate,
    DEFAULT_ONSET_CONFIG,
    fit_scaling,
    knee_width,
    onset_detect,
    plateau_estimate,
    refine_onset_in_bracket,
)
from .echo import (
    DEFAULT_DT,
    DEFAULT_READOUT,
    DEFAULT_TAU_FACTOR,
    DEFAULT_TAU_STEP,
    EchoCurve,
    ReadoutSpec,
    Route,
    StateVector,
    benchmark_grid_factor,
    default_initial_state,
    echo_curve,
)
from .errors import ConfigurationError
from .kernel import PrecisionContext, context_create
from .model import DimerSpec, Oracle, Phase, benchmark_trio, t_dr

OBSERVABLES = ("fidelity", "work_echo")

#: spacing of the extra samples laid through the knee zone
REFINE_STEP = 0.1
#: zone sampled around a detected onset, in time units
REFINE_SPAN = (-1.0, 4.0)


@dataclass(frozen=True)
class EchoExperiment:
    """One curve with its analysis products."""

    curve: EchoCurve
    plateaus: dict
    onsets: dict      # observable -> OnsetDetection
    knees: dict       # observable -> KneeWidth

    def estimate(self, observable: str) -> OverflowEstimate:
        det = self.onsets[observable]
        return OverflowEstimate(observable, self.curve.m, self.curve.backend,
                                det.time if det.found else None,
                                self.plateaus[observable])


def run_echo_experiment(system, ctx: PrecisionContext, tau_grid, *,
                        dt: float = DEFAULT_DT,
                        psi0: StateVector | None = None,
                        readout: ReadoutSpec = DEFAULT_READOUT,
                        route: Route = Route.EXACT,
                        refine: bool = True,
                        cfg: OnsetConfig = DEFAULT_ONSET_CONFIG) -> EchoExperiment:
    """Run the echo curve, detect onsets, optionally densify the knee zone
    (extra samples at REFINE_STEP spacing) and re-run the detection on the
    merged curve so onsets and widths are not limited by the coarse grid."""
    if psi0 is None:
        psi0 = default_initial_state(ctx)
    curve = echo_curve(system, tau_grid, ctx, dt=dt, psi0=psi0,
                       readout=readout, route=route)
    plateaus = {obs: plateau_estimate(curve, obs, cfg) for obs in OBSERVABLES}
    onsets = {obs: onset_detect(curve, obs, plateaus[obs], cfg)
              for obs in OBSERVABLES}
    if refine:
        dense = _knee_zone(curve, onsets, tau_grid)
        if dense:
            extra = echo_curve(system, dense, ctx, dt=dt, psi0=psi0,
                               readout=readout, route=route)
            curve = curve.merged_with(extra)
            # the coarse-grid detection fixes the bracket; in-bracket samples
            # sharpen the interpolated crossing without re-triggering on dips
            onsets = {obs: refine_onset_in_bracket(curve, obs, onsets[obs])
                      for obs in OBSERVABLES}
    knees = {obs: knee_width(curve, obs, plateaus[obs], cfg=cfg)
             for obs in OBSERVABLES}
    return EchoExperiment(curve, plateaus, onsets, knees)


def _knee_zone(curve: EchoCurve, onsets: dict, tau_grid) -> list[float]:
    tau_max = max(tau_grid)
    existing = sorted(curve.taus())
    out = []
    for det in onsets.values():
        if not det.found:
            continue
        lo = max(REFINE_STEP, det.time + REFINE_SPAN[0])
        hi = min(tau_max, det.time + REFINE_SPAN[1])
        k = 0
        while True:
            t = round(lo + k * REFINE_STEP, 6)
            k += 1
            if t > hi:
                break
            if all(abs(t - e) > 1e-9 for e in existing) and t not in out:
                out.append(t)
    return sorted(out)


# ---------------------------------------------------------------------------
# precision sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepJob:
    backend: str
    m: int


@dataclass(frozen=True)
class SweepRow:
    m: int
    backend: str
    observable: str
    t_of_measured: float | None
    t_of_exact: float
    t_dr: float


@dataclass(frozen=True)
class ScalingSweep:
    spec: DimerSpec
    experiments: dict     # (backend, m) -> EchoExperiment
    rows: tuple           # SweepRow, sorted
    fits: dict            # observable -> ScalingFit | None (software points)


def _sweep_task(args) -> tuple:
    (gamma, g1, g2, backend, m, dt, tau_step, tau_factor, tau_max,
     refine, route_name, readout_diag, window, drop) = args
    spec = DimerSpec(gamma, g1, g2)
    ctx = context_create(backend, m)
    tmax = tau_max if tau_max is not None else tau_factor * t_dr(spec, m)
    grid = [round(tau_step * i, 9) for i in range(int(tmax / tau_step) + 1)]
    cfg = OnsetConfig(plateau_window=tuple(window), drop_fraction=drop)
    exp = run_echo_experiment(
        spec, ctx, grid, dt=dt,
        readout=ReadoutSpec.from_diagonal(readout_diag),
        route=Route(route_name), refine=refine, cfg=cfg)
    return (backend, m), exp


def run_scaling_sweep(spec: DimerSpec, jobs, *, dt: float = DEFAULT_DT,
                      tau_step: float = DEFAULT_TAU_STEP,
                      tau_factor: float = DEFAULT_TAU_FACTOR,
                      tau_max: float | None = None,
                      refine: bool = True,
                      route: Route = Route.EXACT,
                      readout: ReadoutSpec = DEFAULT_READOUT,
                      cfg: OnsetConfig = DEFAULT_ONSET_CONFIG,
                      workers: int = 1) -> ScalingSweep:
    if spec.phase is not Phase.BROKEN:
        raise ConfigurationError("scaling sweep requires the broken phase")
    if readout.diagonal is None:
        raise ConfigurationError("sweeps use diagonal readouts")
    job_list = [SweepJob(b, m) for b, m in jobs]
    if not job_list:
        raise ConfigurationError("no (backend, m) jobs requested")
    args = [(spec.gamma, spec.g1, spec.g2, j.backend, j.m, dt, tau_step,
             tau_factor, tau_max, refine, route.value, list(readout.diagonal),
             list(cfg.plateau_window), cfg.drop_fraction) for j in job_list]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_sweep_task, args))
    else:
        results = dict(map(_sweep_task, args))
    oracle = Oracle(spec) if spec.is_symmetric else None
    rows = []
    for j in sorted(job_list, key=lambda j: (j.backend, j.m)):
        exp = results[(j.backend, j.m)]
        for obs in OBSERVABLES:
            est = exp.estimate(obs)
            rows.append(SweepRow(
                j.m, j.backend, obs, est.t_of_measured,
                oracle.t_of_exact(j.m) if oracle else math.nan,
                t_dr(spec, j.m)))
    fits = {}
    for obs in OBSERVABLES:
        pts = [(r.m, r.t_of_measured) for r in rows
               if r.backend == "software" and r.observable == obs
               and r.t_of_measured is not None]
        try:
            fits[obs] = fit_scaling(pts) if len(pts) >= 3 else None
        except Exception:
            fits[obs] = None
    return ScalingSweep(spec, results, tuple(rows), fits)


# ---------------------------------------------------------------------------
# benchmark trio
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrioResult:
    curves: dict          # member name -> EchoCurve
    onsets: dict          # member name -> OnsetDetection (fidelity)
    min_fidelity: dict
    max_abs_ln_kappa: dict


def run_benchmark(gamma: float, g: float, ctx: PrecisionContext, *,
                  dt: float = DEFAULT_DT, tau_step: float = DEFAULT_TAU_STEP,
                  tau_max: float | None = None,
                  readout: ReadoutSpec = DEFAULT_READOUT,
                  route: Route = Route.EXACT,
                  cfg: OnsetConfig = DEFAULT_ONSET_CONFIG) -> TrioResult:
    spec = DimerSpec.symmetric(gamma, g)
    trio = benchmark_trio(gamma, g, ctx)
    if tau_max is None:
        tau_max = benchmark_grid_factor() * t_dr(spec, ctx.m) + 1.0
    grid = [round(tau_step * i, 9) for i in range(int(tau_max / tau_step) + 1)]
    curves, onsets, min_f, max_lk = {}, {}, {}, {}
    systems = {"pt": spec, "normal": trio.h_normal, "hermitian": trio.h_hermitian}
    for name, system in systems.items():
        curve = echo_curve(system, grid, ctx, dt=dt, readout=readout, route=route)
        plateau = plateau_estimate(curve, "fidelity", cfg)
        onsets[name] = onset_detect(curve, "fidelity", plateau, cfg)
        curves[name] = curve
        min_f[name] = min(curve.values("fidelity"))
        max_lk[name] = max(abs(s.ln_kappa) for s in curve.samples)
    return TrioResult(curves, onsets, min_f, max_lk)


# ---------------------------------------------------------------------------
# condition-number curve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KappaCurveRow:
    t: float
    ln_kappa_svd: float
    ln_kappa_exact: float
    d_bits: float


@dataclass(frozen=True)
class KappaCurve:
    rows: tuple
    crossings: dict       # m -> (t_of_exact, t_dr)


def run_kappa_curve(spec: DimerSpec, t_grid, m_thresholds) -> KappaCurve:
    """Oracle-precision condition number along a time grid, with the time at
    which ln kappa crosses each requested m*ln(2) threshold (closed form,
    independent of the grid range)."""
    from .echo import _oracle_ln_kappa  # oracle-precision SVD route

    oracle = Oracle(spec)
    rows = []
    for t in t_grid:
        rows.append(KappaCurveRow(
            t, _oracle_ln_kappa(spec, t), oracle.ln_kappa_exact(t),
            oracle.dynamic_range_bits(t)))
    crossings = {m: (oracle.t_of_exact(m), oracle.t_dr(m)) for m in m_thresholds}
    return KappaCurve(tuple(rows), crossings)
