"""Command-line front end: configure runs, execute sweeps, persist results as
CSV with a JSON manifest, and print summary tables.

Commands
    kappa-curve   condition-number growth with precision-threshold crossings
    echo          echo curves per (backend, m) with onset/knee summaries
    scaling       overflow-time sweep over precision bits plus the line fit
    benchmark     matched trio: non-normal vs normal vs Hermitian

Exit codes: 0 success, 1 validation, 2 I/O, 3 internal numeric error.
Identical configurations reproduce identical CSV bytes regardless of the
worker count; the manifest records a checksum per output file.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

from . import __version__
from .analysis import OnsetConfig
from .echo import DEFAULT_DT, DEFAULT_TAU_STEP, ReadoutSpec, Route
from .errors import (
    ArithmeticDomainError,
    ComparisonError,
    ConditioningError,
    ConfigurationError,
    EchobitsError,
    ExceptionalPointError,
    FitError,
    PhaseError,
    UndefinedRatioError,
)
from .kernel import Backend, context_create
from .model import DimerSpec, Oracle, Phase
from .sweeps import (
    OBSERVABLES,
    run_benchmark,
    run_kappa_curve,
    run_scaling_sweep,
)

_VALIDATION_ERRORS = (ConfigurationError, PhaseError, FitError, ComparisonError,
                      UndefinedRatioError)
_NUMERIC_ERRORS = (ArithmeticDomainError, ExceptionalPointError, ConditioningError)

_DEFAULTS = {
    "kappa-curve": {"m": [30, 60, 90], "backend": ["software"], "tau_max": 20.0,
                    "tau_step": 0.1},
    "echo": {"m": [15, 50, 90], "backend": ["software"], "tau_max": None,
             "tau_step": DEFAULT_TAU_STEP},
    "scaling": {"m": [15, 30, 50, 70, 90],
                "backend": ["software", "native32", "native64"],
                "tau_max": None, "tau_step": DEFAULT_TAU_STEP},
    "benchmark": {"m": [53], "backend": ["software"], "tau_max": None,
                  "tau_step": DEFAULT_TAU_STEP},
}


@dataclass
class RunConfig:
    command: str
    gamma: float = 1.2
    g1: float = 1.0
    g2: float = 1.0
    m: list = field(default_factory=list)
    backend: list = field(default_factory=list)
    dt: float = DEFAULT_DT
    tau_max: float | None = None
    tau_step: float = DEFAULT_TAU_STEP
    h0: list = field(default_factory=lambda: [2.0, -2.0])
    out: str = "echobits_out"
    workers: int = 1
    refine: bool = True
    route: str = "exact"
    drop_fraction: float = 0.01
    plateau_window: tuple = (1.0, 4.0)
    deterministic: bool = True   # fixed: runs are seed-free by construction

    def spec(self) -> DimerSpec:
        return DimerSpec(self.gamma, self.g1, self.g2)

    def readout(self) -> ReadoutSpec:
        return ReadoutSpec.from_diagonal(self.h0)

    def onset_config(self) -> OnsetConfig:
        return OnsetConfig(tuple(self.plateau_window), self.drop_fraction)

    def validate(self):
        if not self.m:
            raise ConfigurationError("at least one significand width is required")
        if not self.backend:
            raise ConfigurationError("at least one backend is required")
        for b in self.backend:
            if b not in {x.value for x in Backend}:
                raise ConfigurationError(f"unknown backend {b!r}")
        for m in self.m:
            if int(m) != m:
                raise ConfigurationError("bit widths must be integers")
        if self.dt <= 0 or self.tau_step <= 0:
            raise ConfigurationError("dt and tau-step must be positive")
        if self.tau_max is not None and self.tau_max <= 0:
            raise ConfigurationError("tau-max must be positive")
        if len(self.h0) != 2:
            raise ConfigurationError("the diagonal readout takes two entries")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        Route(self.route)
        self.onset_config()

    def as_dict(self) -> dict:
        return {
            "command": self.command, "gamma": self.gamma, "g1": self.g1,
            "g2": self.g2, "m": list(self.m), "backend": list(self.backend),
            "dt": self.dt, "tau_max": self.tau_max, "tau_step": self.tau_step,
            "h0": list(self.h0), "out": self.out, "workers": self.workers,
            "refine": self.refine, "route": self.route,
            "drop_fraction": self.drop_fraction,
            "plateau_window": list(self.plateau_window),
            "deterministic": self.deterministic,
        }


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="echobits",
                description="Finite-precision non-Hermitian echo laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("kappa-curve", "condition-number growth and threshold crossings"),
        ("echo", "echo curves per backend and precision"),
        ("scaling", "overflow-time scaling sweep with line fit"),
        ("benchmark", "matched non-normal / normal / Hermitian trio"),
    ]:
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--gamma", type=float, default=None)
        q.add_argument("--g1", type=float, default=None)
        q.add_argument("--g2", type=float, default=None)
        q.add_argument("--m", type=int, action="append", default=None,
                       help="significand bits (repeatable)")
        q.add_argument("--backend", action="append", default=None,
                       choices=["software", "native32", "native64"],
                       help="arithmetic backend (repeatable)")
        q.add_argument("--dt", type=float, default=None)
        q.add_argument("--tau-max", type=float, default=None)
        q.add_argument("--tau-step", type=float, default=None)
        q.add_argument("--h0", type=str, default=None,
                       help='diagonal readout entries, e.g. "2,-2"')
        q.add_argument("--out", type=str, default=None, help="output directory")
        q.add_argument("--config", type=str, default=None,
                       help="key/value config file; overrides flags")
        q.add_argument("--workers", type=int, default=None)
        q.add_argument("--no-refine", action="store_true",
                       help="skip the knee-zone refinement pass")
        q.add_argument("--route", choices=[r.value for r in Route], default=None)
    return p


def _parse_h0(text: str) -> list:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigurationError(f"cannot parse readout entries {text!r}") from None


_CONFIG_KEYS = {
    "gamma": float, "g1": float, "g2": float, "dt": float, "tau_max": float,
    "tau_step": float, "out": str, "workers": int, "refine": None,
    "route": str, "drop_fraction": float, "m": None, "backend": None,
    "h0": None, "plateau_window": None,
}


def _read_config_file(path: str) -> dict:
    """Flat key = value lines; '#' starts a comment; lists are comma-separated."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            value = value.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            if key == "m":
                out[key] = [int(x) for x in value.split(",")]
            elif key == "backend":
                out[key] = [x.strip() for x in value.split(",")]
            elif key == "h0":
                out[key] = _parse_h0(value)
            elif key == "plateau_window":
                parts = [float(x) for x in value.split(",")]
                if len(parts) != 2:
                    raise ConfigurationError(f"{path}:{lineno}: window needs two values")
                out[key] = tuple(parts)
            elif key == "refine":
                out[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = _CONFIG_KEYS[key](value)
    return out


def build_config(ns: argparse.Namespace) -> RunConfig:
    d = _DEFAULTS[ns.command]
    cfg = RunConfig(command=ns.command, m=list(d["m"]), backend=list(d["backend"]),
                    tau_max=d["tau_max"], tau_step=d["tau_step"])
    # flags override defaults
    for key in ("gamma", "g1", "g2", "dt", "tau_max", "tau_step", "out",
                "workers", "route"):
        v = getattr(ns, key.replace("-", "_"))
        if v is not None:
            setattr(cfg, key, v)
    if ns.m is not None:
        cfg.m = list(ns.m)
    if ns.backend is not None:
        cfg.backend = list(ns.backend)
    if ns.h0 is not None:
        cfg.h0 = _parse_h0(ns.h0)
    if ns.no_refine:
        cfg.refine = False
    # config file overrides flags
    if ns.config is not None:
        for key, value in _read_config_file(ns.config).items():
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    """Full-precision decimal rendering: repr round-trips the double."""
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def _write_atomic(path: str, data: bytes):
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _write_csv(out_dir: str, name: str, header: list, rows: list) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    data = buf.getvalue().encode("utf-8")
    _write_atomic(os.path.join(out_dir, name), data)
    return data


def _write_json(out_dir: str, name: str, payload: dict) -> bytes:
    data = (json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n").encode("utf-8")
    _write_atomic(os.path.join(out_dir, name), data)
    return data


def _constants_block(cfg: RunConfig) -> dict:
    spec = cfg.spec()
    block = {"spec": spec.describe(), "eps": {}}
    for b in cfg.backend:
        for m in cfg.m:
            try:
                ctx = context_create(b, m if b == "software" else None)
            except ConfigurationError:
                continue
            block["eps"][ctx.label] = ctx.eps
    return block


def _finish(cfg: RunConfig, outputs: dict, started: float, extra: dict | None = None):
    manifest = {
        "artifact_version": __version__,
        "config": cfg.as_dict(),
        "constants": _constants_block(cfg),
        "outputs": {name: hashlib.sha256(data).hexdigest()
                    for name, data in sorted(outputs.items())},
        "timing_seconds": time.time() - started,
    }
    if extra:
        manifest.update(extra)
    _write_json(cfg.out, "manifest.json", manifest)


def _curve_rows(curve):
    for s in curve.samples:
        yield (s.tau, s.fidelity, s.w_out, s.w_rec, s.eta_w,
               s.norm_out, s.norm_rec, s.ln_kappa)


_ECHO_HEADER = ["tau", "F", "W_out", "W_rec", "eta_W", "norm_out", "norm_rec",
                "ln_kappa"]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_kappa_curve(cfg: RunConfig) -> int:
    started = time.time()
    spec = cfg.spec()
    if spec.phase is not Phase.BROKEN:
        raise ConfigurationError("kappa-curve requires a broken-phase spec")
    if not spec.is_symmetric:
        raise ConfigurationError("the exact oracle needs symmetric couplings")
    n = int(cfg.tau_max / cfg.tau_step)
    grid = [round(cfg.tau_step * i, 9) for i in range(n + 1)]
    kc = run_kappa_curve(spec, grid, cfg.m)
    os.makedirs(cfg.out, exist_ok=True)
    outputs = {}
    outputs["kappa_curve.csv"] = _write_csv(
        cfg.out, "kappa_curve.csv",
        ["t", "ln_kappa_svd", "ln_kappa_exact", "D_bits"],
        [(r.t, r.ln_kappa_svd, r.ln_kappa_exact, r.d_bits) for r in kc.rows])
    summary = {
        "threshold_crossings": {
            str(m): {"ln_kappa_threshold": m * math.log(2.0),
                     "t_of_exact": kc.crossings[m][0],
                     "t_dr": kc.crossings[m][1]}
            for m in cfg.m},
    }
    outputs["summary.json"] = _write_json(cfg.out, "summary.json", summary)
    _finish(cfg, outputs, started)
    print(f"kappa-curve: {len(kc.rows)} rows -> {cfg.out}/kappa_curve.csv")
    for m in cfg.m:
        t_of, tdr = kc.crossings[m]
        print(f"  m={m:3d}  ln-kappa threshold {m * math.log(2.0):8.3f}  "
              f"crossing t_of={t_of:7.3f}  (t_dr={tdr:7.3f})")
    return 0


def _echo_jobs(cfg: RunConfig):
    jobs = []
    for b in cfg.backend:
        if b == "software":
            jobs.extend((b, m) for m in cfg.m)
        else:
            jobs.append((b, context_create(b).m))
    # deduplicate while preserving a deterministic order
    return sorted(set(jobs))


def cmd_echo(cfg: RunConfig) -> int:
    started = time.time()
    spec = cfg.spec()
    sweep = run_scaling_sweep(
        spec, _echo_jobs(cfg), dt=cfg.dt, tau_step=cfg.tau_step,
        tau_max=cfg.tau_max, refine=cfg.refine, route=Route(cfg.route),
        readout=cfg.readout(), cfg=cfg.onset_config(), workers=cfg.workers)
    os.makedirs(cfg.out, exist_ok=True)
    outputs = {}
    summary = {"curves": []}
    for (backend, m), exp in sorted(sweep.experiments.items()):
        label = f"{backend}_m{m}"
        name = f"echo_{label}.csv"
        outputs[name] = _write_csv(cfg.out, name, _ECHO_HEADER,
                                   list(_curve_rows(exp.curve)))
        entry = {"backend": backend, "m": m, "file": name}
        for obs in OBSERVABLES:
            det = exp.onsets[obs]
            kw = exp.knees[obs]
            entry[obs] = {
                "plateau": exp.plateaus[obs],
                "t_of_measured": det.time,
                "onset_found": det.found,
                "knee_width": kw.width,
                "knee_floor": kw.floor,
            }
        summary["curves"].append(entry)
    outputs["summary.json"] = _write_json(cfg.out, "summary.json", summary)
    _finish(cfg, outputs, started)
    print(f"echo: {len(sweep.experiments)} curve(s) -> {cfg.out}")
    print(f"  {'backend':<10} {'m':>4} {'plateau_F':>10} {'T_of(F)':>9} "
          f"{'plateau_eta':>11} {'T_of(eta)':>9}")
    for (backend, m), exp in sorted(sweep.experiments.items()):
        f_det, w_det = exp.onsets["fidelity"], exp.onsets["work_echo"]
        print(f"  {backend:<10} {m:>4} {exp.plateaus['fidelity']:>10.6f} "
              f"{_opt(f_det.time):>9} {exp.plateaus['work_echo']:>11.4f} "
              f"{_opt(w_det.time):>9}")
    return 0


def _opt(x, fmt="{:.3f}") -> str:
    return fmt.format(x) if x is not None else "n/a"


def cmd_scaling(cfg: RunConfig) -> int:
    started = time.time()
    spec = cfg.spec()
    if len([m for m in cfg.m]) < 3 and "software" in cfg.backend:
        raise ConfigurationError("scaling needs at least 3 software bit widths")
    sweep = run_scaling_sweep(
        spec, _echo_jobs(cfg), dt=cfg.dt, tau_step=cfg.tau_step,
        tau_max=cfg.tau_max, refine=cfg.refine, route=Route(cfg.route),
        readout=cfg.readout(), cfg=cfg.onset_config(), workers=cfg.workers)
    os.makedirs(cfg.out, exist_ok=True)
    outputs = {}
    outputs["scaling.csv"] = _write_csv(
        cfg.out, "scaling.csv",
        ["m", "backend", "observable", "T_of_measured", "T_of_exact", "T_dr"],
        [(r.m, r.backend, r.observable, r.t_of_measured, r.t_of_exact, r.t_dr)
         for r in sweep.rows])
    for (backend, m), exp in sorted(sweep.experiments.items()):
        name = f"echo_{backend}_m{m}.csv"
        outputs[name] = _write_csv(cfg.out, name, _ECHO_HEADER,
                                   list(_curve_rows(exp.curve)))
    oracle = Oracle(spec)
    theory_slope = math.log(2.0) / spec.delta_b
    theory_shift = -math.log(oracle.prefactor_c) / spec.delta_b
    fit_payload = {"theory": {"slope": theory_slope,
                              "intercept_geometric_shift": theory_shift}}
    for obs in OBSERVABLES:
        fit = sweep.fits.get(obs)
        fit_payload[obs] = None if fit is None else {
            "points": [list(p) for p in fit.points],
            "slope": fit.slope,
            "intercept": fit.intercept,
            "max_abs_residual": fit.max_abs_residual,
        }
    native = []
    for (backend, m), exp in sorted(sweep.experiments.items()):
        if backend == "software":
            continue
        det = exp.onsets["fidelity"]
        fit = sweep.fits.get("fidelity")
        dev = None
        if det.found and fit is not None:
            line = fit.slope * m + fit.intercept
            dev = abs(det.time - line) / line
        native.append({"backend": backend, "m": m, "t_of_measured": det.time,
                       "relative_deviation_from_fit": dev})
    fit_payload["native_points"] = native
    outputs["fit.json"] = _write_json(cfg.out, "fit.json", fit_payload)
    _finish(cfg, outputs, started)
    print(f"scaling: {len(sweep.rows)} rows -> {cfg.out}/scaling.csv")
    fit = sweep.fits.get("fidelity")
    if fit is not None:
        print(f"  fidelity fit: slope {fit.slope:.4f} (theory {theory_slope:.4f}, "
              f"ratio {fit.slope / theory_slope:.4f}), intercept {fit.intercept:+.3f}, "
              f"max residual {fit.max_abs_residual:.3f}")
    for row in native:
        print(f"  {row['backend']} (m={row['m']}): T_of {_opt(row['t_of_measured'])} "
              f"dev {_opt(row['relative_deviation_from_fit'], '{:.2%}')}")
    return 0


def cmd_benchmark(cfg: RunConfig) -> int:
    started = time.time()
    spec = cfg.spec()
    if not spec.is_symmetric:
        raise ConfigurationError("benchmark requires symmetric couplings")
    if len(cfg.backend) != 1 or len(cfg.m) != 1:
        raise ConfigurationError("benchmark runs one (backend, m) at a time")
    ctx = context_create(cfg.backend[0], cfg.m[0] if cfg.backend[0] == "software" else None)
    res = run_benchmark(spec.gamma, spec.g, ctx, dt=cfg.dt,
                        tau_step=cfg.tau_step, tau_max=cfg.tau_max,
                        readout=cfg.readout(), route=Route(cfg.route),
                        cfg=cfg.onset_config())
    os.makedirs(cfg.out, exist_ok=True)
    outputs = {}
    for name, curve in sorted(res.curves.items()):
        fname = f"benchmark_{name}.csv"
        outputs[fname] = _write_csv(
            cfg.out, fname, ["tau", "F", "ln_kappa"],
            [(s.tau, s.fidelity, s.ln_kappa) for s in curve.samples])
    verdict = {
        "pt": {"onset": res.onsets["pt"].time, "min_fidelity": res.min_fidelity["pt"],
               "collapses": res.onsets["pt"].found},
        "normal": {"onset": res.onsets["normal"].time,
                   "min_fidelity": res.min_fidelity["normal"],
                   "survives": res.min_fidelity["normal"] > 0.999},
        "hermitian": {"min_fidelity": res.min_fidelity["hermitian"],
                      "max_abs_ln_kappa": res.max_abs_ln_kappa["hermitian"],
                      "kappa_is_unity": res.max_abs_ln_kappa["hermitian"] < 1e-30},
    }
    outputs["verdict.json"] = _write_json(cfg.out, "verdict.json", verdict)
    _finish(cfg, outputs, started)
    print(f"benchmark (m={ctx.m}, {ctx.backend.value}) -> {cfg.out}")
    print(f"  {'member':<10} {'min F':>12} {'onset':>9} {'max |ln k|':>11}")
    for name in ("pt", "normal", "hermitian"):
        print(f"  {name:<10} {res.min_fidelity[name]:>12.6g} "
              f"{_opt(res.onsets[name].time):>9} {res.max_abs_ln_kappa[name]:>11.4g}")
    return 0


_COMMANDS = {
    "kappa-curve": cmd_kappa_curve,
    "echo": cmd_echo,
    "scaling": cmd_scaling,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = build_config(ns)
        return _COMMANDS[cfg.command](cfg)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS + (EchobitsError,) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
