"""Acceptance gate: every criterion at its stated tolerance, one PASS line
per criterion on success."""

import math
import random
import time
from fractions import Fraction

import pytest

from echobits.analysis import fit_scaling
from echobits.echo import (
    Direction,
    Route,
    StateVector,
    default_initial_state,
    default_tau_grid,
    echo_curve,
    loschmidt_infidelity,
    plan_steps,
    stepped_evolve,
)
from echobits.kernel import PrecisionContext, RoundedReal, _round_to
from echobits.linalg import propagator_eigendecomp, svd_2x2
from echobits.model import DimerSpec, Oracle
from echobits.sweeps import run_benchmark, run_echo_experiment, run_scaling_sweep

GAMMA, G = 1.2, 1.0
SPEC = DimerSpec.symmetric(GAMMA, G)
ORACLE = Oracle(SPEC)
LN2_OVER_DB = math.log(2.0) / SPEC.delta_b


def report(name: str, detail: str):
    print(f"\nACCEPTANCE {name}: PASS — {detail}")


@pytest.fixture(scope="module")
def scaling_sweep():
    """Default sweep: software m in {15,30,50,70,90} plus both native backends."""
    jobs = [("software", m) for m in (15, 30, 50, 70, 90)]
    jobs += [("native32", 23), ("native64", 53)]
    t0 = time.monotonic()
    sweep = run_scaling_sweep(SPEC, jobs, dt=0.4, workers=2)
    return sweep, time.monotonic() - t0


@pytest.fixture(scope="module")
def m53_experiment():
    ctx = PrecisionContext.software(53)
    t0 = time.monotonic()
    exp = run_echo_experiment(SPEC, ctx, default_tau_grid(53, SPEC), dt=0.4)
    return exp, time.monotonic() - t0


def test_oracle_consistency():
    """|ln kappa_svd - ln kappa_exact| / ln kappa_exact < 1e-6 at 200 bits."""
    t0 = time.monotonic()
    ctx = PrecisionContext.software(200)
    h = SPEC.hamiltonian(ctx)
    worst = 0.0
    for t in range(1, 21):
        u = propagator_eigendecomp(h, float(t), ctx)
        lk = svd_2x2(u).ln_kappa()
        ref = ORACLE.ln_kappa_exact(float(t))
        worst = max(worst, abs(lk - ref) / ref)
        assert abs(lk - ref) / ref < 1e-6
    elapsed = time.monotonic() - t0
    assert elapsed < 5.0
    report("oracle-consistency",
           f"worst relative deviation {worst:.2e} over t=1..20 in {elapsed:.2f}s")


def test_closed_constant_reproduction():
    """eta = 0.6633, kappa(V) = 3.317, C = 3.273 to four significant figures."""
    assert abs(ORACLE.eta - 0.6633) < 5e-5
    assert abs(ORACLE.kappa_v - 3.317) < 5e-4
    assert abs(ORACLE.prefactor_c - 3.273) < 5e-4
    report("closed-constants",
           f"eta={ORACLE.eta:.6f} kappa_V={ORACLE.kappa_v:.6f} C={ORACLE.prefactor_c:.6f}")


def test_scaling_law(scaling_sweep):
    """Fidelity-onset line: slope within 5% of ln2/delta_b = 0.5225,
    intercept negative and within [-2, 0]."""
    sweep, elapsed = scaling_sweep
    assert elapsed < 120.0
    fit = sweep.fits["fidelity"]
    assert fit is not None and len(fit.points) == 5
    assert abs(LN2_OVER_DB - 0.5225) < 1e-4
    assert abs(fit.slope / LN2_OVER_DB - 1.0) < 0.05
    assert -2.0 <= fit.intercept < 0.0
    assert fit.max_abs_residual < 1.5
    report("scaling-law",
           f"slope={fit.slope:.4f} (ratio {fit.slope / LN2_OVER_DB:.4f}), "
           f"intercept={fit.intercept:+.3f}, max residual {fit.max_abs_residual:.3f}, "
           f"runtime {elapsed:.1f}s")


def test_hardware_backend_agreement(scaling_sweep):
    """Native64 (m=53) and Native32 (m=23) onsets within 10% of the fitted
    software line."""
    sweep, _ = scaling_sweep
    fit = sweep.fits["fidelity"]
    details = []
    for backend, m in [("native32", 23), ("native64", 53)]:
        det = sweep.experiments[(backend, m)].onsets["fidelity"]
        assert det.found
        line = fit.slope * m + fit.intercept
        dev = abs(det.time - line) / line
        assert dev < 0.10
        details.append(f"{backend} T_of={det.time:.2f} dev={dev:.2%}")
    report("hardware-backends", "; ".join(details))


def test_m53_onset(m53_experiment):
    """Measured fidelity onset at m=53: 27 +/- 1.5."""
    exp, elapsed = m53_experiment
    assert elapsed < 60.0
    det = exp.onsets["fidelity"]
    assert det.found
    assert abs(det.time - 27.0) <= 1.5
    report("m53-onset", f"T_of={det.time:.3f} in 27±1.5, runtime {elapsed:.1f}s")


def test_knee_sharpness(scaling_sweep):
    """knee_width * delta_b < 5 for m in {15, 50, 90}; widths within 2x."""
    sweep, _ = scaling_sweep
    widths = {}
    for m in (15, 50, 90):
        kw = sweep.experiments[("software", m)].knees["fidelity"]
        assert kw.found
        assert kw.width * SPEC.delta_b < 5.0
        widths[m] = kw.width
    ratio = max(widths.values()) / min(widths.values())
    assert ratio < 2.0
    report("knee-sharpness",
           "widths*delta_b = " + ", ".join(f"m={m}: {w * SPEC.delta_b:.2f}"
                                           for m, w in widths.items())
           + f"; spread factor {ratio:.2f}")


def test_benchmark_trio():
    """At m=53 the non-normal system collapses below 0.5 by tau=32, the
    normal diagonal system keeps F > 0.999 through tau=55, and the Hermitian
    system keeps F > 1 - 1e-10."""
    ctx = PrecisionContext.software(53)
    res = run_benchmark(GAMMA, G, ctx, dt=0.4)
    pt = res.curves["pt"]
    pt_early = [s.fidelity for s in pt.samples if s.tau <= 32.0]
    assert min(pt_early) < 0.5
    normal = res.curves["normal"]
    norm_f = [s.fidelity for s in normal.samples if s.tau <= 55.0]
    assert max(normal.taus()) >= 55.0
    assert min(norm_f) > 0.999
    herm = res.curves["hermitian"]
    herm_worst = min(s.fidelity for s in herm.samples)
    assert herm_worst > 1.0 - 1e-10
    report("benchmark-trio",
           f"PT min F(tau<=32)={min(pt_early):.3g}; "
           f"normal min F(tau<=55)={min(norm_f):.10f}; "
           f"hermitian worst F={herm_worst:.2e}-ish (1-F={1 - herm_worst:.2e})")


def test_work_echo_signatures(m53_experiment):
    """Plateau 1.2 +/- 0.1, saturation 0.3 +/- 0.1, onset agreement within one
    time unit, and initial-state universality of the post-knee values."""
    exp, _ = m53_experiment
    plateau = exp.plateaus["work_echo"]
    assert abs(plateau - 1.2) <= 0.1
    floor = exp.knees["work_echo"].floor
    assert abs(floor - 0.3) <= 0.1
    det_f, det_w = exp.onsets["fidelity"], exp.onsets["work_echo"]
    assert det_f.found and det_w.found
    assert abs(det_f.time - det_w.time) < 1.0
    # five preparations: plateaus pairwise apart by > 5%, tails within 1%
    ctx = PrecisionContext.software(53)
    states = [(1.0, 0.01), (0.5, 1.0), (0.7, 0.7), (1.0, 0.6), (0.2, 1.0)]
    grid = default_tau_grid(53, SPEC)
    plats, tails = [], []
    for comps in states:
        psi = StateVector.from_components(list(comps), ctx, normalize=True)
        curve = echo_curve(SPEC, grid, ctx, dt=0.4, psi0=psi)
        window = [v for t, v in zip(curve.taus(), curve.values("work_echo"))
                  if 1.0 <= t <= 4.0]
        plats.append(sorted(window)[len(window) // 2])
        tail = [v for t, v in zip(curve.taus(), curve.values("work_echo"))
                if t >= 0.8 * max(grid)]
        tails.append(sorted(tail)[len(tail) // 2])
    spread = (max(tails) - min(tails)) / min(tails)
    assert spread < 0.01
    gaps = sorted(plats)
    min_gap = min((b - a) / a for a, b in zip(gaps, gaps[1:]))
    assert min_gap > 0.05
    report("work-echo-signatures",
           f"plateau={plateau:.4f}, saturation={floor:.4f}, "
           f"|T_of(F)-T_of(eta)|={abs(det_f.time - det_w.time):.3f}, "
           f"tail spread={spread:.2e}, min plateau gap={min_gap:.2%}")


def test_reversibility_restoration():
    """The m=15 experiment re-run at Software(200): F > 1 - 1e-20 for all
    tau <= 20 (exact rational infidelity)."""
    ctx = PrecisionContext.software(200)
    psi0 = default_initial_state(ctx)
    worst = 0.0
    grid = [t for t in default_tau_grid(15, SPEC) if t <= 20.0]
    grid += [12.5, 16.0, 20.0]
    for tau in sorted(set(grid)):
        plan = plan_steps(tau, 0.4)
        out = stepped_evolve(psi0, SPEC, plan, ctx, Direction.FORWARD)
        rec = stepped_evolve(out, SPEC, plan, ctx, Direction.BACKWARD)
        inf = loschmidt_infidelity(psi0, rec)
        worst = max(worst, inf)
        assert inf < 1e-20
    report("reversibility-restoration",
           f"worst 1-F = {worst:.2e} over tau <= 20 at 200 bits")


def test_kernel_conformance():
    """Rounding property suite on 10^4 randomized cases: idempotence,
    ties-to-even midpoints, swamping threshold, Native64 bit-agreement."""
    rng = random.Random(20250810)
    cases = 0
    # idempotence (2500)
    for _ in range(2500):
        m = rng.randint(2, 256)
        man = rng.randrange(1 << (m - 1), 1 << m)
        x = RoundedReal(rng.randint(0, 1), man, rng.randint(-60, 60))
        r = _round_to(x.sign, x.man, x.exp, m)
        assert r == x and r.exact
        cases += 1
    # ties-to-even midpoints (2500)
    for _ in range(2500):
        m = rng.randint(2, 64)
        man = rng.randrange(1 << (m - 1), 1 << m)
        e = rng.randint(-30, 30)
        r = _round_to(0, (man << 1) | 1, e - 1, m)
        if man == (1 << m) - 1:
            assert r.man == 1 << (m - 1) and r.exp == e + 1
        else:
            assert r.man == (man if man % 2 == 0 else man + 1) and r.exp == e
        cases += 1
    # swamping threshold (2500)
    for _ in range(2500):
        m = rng.randint(2, 200)
        ops = PrecisionContext.software(m).ops
        x = RoundedReal(rng.randint(0, 1), rng.randrange(1 << (m - 1), 1 << m),
                        rng.randint(-40, 40))
        y = RoundedReal(rng.randint(0, 1), rng.randrange(1 << (m - 1), 1 << m),
                        x.exp - m - 1 - rng.randint(2, 30))
        assert abs(y.to_fraction()) < abs(x.to_fraction()) * Fraction(1, 2 ** (m + 1))
        r = ops.add(x, y)
        assert (r.sign, r.man, r.exp) == (x.sign, x.man, x.exp)
        cases += 1
    # Native64 bit-agreement on add/mul chains (2500)
    soft = PrecisionContext.software(53).ops
    a_soft, a_hard = soft.from_float(1.0), 1.0
    for _ in range(2500):
        y = rng.uniform(-100.0, 100.0)
        b = soft.from_float(y)
        if rng.random() < 0.5:
            a_soft, a_hard = soft.add(a_soft, b), a_hard + y
        else:
            a_soft, a_hard = soft.mul(a_soft, b), a_hard * y
        if a_hard == 0 or not (1e-250 < abs(a_hard) < 1e250):
            a_soft, a_hard = b, y
        assert a_soft.to_float() == a_hard
        cases += 1
    assert cases == 10000
    report("kernel-conformance", f"{cases} randomized cases passed")
