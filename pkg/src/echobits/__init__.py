"""Finite-precision non-Hermitian echo laboratory.

Forward/backward echo experiments at configurable arithmetic precision, an
exact analytic oracle for the propagator condition number and overflow time,
and analysis tooling that verifies the linear scaling of the predictability
horizon with precision bits.
"""

__version__ = "0.1.0"

from .analysis import (
    OnsetConfig,
    OverflowEstimate,
    ScalingFit,
    compare_observables,
    fit_scaling,
    knee_width,
    onset_detect,
    plateau_estimate,
)
from .echo import (
    DiagonalSystem,
    Direction,
    EchoCurve,
    EchoSample,
    ReadoutSpec,
    Route,
    StateVector,
    SteppingPlan,
    default_initial_state,
    default_tau_grid,
    echo_curve,
    loschmidt_fidelity,
    loschmidt_infidelity,
    mode_coefficients,
    plan_steps,
    stepped_evolve,
    work_echo_ratio,
    work_value,
)
from .kernel import (
    Backend,
    PrecisionContext,
    RoundedComplex,
    RoundedReal,
    bits_from_dynamic_range_db,
    context_create,
    rounded_arith,
)
from .linalg import (
    ComplexMatrix,
    EigResult,
    SvdResult,
    eig_2x2,
    propagator_closed_form,
    propagator_eigendecomp,
    propagator_series,
    svd_2x2,
)
from .model import (
    BenchmarkTrio,
    DimerSpec,
    Oracle,
    Phase,
    benchmark_trio,
    delta_b,
    dynamic_range_bits,
    kappa_v,
    t_dr,
)
from .sweeps import run_benchmark, run_echo_experiment, run_kappa_curve, run_scaling_sweep

__all__ = [name for name in dir() if not name.startswith("_")]
