"""Signals, metrics and runners for the numerical experiments."""

from .runners import (
    ExperimentConfig,
    ExperimentResult,
    TrialRecord,
    default_config,
    run_experiment,
    run_test1,
    run_test2,
    run_test3,
    trial_seed,
    write_results,
)
from .signals import (
    IDEAL_KINDS,
    SMOOTH_FUNCTIONS,
    add_noise_at_snr,
    dft_forward,
    gaussian_forward,
    make_ideal_signal,
    make_piecewise_poly,
    max_err,
    piecewise_smooth,
    rel_err,
    snr_db,
    sparsity_count,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "TrialRecord",
    "default_config",
    "run_experiment",
    "run_test1",
    "run_test2",
    "run_test3",
    "trial_seed",
    "write_results",
    "IDEAL_KINDS",
    "SMOOTH_FUNCTIONS",
    "add_noise_at_snr",
    "dft_forward",
    "gaussian_forward",
    "make_ideal_signal",
    "make_piecewise_poly",
    "max_err",
    "piecewise_smooth",
    "rel_err",
    "snr_db",
    "sparsity_count",
]
