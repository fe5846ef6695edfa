"""Sparse Bayesian learning with high-order total variation (HOTVBL).

Signals are modeled as ``x = V_m t`` with ``t`` sparse, where ``V_m`` is the
inverse of the rank-completed ``m``-th order difference operator.  Sparse
Bayesian learning on ``b = A V_m t + n`` then yields a Gaussian posterior for
``x`` with per-point credible intervals.
"""

from .exceptions import ConsistencyError, DimensionError, NumericalError
from .l1 import L1Options, L1Result, oracle_lambda_sweep, solve_analysis_l1, solve_synthesis_l1
from .operators import (
    AnalysisOperator,
    SynthesisBundle,
    apply_analysis,
    build_analysis,
    build_completed,
    build_synthesis,
)
from .recover import RecoveryProblem, SignalPosterior, confidence_intervals, recover, stack_complex
from .sbl import SblOptions, SblPosterior, marginal_log_likelihood, run_sbl

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError",
    "DimensionError",
    "NumericalError",
    "L1Options",
    "L1Result",
    "oracle_lambda_sweep",
    "solve_analysis_l1",
    "solve_synthesis_l1",
    "AnalysisOperator",
    "SynthesisBundle",
    "apply_analysis",
    "build_analysis",
    "build_completed",
    "build_synthesis",
    "RecoveryProblem",
    "SignalPosterior",
    "confidence_intervals",
    "recover",
    "stack_complex",
    "SblOptions",
    "SblPosterior",
    "marginal_log_likelihood",
    "run_sbl",
    "__version__",
]
