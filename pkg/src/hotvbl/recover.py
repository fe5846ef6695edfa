"""End-to-end HOTV Bayesian learning (HOTVBL) recovery.

The signal is written as ``x = V_m t`` so that ``b = A x + n = (A V_m) t + n``
is a sparse regression problem in ``t``.  SBL returns a Gaussian posterior
``N(mu, Sigma)`` over ``t``, which maps to the signal posterior

    E(x)   = V_m mu
    Cov(x) = V_m Sigma V_m^T

Complex measurements of a real signal are handled by stacking real and
imaginary parts (see :func:`stack_complex`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .exceptions import DimensionError
from .operators import build_synthesis
from .sbl import SblOptions, SblPosterior, run_sbl

__all__ = [
    "RecoveryProblem",
    "SignalPosterior",
    "stack_complex",
    "confidence_intervals",
    "recover",
]


@dataclass(frozen=True, eq=False)
class RecoveryProblem:
    """Forward matrix ``A`` (``J x N``), data ``b`` and HOTV order ``m``."""

    forward: np.ndarray
    data: np.ndarray
    order: int
    options: SblOptions = field(default_factory=SblOptions)
    confidence: float = 0.99

    def __post_init__(self):
        A = np.asarray(self.forward)
        b = np.asarray(self.data)
        if A.ndim != 2:
            raise DimensionError(f"forward matrix must be 2-D, got shape {A.shape}")
        if b.ndim != 1 or b.shape[0] != A.shape[0]:
            raise DimensionError(f"data length {b.shape} does not match forward rows {A.shape[0]}")
        if not 1 <= self.order < A.shape[1]:
            raise DimensionError(f"order must be less than size (m={self.order}, N={A.shape[1]})")

    @property
    def size(self) -> int:
        return np.asarray(self.forward).shape[1]


@dataclass(frozen=True, eq=False)
class SignalPosterior:
    """Gaussian posterior of the signal plus the underlying edge posterior."""

    mean: np.ndarray
    covariance: np.ndarray
    edge_posterior: SblPosterior
    lower: np.ndarray
    upper: np.ndarray
    level: float

    @property
    def variance(self) -> np.ndarray:
        return np.clip(np.diag(self.covariance), 0.0, None)

    @property
    def intervals(self) -> np.ndarray:
        """``(N, 2)`` array of per-point ``(lower, upper)`` bounds."""
        return np.column_stack([self.lower, self.upper])


def stack_complex(A, b):
    """Stack real and imaginary parts: ``[Re A; Im A]`` and ``[Re b; Im b]``.

    For any real ``t`` the stacked residual norm equals the complex one.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise DimensionError(f"incompatible shapes A{A.shape} and b{b.shape}")
    A_s = np.vstack([A.real, A.imag]).astype(float)
    b_s = np.concatenate([b.real, b.imag]).astype(float)
    return A_s, b_s


def _z_value(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    return float(norm.ppf(0.5 + 0.5 * level))


def confidence_intervals(posterior, level: float = 0.99):
    """Two-sided Gaussian intervals ``mean -/+ z * sqrt(Cov_ii)``.

    ``posterior`` may be a :class:`SignalPosterior` or any object with
    ``mean`` and ``covariance`` attributes.  Returns ``(lower, upper)``.
    """
    z = _z_value(level)
    var = np.diag(np.asarray(posterior.covariance))
    if np.any(var < -1e-10 * max(1.0, float(np.max(np.abs(var), initial=0.0)))):
        raise ValueError("covariance has a negative diagonal entry")
    half = z * np.sqrt(np.clip(var, 0.0, None))
    mean = np.asarray(posterior.mean)
    return mean - half, mean + half


def recover(problem: RecoveryProblem) -> SignalPosterior:
    """Run HOTVBL on ``problem`` and return the signal posterior."""
    A = np.asarray(problem.forward)
    b = np.asarray(problem.data)
    if np.iscomplexobj(A) or np.iscomplexobj(b):
        A, b = stack_complex(A, b)
    else:
        A = A.astype(float)
        b = b.astype(float)
    _z_value(problem.confidence)
    m, N = problem.order, A.shape[1]
    V = build_synthesis(m, N).synthesis.astype(float)
    edge = run_sbl(A @ V, b, problem.options)
    act = edge.active
    mean = V @ edge.mean
    Va = V[:, act]
    cov = Va @ edge.covariance[np.ix_(act, act)] @ Va.T
    cov = 0.5 * (cov + cov.T)
    z = _z_value(problem.confidence)
    half = z * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return SignalPosterior(
        mean=mean,
        covariance=cov,
        edge_posterior=edge,
        lower=mean - half,
        upper=mean + half,
        level=problem.confidence,
    )
