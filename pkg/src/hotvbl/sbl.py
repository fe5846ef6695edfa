"""Sparse Bayesian learning for the linear-Gaussian model ``b = H t + n``.

The prior on each coefficient is ``t_i ~ N(0, 1/a_i)`` with the precisions
``a`` and the noise precision ``beta`` estimated by type-II maximum
likelihood.  Hyperpriors are flat on a log scale, so no Gamma parameters
appear anywhere.

Each iteration proposes the fixed-point update

    gamma_i = 1 - a_i * Sigma_ii
    a_i    <- gamma_i / mu_i**2
    beta   <- (J - sum(gamma)) / ||b - H mu||**2

and keeps it when the marginal log-likelihood does not drop.  Otherwise the
classical EM step ``a_i <- 1 / (mu_i**2 + Sigma_ii)``,
``beta <- J / (||b - H mu||**2 + tr(H Sigma H^T))`` is tried instead; that
step cannot lower the likelihood in exact arithmetic.  If it also fails
(only seen at the floating-point floor of noiseless problems whose
likelihood is unbounded) the run stops and reports ``stop_reason="stalled"``.

Coefficients whose precision exceeds ``prune_threshold`` are removed from
the active set for good and reported with zero mean, zero covariance and
infinite precision.

Posterior moments are computed in whichever space is smaller: the
``M_active x M_active`` precision matrix ``beta H^T H + diag(a)`` or, when
there are more active coefficients than measurements, the ``J x J`` data
covariance ``C = I / beta + H diag(1/a) H^T``.  The second form stays well
conditioned when ``beta`` is huge and ``H^T H`` is rank deficient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import DimensionError, NumericalError

__all__ = [
    "BETA_CEILING",
    "SblOptions",
    "SblPosterior",
    "posterior_update",
    "hyperparameter_update",
    "marginal_log_likelihood",
    "run_sbl",
]

log = logging.getLogger(__name__)

#: Upper bound on the noise precision; reached on (near) noiseless data.
BETA_CEILING = 1e12
#: Lower bound on coefficient precisions so that ``1/a`` stays finite.
A_FLOOR = 1e-12
#: Largest relative diagonal shift tried before a factorization is declared failed.
MAX_JITTER = 1e-4
#: Slack allowed when comparing successive log-likelihood values.
ACCEPT_SLACK = 1e-9

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SblOptions:
    """Stopping, pruning and initialization settings for :func:`run_sbl`.

    ``beta_init="auto"`` starts the noise precision at ``100 / var(b)``
    (``100 / mean(b**2)`` when ``b`` is constant).  ``a_init="auto"`` starts
    every precision at ``1000 / var(b)``, i.e. close to an empty model; this
    avoids the interpolating optimum on square, invertible problems such as
    denoising.  ``jitter`` is the first
    relative diagonal shift tried when a Cholesky factorization fails; it
    is multiplied by 10 up to ``1e-4``.
    """

    max_iterations: int = 2000
    convergence_tol: float = 1e-6
    prune_threshold: float = 1e10
    beta_init: float | str = "auto"
    a_init: float | str = 1.0
    jitter: float = 1e-10

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        for name in ("convergence_tol", "prune_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("beta_init", "a_init"):
            v = getattr(self, name)
            if isinstance(v, str):
                if v != "auto":
                    raise ValueError(f"{name} must be a positive number or 'auto'")
            elif not v > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.jitter >= 0:
            raise ValueError("jitter must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "convergence_tol": self.convergence_tol,
            "prune_threshold": self.prune_threshold,
            "beta_init": self.beta_init,
            "a_init": self.a_init,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "SblOptions":
        return cls(**(d or {}))


@dataclass(frozen=True, eq=False)
class SblPosterior:
    """Gaussian posterior ``N(mean, covariance)`` over the sparse vector."""

    mean: np.ndarray
    covariance: np.ndarray
    precisions: np.ndarray
    noise_precision: float
    log_likelihood_history: np.ndarray
    iterations: int
    converged: bool
    gamma: np.ndarray = field(repr=False)
    stop_reason: str = "converged"

    @property
    def active(self) -> np.ndarray:
        """Indices of coefficients that survived pruning."""
        return np.flatnonzero(np.isfinite(self.precisions))

    @property
    def log_likelihood(self) -> float:
        return float(self.log_likelihood_history[-1])


# ---------------------------------------------------------------------------
# linear algebra helpers


def _cholesky(P: np.ndarray, jitter: float) -> np.ndarray:
    """Lower Cholesky factor of ``P``, adding relative jitter on failure."""
    try:
        return sla.cholesky(P, lower=True, check_finite=False)
    except sla.LinAlgError:
        pass
    if jitter > 0:
        scale = float(np.mean(np.abs(np.diag(P)))) or 1.0
        j = jitter
        while j <= MAX_JITTER * (1 + 1e-12):
            Q = P.copy()
            Q[np.diag_indices_from(Q)] += j * scale
            try:
                L = sla.cholesky(Q, lower=True, check_finite=False)
            except sla.LinAlgError:
                j *= 10
                continue
            log.debug("cholesky needed relative jitter %.1e", j)
            return L
    raise NumericalError("matrix is not positive definite even after diagonal jitter")


def _check_model(H, b):
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    if H.ndim != 2 or b.ndim != 1 or H.shape[0] != b.shape[0]:
        raise DimensionError(f"incompatible shapes H{H.shape} and b{b.shape}")
    if H.shape[0] < 1 or H.shape[1] < 1:
        raise DimensionError("H must have at least one row and one column")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(b))):
        raise ValueError("H and b must be finite")
    return H, b


def posterior_update(H, b, a, beta, jitter: float = 1e-10):
    """Posterior mean and covariance of ``t`` for fixed hyperparameters.

    ``Sigma = inv(beta H^T H + diag(a))`` and ``mu = beta Sigma H^T b``.
    Entries of ``a`` equal to ``inf`` denote pruned coefficients; they get
    zero mean and a zero row and column in ``Sigma``.

    Returns
    -------
    mu : ndarray, shape (M,)
    Sigma : ndarray, shape (M, M)
    """
    H, b = _check_model(H, b)
    a = np.asarray(a, dtype=float)
    M = H.shape[1]
    if a.shape != (M,):
        raise DimensionError(f"expected {M} precisions, got shape {a.shape}")
    if not np.all(a > 0):
        raise ValueError("precisions must be strictly positive")
    if not beta > 0:
        raise ValueError("beta must be strictly positive")
    act = np.flatnonzero(np.isfinite(a))
    mu = np.zeros(M)
    Sigma = np.zeros((M, M))
    if act.size:
        Ha = H[:, act]
        P = beta * (Ha.T @ Ha)
        P[np.diag_indices_from(P)] += a[act]
        L = _cholesky(P, jitter)
        Linv = sla.solve_triangular(L, np.eye(act.size), lower=True, check_finite=False)
        S = Linv.T @ Linv
        S = 0.5 * (S + S.T)
        mu[act] = beta * (S @ (Ha.T @ b))
        Sigma[np.ix_(act, act)] = S
    return mu, Sigma


def hyperparameter_update(mu, Sigma, a, H, b):
    """One fixed-point update of the precisions and the noise precision.

    Returns ``(a_new, beta_new, gamma)``.  Coefficients with ``mu_i == 0`` (or
    already pruned) get ``a_new_i = inf``, the pruning sentinel.  ``gamma`` is
    clipped to ``[0, 1]``.  When the residual ``||b - H mu||**2`` is below
    ``1e-15``, or the ratio would exceed it, ``beta_new`` is set to
    :data:`BETA_CEILING`.
    """
    H, b = _check_model(H, b)
    mu = np.asarray(mu, dtype=float)
    a = np.asarray(a, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    J = b.shape[0]
    act = np.isfinite(a)
    gamma = np.zeros_like(a)
    gamma[act] = np.clip(1.0 - a[act] * np.diag(Sigma)[act], 0.0, 1.0)
    a_new = np.full_like(a, np.inf)
    live = act & (mu != 0.0)
    a_new[live] = np.maximum(gamma[live] / mu[live] ** 2, A_FLOOR)
    r = b - H @ mu
    beta_new = _beta_fixed_point(J, gamma.sum(), float(r @ r))
    return a_new, beta_new, gamma


def _beta_fixed_point(J: int, gamma_sum: float, rr: float) -> float:
    if rr < 1e-15:
        return BETA_CEILING
    num = max(J - gamma_sum, 1e-12 * J)
    return min(num / rr, BETA_CEILING)


def marginal_log_likelihood(H, b, a, beta) -> float:
    """``log N(b | 0, C)`` with ``C = I / beta + H diag(1/a) H^T``.

    Pruned coefficients (``a_i = inf``) contribute nothing to ``C``.
    Evaluated through a Cholesky factorization of the ``J x J`` matrix ``C``.
    """
    H, b = _check_model(H, b)
    a = np.asarray(a, dtype=float)
    if a.shape != (H.shape[1],) or not np.all(a > 0) or not beta > 0:
        raise ValueError("a must be a positive vector of length M and beta positive")
    act = np.isfinite(a)
    Ha = H[:, act]
    C = (Ha / a[act]) @ Ha.T
    C[np.diag_indices_from(C)] += 1.0 / beta
    try:
        L = sla.cholesky(C, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericalError("data covariance C is not positive definite") from exc
    z = sla.solve_triangular(L, b, lower=True, check_finite=False)
    J = b.shape[0]
    return float(-0.5 * (J * _LOG_2PI + 2.0 * np.sum(np.log(np.diag(L))) + z @ z))


# ---------------------------------------------------------------------------
# EM driver


@dataclass(eq=False)
class _State:
    active: np.ndarray  # indices into the full coefficient vector
    a: np.ndarray  # precisions of the active coefficients
    beta: float
    mu: np.ndarray
    Sigma: np.ndarray
    gamma: np.ndarray
    rr: float
    loglik: float


class _Model:
    """Cached products of ``H`` and ``b`` shared by all iterations."""

    def __init__(self, H, b, jitter):
        self.H = H
        self.b = b
        self.J, self.M = H.shape
        self.G = H.T @ H
        self.Hb = H.T @ b
        self.jitter = jitter

    def evaluate(self, active, a, beta) -> _State:
        J = self.J
        if active.size == 0:
            rr = float(self.b @ self.b)
            ll = -0.5 * (J * _LOG_2PI - J * np.log(beta) + beta * rr)
            empty = np.zeros(0)
            return _State(active, a, beta, empty, np.zeros((0, 0)), empty, rr, ll)
        Ha = self.H[:, active]
        if active.size <= J:
            P = beta * self.G[np.ix_(active, active)]
            P[np.diag_indices_from(P)] += a
            L = _cholesky(P, self.jitter)
            Linv = sla.solve_triangular(L, np.eye(active.size), lower=True, check_finite=False)
            Sigma = Linv.T @ Linv
            mu = beta * (Sigma @ self.Hb[active])
            gamma = np.clip(1.0 - a * np.diag(Sigma), 0.0, 1.0)
            r = self.b - Ha @ mu
            rr = float(r @ r)
            logdet_C = -J * np.log(beta) - np.sum(np.log(a)) + 2.0 * np.sum(np.log(np.diag(L)))
            quad = beta * rr + float(mu @ (a * mu))
        else:
            ainv = 1.0 / a
            C = (Ha * ainv) @ Ha.T
            C[np.diag_indices_from(C)] += 1.0 / beta
            L = _cholesky(C, self.jitter)
            W = sla.solve_triangular(L, Ha * ainv, lower=True, check_finite=False)
            z = sla.solve_triangular(L, self.b, lower=True, check_finite=False)
            mu = W.T @ z
            Sigma = -(W.T @ W)
            Sigma[np.diag_indices_from(Sigma)] += ainv
            gamma = np.clip(a * np.sum(W * W, axis=0), 0.0, 1.0)
            r = self.b - Ha @ mu
            rr = float(r @ r)
            logdet_C = 2.0 * np.sum(np.log(np.diag(L)))
            quad = float(z @ z)
        Sigma = 0.5 * (Sigma + Sigma.T)
        ll = -0.5 * (J * _LOG_2PI + logdet_C + quad)
        return _State(active, a, beta, mu, Sigma, gamma, rr, float(ll))


def _fixed_point_proposal(s: _State, J: int):
    with np.errstate(divide="ignore"):
        a_new = np.where(s.mu != 0.0, s.gamma / np.where(s.mu != 0.0, s.mu**2, 1.0), np.inf)
    a_new = np.maximum(a_new, A_FLOOR)
    return a_new, _beta_fixed_point(J, float(s.gamma.sum()), s.rr)


def _em_proposal(s: _State, J: int):
    a_new = np.maximum(1.0 / (s.mu**2 + np.diag(s.Sigma)), A_FLOOR)
    # tr(H Sigma H^T) = sum(gamma) / beta follows from Sigma (beta H^T H + Lambda) = I
    beta_new = min(J / (s.rr + float(s.gamma.sum()) / s.beta), BETA_CEILING)
    return a_new, beta_new


def _data_scale(b: np.ndarray) -> float:
    v = float(np.var(b))
    if v <= 1e-300:
        v = float(np.mean(b**2))
    return v


def _initial_beta(b: np.ndarray, beta_init) -> float:
    if beta_init != "auto":
        return float(beta_init)
    v = _data_scale(b)
    if v <= 1e-300:
        return 1.0
    return min(100.0 / v, BETA_CEILING)


def _initial_a(b: np.ndarray, opts: SblOptions) -> float:
    if opts.a_init != "auto":
        return float(opts.a_init)
    v = _data_scale(b)
    if v <= 1e-300:
        return 1.0
    return min(1000.0 / v, 0.1 * opts.prune_threshold)


def run_sbl(H, b, opts: SblOptions | None = None) -> SblPosterior:
    """Fit the SBL model to ``b = H t + n`` and return the posterior over ``t``.

    The log-likelihood history starts with the value at the initial
    hyperparameters and gains one entry per accepted iteration; it never
    decreases by more than ``1e-9``.  Iteration exhaustion returns
    ``converged=False`` rather than raising.
    """
    opts = opts or SblOptions()
    H, b = _check_model(H, b)
    model = _Model(H, b, opts.jitter)
    J, M = model.J, model.M

    active = np.arange(M)
    state = model.evaluate(active, np.full(M, _initial_a(b, opts)), _initial_beta(b, opts.beta_init))
    history = [state.loglik]
    converged = False
    stop_reason = "max_iterations"
    iterations = 0

    for _ in range(opts.max_iterations):
        if state.active.size == 0:
            converged, stop_reason = True, "converged"
            break
        new_state = None
        for propose in (_fixed_point_proposal, _em_proposal):
            a_prop, beta_prop = propose(state, J)
            keep = a_prop < opts.prune_threshold
            cand = model.evaluate(state.active[keep], a_prop[keep], beta_prop)
            if cand.loglik >= state.loglik - ACCEPT_SLACK:
                new_state = cand
                break
        if new_state is None:
            stop_reason = "stalled"
            log.debug("SBL stalled after %d iterations at loglik %.6g", iterations, state.loglik)
            break
        iterations += 1
        history.append(new_state.loglik)
        old_a = state.a[keep]
        if old_a.size:
            delta = float(np.max(np.abs(new_state.a - old_a) / old_a))
        else:
            delta = 0.0
        state = new_state
        if delta < opts.convergence_tol:
            converged, stop_reason = True, "converged"
            break

    mean = np.zeros(M)
    cov = np.zeros((M, M))
    prec = np.full(M, np.inf)
    gamma = np.zeros(M)
    mean[state.active] = state.mu
    cov[np.ix_(state.active, state.active)] = state.Sigma
    prec[state.active] = state.a
    gamma[state.active] = state.gamma
    return SblPosterior(
        mean=mean,
        covariance=cov,
        precisions=prec,
        noise_precision=float(state.beta),
        log_likelihood_history=np.asarray(history),
        iterations=iterations,
        converged=converged,
        gamma=gamma,
        stop_reason=stop_reason,
    )
