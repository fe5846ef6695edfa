"""l1-regularized HOTV estimators solved by ADMM.

Analysis form::

    minimize_x  ||A x - b||^2 + lam * ||T_m x||_1

Synthesis form (``x = V_m t``; only the trailing ``N - m`` coefficients are
penalized)::

    minimize_t  ||A V_m t - b||^2 + lam * ||t[m:]||_1

Both use the same scaled ADMM iteration with the splitting ``z = D x``
(``D = T_m`` or the selector of ``t[m:]``).  The x-update is a linear least
squares problem solved with a QR factorization of the stacked matrix
``[A; sqrt(rho/2) D]``, which is reused until ``rho`` changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import lsq_linear

from .exceptions import DimensionError
from .operators import build_analysis, build_synthesis

__all__ = [
    "L1Options",
    "L1Result",
    "SweepResult",
    "soft_threshold",
    "solve_analysis_l1",
    "solve_synthesis_l1",
    "oracle_lambda_sweep",
    "analysis_objective",
    "subgradient_residual",
]

log = logging.getLogger(__name__)


def _default_grid() -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(-4, 2, 50))


@dataclass(frozen=True)
class L1Options:
    """ADMM settings.

    With ``adaptive_rho`` the penalty is rebalanced (factor 2) whenever the
    primal and dual residuals differ by more than a factor of 10.
    """

    rho: float = 1.0
    max_iterations: int = 5000
    primal_tol: float = 1e-6
    dual_tol: float = 1e-6
    lambda_grid: tuple[float, ...] = field(default_factory=_default_grid)
    adaptive_rho: bool = True

    def __post_init__(self):
        if not (self.rho > 0 and self.primal_tol > 0 and self.dual_tol > 0):
            raise ValueError("rho and tolerances must be strictly positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.ndim != 1 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("lambda_grid must hold strictly increasing positive values")

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "max_iterations": self.max_iterations,
            "primal_tol": self.primal_tol,
            "dual_tol": self.dual_tol,
            "lambda_grid": list(self.lambda_grid),
            "adaptive_rho": self.adaptive_rho,
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "L1Options":
        d = dict(d or {})
        if "lambda_grid" in d:
            d["lambda_grid"] = tuple(float(v) for v in d["lambda_grid"])
        return cls(**d)


@dataclass(eq=False)
class L1Result:
    """Outcome of one ADMM solve.  ``converged=False`` flags exhaustion."""

    x: np.ndarray
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    lam: float
    coef: np.ndarray | None = None
    objective_history: np.ndarray | None = None
    # ADMM state, reused to warm start neighbouring solves
    state: tuple | None = field(default=None, repr=False)


@dataclass(eq=False)
class SweepResult:
    x: np.ndarray
    lam: float
    rel_err: float
    grid: np.ndarray
    errors: np.ndarray
    all_converged: bool


def soft_threshold(v, kappa):
    """``sign(v) * max(|v| - kappa, 0)``, elementwise."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def analysis_objective(A, b, m: int, x, lam: float) -> float:
    A = np.asarray(A, dtype=float)
    r = A @ x - b
    T = build_analysis(m, A.shape[1]).matrix.astype(float)
    return float(r @ r + lam * np.abs(T @ x).sum())


def _prepare(A, b, m):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise DimensionError(f"incompatible shapes A{A.shape} and b{b.shape}")
    N = A.shape[1]
    if not 1 <= m < N:
        raise DimensionError(f"order must be less than size (m={m}, N={N})")
    return A, b, N


class _Admm:
    """Scaled-form ADMM for ``||F v - b||^2 + lam ||D v||_1``."""

    def __init__(self, F, b, D, opts: L1Options):
        self.F, self.b, self.D, self.opts = F, b, D, opts
        self.n = F.shape[1]
        self.p = D.shape[0]
        self._rho = None

    def _factor(self, rho):
        K = np.vstack([self.F, np.sqrt(rho / 2.0) * self.D])
        self.Q, self.R = sla.qr(K, mode="economic", check_finite=False)
        self._rho = rho

    def _xupdate(self, rhs_z):
        rho = self._rho
        rhs = np.concatenate([self.b, np.sqrt(rho / 2.0) * rhs_z])
        return sla.solve_triangular(self.R, self.Q.T @ rhs, check_finite=False)

    def objective(self, v, lam):
        r = self.F @ v - self.b
        return float(r @ r + lam * np.abs(self.D @ v).sum())

    def solve(self, lam, init=None, record_objective=False) -> L1Result:
        opts = self.opts
        rho = opts.rho
        if init is not None:
            v, z, u, rho, lam_prev = init
            # the unscaled dual rho * u scales with lam
            u = u * (lam / lam_prev)
            z = z.copy()
        else:
            z = np.zeros(self.p)
            u = np.zeros(self.p)
        if self._rho != rho:
            self._factor(rho)
        history = []
        converged = False
        r_norm = s_norm = np.inf
        sqrt_p, sqrt_n = np.sqrt(self.p), np.sqrt(self.n)
        it = 0
        for it in range(1, opts.max_iterations + 1):
            v = self._xupdate(z - u)
            Dv = self.D @ v
            z_old = z
            z = soft_threshold(Dv + u, lam / rho)
            u = u + Dv - z
            r_norm = float(np.linalg.norm(Dv - z))
            s_norm = float(rho * np.linalg.norm(self.D.T @ (z - z_old)))
            if record_objective:
                history.append(self.objective(v, lam))
            eps_pri = opts.primal_tol * (sqrt_p + max(np.linalg.norm(Dv), np.linalg.norm(z)))
            eps_dual = opts.dual_tol * (sqrt_n + rho * np.linalg.norm(self.D.T @ u))
            if r_norm <= eps_pri and s_norm <= eps_dual:
                converged = True
                break
            if opts.adaptive_rho and it % 10 == 0:
                if r_norm > 10 * s_norm:
                    rho_new = 2.0 * rho
                elif s_norm > 10 * r_norm:
                    rho_new = rho / 2.0
                else:
                    rho_new = rho
                if rho_new != rho:
                    u = u * (rho / rho_new)
                    rho = rho_new
                    self._factor(rho)
        if not converged:
            log.debug("ADMM hit %d iterations (r=%.2e, s=%.2e)", it, r_norm, s_norm)
        return L1Result(
            x=v,
            converged=converged,
            iterations=it,
            primal_residual=r_norm,
            dual_residual=s_norm,
            objective=self.objective(v, lam),
            lam=float(lam),
            objective_history=np.asarray(history) if record_objective else None,
            state=(v, z, u, rho, lam),
        )


def _check_lambda(lam):
    if not lam > 0:
        raise ValueError(f"lambda must be strictly positive, got {lam}")


def solve_analysis_l1(A, b, m: int, lam: float, opts: L1Options | None = None,
                      *, init=None, record_objective: bool = False) -> L1Result:
    """Minimize ``||A x - b||^2 + lam ||T_m x||_1`` over ``x``."""
    opts = opts or L1Options()
    _check_lambda(lam)
    A, b, N = _prepare(A, b, m)
    T = build_analysis(m, N).matrix.astype(float)
    return _Admm(A, b, T, opts).solve(lam, init=init, record_objective=record_objective)


def solve_synthesis_l1(A, b, m: int, lam: float, opts: L1Options | None = None) -> L1Result:
    """Minimize ``||A V_m t - b||^2 + lam ||t[m:]||_1`` and return ``x = V_m t``.

    The first ``m`` coefficients (the completion coordinates) are left
    unpenalized.  The returned objective is that of the synthesis problem,
    which equals the analysis objective at ``x``.
    """
    opts = opts or L1Options()
    _check_lambda(lam)
    A, b, N = _prepare(A, b, m)
    V = build_synthesis(m, N).synthesis.astype(float)
    P = np.eye(N)[m:]
    res = _Admm(A @ V, b, P, opts).solve(lam)
    res.coef = res.x
    res.x = V @ res.coef
    return res


def oracle_lambda_sweep(A, b, m: int, x_true, opts: L1Options | None = None) -> SweepResult:
    """Analysis solves over ``opts.lambda_grid``; keep the lowest relative error.

    Grid points are visited in increasing order with warm starts, and ties
    go to the smaller lambda.
    """
    opts = opts or L1Options()
    grid = np.asarray(opts.lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    A, b, N = _prepare(A, b, m)
    x_true = np.asarray(x_true, dtype=float)
    norm_true = np.linalg.norm(x_true)
    if norm_true == 0:
        raise ValueError("x_true must be nonzero")
    T = build_analysis(m, N).matrix.astype(float)
    solver = _Admm(A, b, T, opts)
    errors = np.empty(grid.size)
    best = None
    init = None
    all_conv = True
    for i, lam in enumerate(grid):
        res = solver.solve(lam, init=init)
        init = res.state
        all_conv &= res.converged
        errors[i] = np.linalg.norm(res.x - x_true) / norm_true
        if best is None or errors[i] < errors[best[0]]:
            best = (i, res.x)
    i, x = best
    return SweepResult(x=x, lam=float(grid[i]), rel_err=float(errors[i]), grid=grid,
                       errors=errors, all_converged=bool(all_conv))


def subgradient_residual(A, b, m: int, x, lam: float, support_tol: float = 1e-5) -> float:
    """Scaled distance of ``0`` from the subdifferential of the analysis objective at ``x``.

    The subdifferential is ``2 A^T (A x - b) + lam T^T w`` with
    ``w_i = sign((T x)_i)`` where ``|(T x)_i|`` exceeds ``support_tol`` (relative
    to ``max|T x|``) and ``w_i`` in ``[-1, 1]`` elsewhere.  The free entries
    are chosen by bounded least squares; the result is divided by
    ``max(1, ||2 A^T b||)``.
    """
    A, b, N = _prepare(A, b, m)
    x = np.asarray(x, dtype=float)
    T = build_analysis(m, N).matrix.astype(float)
    g = 2.0 * A.T @ (A @ x - b)
    s = T @ x
    on = np.abs(s) > support_tol * max(1.0, np.max(np.abs(s)))
    target = -(g + lam * T[on].T @ np.sign(s[on]))
    free = ~on
    if free.any():
        sol = lsq_linear(lam * T[free].T, target, bounds=(-1.0, 1.0))
        resid = lam * T[free].T @ sol.x - target
    else:
        resid = -target
    return float(np.linalg.norm(resid) / max(1.0, np.linalg.norm(2.0 * A.T @ b)))
