"""High-order total variation (HOTV) operators.

Three integer matrices are built for an order ``m`` and signal size ``N``:

* the banded analysis operator ``T_m`` of shape ``(N - m, N)``, whose rows
  are the scaled ``m``-th forward-difference stencil;
* its rank completion ``T~_m`` (``N x N``), obtained by stacking the
  0th through ``(m-1)``th forward-difference stencils, left aligned, on top
  of ``T_m``;
* the synthesis operator ``V_m = inv(T~_m)``, built by a column-wise
  cumulative-sum recursion starting from the lower-triangular ones matrix.

Rows and columns are 0-indexed here.  Row ``i`` of ``T_m`` therefore has
its nonzeros at columns ``i .. i + m``.

All matrices are returned as read-only integer arrays.  Convert them with
``.astype(float)`` at the solver boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ConsistencyError, DimensionError

__all__ = [
    "AnalysisOperator",
    "SynthesisBundle",
    "difference_stencil",
    "build_analysis",
    "build_completed",
    "build_synthesis",
    "apply_analysis",
]


def _check_order(m: int, N: int) -> None:
    if int(m) != m or int(N) != N:
        raise DimensionError(f"order and size must be integers, got m={m!r}, N={N!r}")
    if m < 1:
        raise DimensionError(f"order must be at least 1, got m={m}")
    if m >= N:
        raise DimensionError(f"order must be less than size (m={m}, N={N})")


def _int_dtype(m: int, N: int):
    # Entries of V_m are bounded by C(N-1, m-1); products with T~_m add a
    # factor of at most N * 2**m.  Fall back to Python ints past int64.
    bound = math.comb(N - 1, m - 1) * N * 2**m
    return np.int64 if bound < 2**62 else object


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def difference_stencil(p: int) -> np.ndarray:
    """Coefficients of the ``p``-th forward difference.

    Entry ``j`` equals ``(-1)**(p - j) * comb(p, j)`` for ``j = 0..p``, so
    ``difference_stencil(0) == [1]`` and ``difference_stencil(2) == [1, -2, 1]``.
    """
    if p < 0:
        raise DimensionError(f"stencil order must be nonnegative, got {p}")
    return np.array([(-1) ** (p - j) * math.comb(p, j) for j in range(p + 1)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class AnalysisOperator:
    """Banded ``(N - m) x N`` matrix of ``m``-th order difference stencils."""

    order: int
    size: int
    matrix: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def stencil(self) -> np.ndarray:
        return difference_stencil(self.order)


@dataclass(frozen=True, eq=False)
class SynthesisBundle:
    """Completed analysis operator ``T~_m`` and its exact inverse ``V_m``."""

    order: int
    size: int
    completed: np.ndarray
    synthesis: np.ndarray


@lru_cache(maxsize=64)
def build_analysis(m: int, N: int) -> AnalysisOperator:
    """Return the HOTV analysis operator ``T_m`` for a signal of length ``N``.

    >>> build_analysis(1, 3).matrix.tolist()
    [[-1, 1, 0], [0, -1, 1]]
    """
    _check_order(m, N)
    st = difference_stencil(m)
    T = np.zeros((N - m, N), dtype=_int_dtype(m, N))
    rows = np.arange(N - m)
    for j, c in enumerate(st):
        T[rows, rows + j] = int(c)  # Python int so object arrays stay exact
    return AnalysisOperator(order=m, size=N, matrix=_frozen(T))


@lru_cache(maxsize=64)
def _completed(m: int, N: int) -> np.ndarray:
    _check_order(m, N)
    Tt = np.zeros((N, N), dtype=_int_dtype(m, N))
    for i in range(m):
        Tt[i, : i + 1] = [int(c) for c in difference_stencil(i)]
    Tt[m:] = build_analysis(m, N).matrix
    return _frozen(Tt)


def build_completed(m: int, N: int) -> np.ndarray:
    """Return the rank-completed ``N x N`` operator ``T~_m``.

    The first ``m`` rows hold the forward-difference stencils of orders
    ``0 .. m-1`` starting at column 0; the remaining rows are ``T_m``.
    """
    return _completed(m, N)


def _banded_product(Tt: np.ndarray, V: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``V @ Tt`` and ``Tt @ V`` exploiting that ``Tt`` is lower banded.

    ``Tt[r, c]`` is nonzero only for ``r - m <= c <= r``, so each product is
    a sum of ``m + 1`` shifted, scaled copies of ``V``.
    """
    N = Tt.shape[0]
    left = np.zeros_like(V)   # V @ Tt
    right = np.zeros_like(V)  # Tt @ V
    for d in range(m + 1):
        diag = np.array([Tt[c + d, c] for c in range(N - d)], dtype=V.dtype)
        left[:, : N - d] += V[:, d:] * diag[np.newaxis, :]
        right[d:, :] += diag[:, np.newaxis] * V[: N - d, :]
    return left, right


@lru_cache(maxsize=64)
def build_synthesis(m: int, N: int) -> SynthesisBundle:
    """Build ``T~_m`` and ``V_m = inv(T~_m)`` with an exact integer check.

    ``V_1`` is the lower-triangular matrix of ones (cumulative sum).  For
    ``q >= 2`` the first ``q - 1`` columns of ``V_q`` are copied from
    ``V_{q-1}`` and every later column is the running sum, down the rows,
    of the same column of ``V_{q-1}``.

    Raises
    ------
    DimensionError
        If ``m < 1`` or ``m >= N``.
    ConsistencyError
        If ``V_m @ T~_m`` or ``T~_m @ V_m`` is not exactly the identity.
    """
    _check_order(m, N)
    dtype = _int_dtype(m, N)
    V = np.tril(np.ones((N, N), dtype=dtype))
    for q in range(2, m + 1):
        nxt = V.copy()
        nxt[:, q - 1 :] = np.cumsum(V[:, q - 1 :], axis=0)
        V = nxt
    Tt = build_completed(m, N)
    left, right = _banded_product(Tt, V, m)
    eye = np.eye(N, dtype=dtype)
    if not (np.array_equal(left, eye) and np.array_equal(right, eye)):
        raise ConsistencyError(f"V_{m} is not the exact inverse of the completed operator (N={N})")
    return SynthesisBundle(order=m, size=N, completed=Tt, synthesis=_frozen(V))


def apply_analysis(op: AnalysisOperator, x) -> np.ndarray:
    """Compute ``T_m x`` from the stencil without a dense product."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != op.size:
        raise DimensionError(f"expected a vector of length {op.size}, got shape {x.shape}")
    n_out = op.size - op.order
    out = np.zeros(n_out, dtype=np.result_type(x.dtype, np.float64))
    for j, c in enumerate(op.stencil):
        out += c * x[j : j + n_out]
    return out
