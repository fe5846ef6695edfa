"""Test signals, forward models, calibrated noise and error metrics."""

from __future__ import annotations

import numpy as np

from ..exceptions import DimensionError
from ..operators import build_completed, build_synthesis

__all__ = [
    "snr_db",
    "rel_err",
    "max_err",
    "add_noise_at_snr",
    "make_piecewise_poly",
    "make_ideal_signal",
    "IDEAL_KINDS",
    "piecewise_smooth",
    "SMOOTH_FUNCTIONS",
    "gaussian_forward",
    "dft_forward",
    "sparsity_count",
]

#: Signal kind -> matching HOTV order for the denoising experiment.
IDEAL_KINDS = {"constant": 1, "linear": 2, "quadratic": 3}


def _energy(v) -> float:
    v = np.asarray(v)
    return float(np.sum(np.abs(v) ** 2))


def snr_db(signal, noise) -> float:
    """``20 log10 sqrt(sum |signal|^2 / sum |noise|^2)``."""
    en = _energy(noise)
    if en == 0.0:
        raise ValueError("noise is identically zero (infinite SNR)")
    return float(10.0 * np.log10(_energy(signal) / en))


def _check_pair(x_est, x_true):
    x_est = np.asarray(x_est)
    x_true = np.asarray(x_true)
    if x_est.shape != x_true.shape:
        raise DimensionError(f"shape mismatch {x_est.shape} vs {x_true.shape}")
    return x_est, x_true


def rel_err(x_est, x_true) -> float:
    x_est, x_true = _check_pair(x_est, x_true)
    nt = np.linalg.norm(x_true)
    if nt == 0.0:
        raise ValueError("relative error undefined for a zero reference")
    return float(np.linalg.norm(x_est - x_true) / nt)


def max_err(x_est, x_true) -> float:
    x_est, x_true = _check_pair(x_est, x_true)
    return float(np.max(np.abs(x_est - x_true)))


def add_noise_at_snr(clean, snr: float, rng: np.random.Generator):
    """Add white Gaussian noise scaled so the realized SNR is exactly ``snr`` dB.

    Complex input gets independent real and imaginary draws.  Returns
    ``(noisy, noise)``.
    """
    clean = np.asarray(clean)
    ec = _energy(clean)
    if ec == 0.0:
        raise ValueError("cannot calibrate noise against a zero signal")
    if np.iscomplexobj(clean):
        noise = rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
    else:
        noise = rng.standard_normal(clean.shape)
    noise = noise * (np.sqrt(ec / _energy(noise)) * 10.0 ** (-snr / 20.0))
    return clean + noise, noise


def make_piecewise_poly(N: int, m: int, k: int, rng: np.random.Generator,
                        jumps_only: bool = False):
    """Sparse ``t`` with ``k`` standard-normal spikes and ``x = V_m t``.

    Support indices are drawn uniformly without replacement from all ``N``
    coordinates, or only from the ``N - m`` jump coordinates when
    ``jumps_only`` is set.  Returns ``(x, t)``.
    """
    pool = N - m if jumps_only else N
    if not 1 <= k <= pool:
        raise ValueError(f"k must lie in [1, {pool}], got {k}")
    t = np.zeros(N)
    idx = rng.choice(pool, size=k, replace=False) + (m if jumps_only else 0)
    t[idx] = rng.standard_normal(k)
    V = build_synthesis(m, N).synthesis.astype(float)
    return V @ t, t


def make_ideal_signal(kind: str, N: int) -> np.ndarray:
    """Piecewise polynomial with one unit jump at index ``N // 2``.

    On the grid ``s_i = i / (N - 1)`` the signal is ``p(s) + [i >= N // 2]``
    with ``p = 0``, ``s`` or ``s**2`` for ``kind`` ``"constant"``,
    ``"linear"`` or ``"quadratic"``.
    """
    if kind not in IDEAL_KINDS:
        raise ValueError(f"unknown signal kind {kind!r}; choose from {sorted(IDEAL_KINDS)}")
    if N < 8:
        raise ValueError("ideal signals need N >= 8")
    s = np.arange(N) / (N - 1)
    degree = IDEAL_KINDS[kind] - 1
    x = s**degree if degree else np.zeros(N)
    x[N // 2 :] += 1.0
    return x


def _four_piece(s):
    # s in [-pi, pi)
    y = np.zeros_like(s)
    c1 = (s >= -3 * np.pi / 4) & (s < -np.pi / 2)
    c2 = (s >= -np.pi / 4) & (s < np.pi / 8)
    c3 = (s >= 3 * np.pi / 8) & (s < 3 * np.pi / 4)
    y[c1] = 1.5
    y[c2] = 7 / 4 - s[c2] / 2 + np.sin(s[c2] - 1 / 4)
    y[c3] = 11 * s[c3] / 4 - 5
    return y


def _two_piece(s):
    # cubic-ish polynomial on the left, damped cosine on the right
    return np.where(s < 0, 0.5 + 0.25 * s + 0.05 * s**3, 1.5 * np.cos(2 * s) * np.exp(-0.3 * s))


#: Built-in piecewise smooth functions on ``[-pi, pi)``.
SMOOTH_FUNCTIONS = {"four_piece": _four_piece, "two_piece": _two_piece}


def piecewise_smooth(N: int, name: str = "four_piece") -> np.ndarray:
    """Sample a built-in piecewise smooth function on a midpoint grid of ``[-pi, pi)``.

    ``"four_piece"``::

        3/2                        on [-3pi/4, -pi/2)
        7/4 - s/2 + sin(s - 1/4)   on [-pi/4, pi/8)
        11 s / 4 - 5               on [3pi/8, 3pi/4)
        0                          elsewhere

    ``"two_piece"``: ``0.5 + 0.25 s + 0.05 s^3`` for ``s < 0`` and
    ``1.5 cos(2 s) exp(-0.3 s)`` for ``s >= 0``.

    Neither is annihilated exactly by ``T_m`` for ``m <= 3``.
    """
    if name not in SMOOTH_FUNCTIONS:
        raise ValueError(f"unknown function {name!r}; choose from {sorted(SMOOTH_FUNCTIONS)}")
    s = -np.pi + 2 * np.pi * (np.arange(N) + 0.5) / N
    return SMOOTH_FUNCTIONS[name](s)


def gaussian_forward(J: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """``J x N`` matrix with i.i.d. standard normal entries."""
    if J < 1 or N < 1:
        raise DimensionError("J and N must be positive")
    return rng.standard_normal((J, N))


def dft_forward(N: int) -> np.ndarray:
    """Unitary DFT with centered frequencies ``k = -(N//2) .. N - N//2 - 1``.

    ``F[r, j] = exp(-2 pi i k_r j / N) / sqrt(N)``.
    """
    if N < 1:
        raise DimensionError("N must be positive")
    k = np.arange(-(N // 2), N - N // 2)
    j = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(k, j) / N) / np.sqrt(N)


def sparsity_count(x, m: int, threshold: float = 1e-8) -> int:
    """Number of entries of ``T~_m x`` with magnitude above ``threshold``."""
    x = np.asarray(x, dtype=float)
    t = build_completed(m, x.shape[0]).astype(float) @ x
    return int(np.sum(np.abs(t) > threshold))
