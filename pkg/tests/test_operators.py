import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hotvbl.exceptions import DimensionError
from hotvbl.operators import (
    apply_analysis,
    build_analysis,
    build_completed,
    build_synthesis,
    difference_stencil,
)

# N = 6 displays, transcribed by hand
T6 = {
    1: [[-1, 1, 0, 0, 0, 0], [0, -1, 1, 0, 0, 0], [0, 0, -1, 1, 0, 0],
        [0, 0, 0, -1, 1, 0], [0, 0, 0, 0, -1, 1]],
    2: [[1, -2, 1, 0, 0, 0], [0, 1, -2, 1, 0, 0], [0, 0, 1, -2, 1, 0], [0, 0, 0, 1, -2, 1]],
    3: [[-1, 3, -3, 1, 0, 0], [0, -1, 3, -3, 1, 0], [0, 0, -1, 3, -3, 1]],
}
TT6 = {
    1: [[1, 0, 0, 0, 0, 0]] + T6[1],
    2: [[1, 0, 0, 0, 0, 0], [-1, 1, 0, 0, 0, 0]] + T6[2],
    3: [[1, 0, 0, 0, 0, 0], [-1, 1, 0, 0, 0, 0], [1, -2, 1, 0, 0, 0]] + T6[3],
}
V6 = {
    1: [[1, 0, 0, 0, 0, 0], [1, 1, 0, 0, 0, 0], [1, 1, 1, 0, 0, 0],
        [1, 1, 1, 1, 0, 0], [1, 1, 1, 1, 1, 0], [1, 1, 1, 1, 1, 1]],
    2: [[1, 0, 0, 0, 0, 0], [1, 1, 0, 0, 0, 0], [1, 2, 1, 0, 0, 0],
        [1, 3, 2, 1, 0, 0], [1, 4, 3, 2, 1, 0], [1, 5, 4, 3, 2, 1]],
    3: [[1, 0, 0, 0, 0, 0], [1, 1, 0, 0, 0, 0], [1, 2, 1, 0, 0, 0],
        [1, 3, 3, 1, 0, 0], [1, 4, 6, 3, 1, 0], [1, 5, 10, 6, 3, 1]],
}


@pytest.mark.parametrize("m", [1, 2, 3])
def test_displayed_matrices_n6(m):
    assert build_analysis(m, 6).matrix.tolist() == T6[m]
    assert build_completed(m, 6).tolist() == TT6[m]
    assert build_synthesis(m, 6).synthesis.tolist() == V6[m]


def test_stencils():
    assert difference_stencil(0).tolist() == [1]
    assert difference_stencil(1).tolist() == [-1, 1]
    assert difference_stencil(2).tolist() == [1, -2, 1]
    assert difference_stencil(4).tolist() == [1, -4, 6, -4, 1]
    with pytest.raises(DimensionError):
        difference_stencil(-1)


@given(m=st.integers(1, 5), N=st.integers(6, 60))
@settings(max_examples=60, deadline=None)
def test_analysis_matches_numpy_diff(m, N):
    # np.diff applied to the identity rows is an independent construction
    ref = np.diff(np.eye(N, dtype=np.int64), n=m, axis=1).T
    assert np.array_equal(build_analysis(m, N).matrix, ref)


@given(m=st.integers(1, 4), N=st.integers(6, 40))
@settings(max_examples=60, deadline=None)
def test_synthesis_matches_float_inverse(m, N):
    b = build_synthesis(m, N)
    inv = np.linalg.inv(b.completed.astype(float))
    np.testing.assert_allclose(b.synthesis.astype(float), inv, rtol=0, atol=1e-6 * np.abs(inv).max())


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("N", [6, 7, 31, 128, 256])
def test_exact_inverse_in_integers(m, N):
    b = build_synthesis(m, N)
    eye = np.eye(N, dtype=np.int64)
    assert np.array_equal(b.synthesis @ b.completed, eye)
    assert np.array_equal(b.completed @ b.synthesis, eye)
    assert np.array_equal(np.tril(b.synthesis), b.synthesis)


def test_completion_rows_annihilate_low_degree_polynomials():
    # the top rows of T~ sit in the null space of T: polynomials of degree
    # < m are mapped to zero by T_m
    N = 20
    s = np.arange(N, dtype=float)
    for m in (1, 2, 3, 4):
        T = build_analysis(m, N).matrix.astype(float)
        for d in range(m):
            np.testing.assert_allclose(T @ s**d, 0.0, atol=1e-8)


def test_synthesis_columns_are_piecewise_polynomials():
    # column j >= m of V_m is a degree m-1 polynomial switched on at row j
    N, m = 12, 3
    V = build_synthesis(m, N).synthesis.astype(float)
    T = build_analysis(m, N).matrix.astype(float)
    for j in range(m, N):
        s = T @ V[:, j]
        assert np.flatnonzero(s).tolist() == [j - m]


@given(m=st.integers(1, 4), N=st.integers(6, 50), seed=st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_apply_analysis_matches_dense(m, N, seed):
    op = build_analysis(m, N)
    x = np.random.default_rng(seed).standard_normal(N)
    np.testing.assert_allclose(apply_analysis(op, x), op.matrix.astype(float) @ x, atol=1e-10)


def test_apply_analysis_complex_and_shape_check():
    op = build_analysis(2, 8)
    x = np.arange(8) + 1j * np.arange(8) ** 2
    np.testing.assert_allclose(apply_analysis(op, x), op.matrix @ x)
    with pytest.raises(DimensionError):
        apply_analysis(op, np.ones(7))


@pytest.mark.parametrize("m,N", [(6, 6), (7, 6), (0, 6), (-1, 4)])
def test_bad_order_rejected(m, N):
    with pytest.raises(DimensionError, match="order"):
        build_synthesis(m, N)
    with pytest.raises(DimensionError):
        build_analysis(m, N)


def test_non_integer_rejected():
    with pytest.raises(DimensionError):
        build_analysis(1.5, 6)


def test_matrices_are_read_only():
    b = build_synthesis(2, 10)
    with pytest.raises(ValueError):
        b.synthesis[0, 0] = 5
    with pytest.raises(ValueError):
        build_analysis(2, 10).matrix[0, 0] = 5


def test_large_order_switches_to_exact_objects():
    # comb(N-1, m-1) * N * 2**m overflows int64 here
    b = build_synthesis(12, 400)
    assert b.synthesis.dtype == object
    # V_m[i, j] = comb(i - j + m - 1, m - 1) for j >= m - 1
    assert b.synthesis[-1, 11] == math.comb(399, 11)
    assert b.synthesis[-1, 11] > 2**63
