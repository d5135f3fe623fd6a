import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rcpmod.errors import ContractError
from rcpmod.numeric import (logsumexp, make_rng, matmul, normalize_rows, normalize_rows_backward,
                            pairwise_cosine, row_cosine)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)
    assert np.array_equal(matmul(a, [[0.0], [1.0]]), [[2.0], [4.0]])
    assert np.array_equal(matmul(a, np.zeros((2, 3))), np.zeros((2, 3)))


def test_matmul_shape_mismatch():
    with pytest.raises(ContractError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@given(arrays(np.float64, (3, 5, 5), elements=st.floats(-10, 10)))
def test_matmul_associative(m):
    a, b, c = m
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    scale = max(np.abs(a).max() * np.abs(b).max() * np.abs(c).max() * 25, 1e-300)
    assert np.max(np.abs(left - right)) <= 1e-9 * scale


def test_row_cosine_examples():
    assert row_cosine([1, 0], [1, 0]) == 1.0
    assert row_cosine([1, 0], [0, 1]) == 0.0
    assert row_cosine([1, 2], [2, 4]) == pytest.approx(1.0, abs=1e-15)


def test_pairwise_cosine_examples():
    u = normalize_rows(make_rng(1).standard_normal((4, 3)))[0]
    assert np.allclose(np.diag(pairwise_cosine(u, u)), 1.0)
    assert np.array_equal(pairwise_cosine([[1, 0]], [[0, 1], [1, 0]]), [[0.0, 1.0]])


def test_pairwise_cosine_matches_loop():
    rng = make_rng(2)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((2, 4))
    loop = np.array([[row_cosine(x, y) for y in b] for x in a])
    assert np.allclose(pairwise_cosine(a, b), loop, rtol=0, atol=1e-14)


@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (2, 3), elements=finite))
def test_pairwise_cosine_bounded(a, b):
    c = pairwise_cosine(a, b)
    assert np.all(c >= -1 - 1e-9) and np.all(c <= 1 + 1e-9)


def test_logsumexp_examples():
    assert logsumexp([0.0]) == 0.0
    assert logsumexp([3.0, 3.0]) == pytest.approx(3.0 + math.log(2.0), rel=1e-15)
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2.0), rel=1e-15)
    with pytest.raises(ContractError):
        logsumexp([])


@given(st.lists(finite, min_size=1, max_size=30))
def test_logsumexp_bounds(v):
    r = logsumexp(v)
    assert r >= max(v) - 1e-12
    assert r <= max(v) + math.log(len(v)) + 1e-9


def test_normalize_backward_matches_finite_differences():
    rng = make_rng(3)
    a = rng.standard_normal((3, 4))
    w = rng.standard_normal((3, 4))
    u, nrm = normalize_rows(a)
    analytic = normalize_rows_backward(w, u, nrm)
    h = 1e-6
    fd = np.zeros_like(a)
    for i in range(3):
        for j in range(4):
            p, m = a.copy(), a.copy()
            p[i, j] += h
            m[i, j] -= h
            fd[i, j] = (np.sum(w * normalize_rows(p)[0]) - np.sum(w * normalize_rows(m)[0])) / (2 * h)
    assert np.allclose(analytic, fd, atol=1e-8)


def test_zero_row_is_clamped_not_nan():
    u, nrm = normalize_rows(np.zeros((2, 3)))
    assert np.all(u == 0) and np.all(np.isfinite(nrm))


def test_rng_streams():
    assert make_rng(5, 1).random() == make_rng(5, 1).random()
    assert make_rng(5, 1).random() != make_rng(5, 2).random()
    assert make_rng(5).random() != make_rng(6).random()
