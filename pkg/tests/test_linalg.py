import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from plitransfer import linalg
from plitransfer.errors import NumericError, ShapeError


def triple_loop(a, b):
    n, m = a.shape
    p = b.shape[1]
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            s = 0.0
            for k in range(m):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def test_matmul_matches_triple_loop(rng):
    for _ in range(20):
        n, m, p = rng.integers(1, 7, size=3)
        a, b = rng.normal(size=(n, m)), rng.normal(size=(m, p))
        np.testing.assert_allclose(linalg.matmul(a, b), triple_loop(a, b), rtol=1e-12, atol=1e-12)


def test_matmul_hand_example():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(linalg.matmul(a, b), [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_as_matrix_promotes_and_copies():
    v = [1.0, 2.0, 3.0]
    m = linalg.as_matrix(v)
    assert m.shape == (1, 3)
    src = np.ones((2, 2))
    out = linalg.as_matrix(src)
    out[0, 0] = 5.0
    assert src[0, 0] == 1.0


def test_as_matrix_rejects_nan():
    with pytest.raises(NumericError):
        linalg.as_matrix([[1.0, np.nan]])


def test_elementwise_and_scale():
    a = np.array([[1.0, 2.0]])
    b = np.array([[3.0, 5.0]])
    np.testing.assert_array_equal(linalg.elementwise(a, b, "add"), [[4.0, 7.0]])
    np.testing.assert_array_equal(linalg.elementwise(a, b, "sub"), [[-2.0, -3.0]])
    np.testing.assert_array_equal(linalg.elementwise(a, b, "mul"), [[3.0, 10.0]])
    np.testing.assert_array_equal(linalg.scale(a, -2.0), [[-2.0, -4.0]])
    with pytest.raises(ShapeError):
        linalg.elementwise(a, np.ones((2, 2)), "add")


def test_transpose_and_constructors():
    a = np.arange(6.0).reshape(2, 3)
    assert linalg.transpose(a).shape == (3, 2)
    assert linalg.zeros(2, 3).sum() == 0.0
    assert linalg.ones(2, 3).sum() == 6.0


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (4, 2), elements=finite))
def test_matmul_transpose_identity(a, b):
    # (AB)^T == B^T A^T
    lhs = linalg.transpose(linalg.matmul(a, b))
    rhs = linalg.matmul(linalg.transpose(b), linalg.transpose(a))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-6)
