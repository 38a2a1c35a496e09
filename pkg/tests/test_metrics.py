import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import numeric_grad
from plitransfer.errors import DataError
from plitransfer.metrics import (
    MetricPair,
    evaluate,
    format_mape_percent,
    mae,
    mae_loss_grad,
    mape,
    mse,
    mse_loss_grad,
)


def naive_mae(p, a):
    total = 0.0
    for x, y in zip(p, a):
        total += abs(x - y)
    return total / len(p)


def naive_mape(p, a):
    total = 0.0
    for x, y in zip(p, a):
        total += abs(x - y) / abs(y)
    return total / len(p)


def test_hand_examples():
    assert mae([1, 2, 3], [2, 2, 5]) == 1.0
    assert mape([2, 4], [1, 5]) == pytest.approx(0.6, abs=1e-15)
    assert mae([1.5, 2], [1.5, 2]) == 0.0
    assert mape([1.5, 2], [1.5, 2]) == 0.0


def test_naive_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 20))
        p = rng.normal(size=n) * 10
        a = rng.normal(size=n) * 10
        assert abs(mae(p, a) - naive_mae(p, a)) <= 1e-12
        assert abs(mape(p, a) - naive_mape(p, a)) <= 1e-12 * max(1.0, naive_mape(p, a))


def test_errors():
    with pytest.raises(DataError):
        mae([1, 2], [1])
    with pytest.raises(DataError):
        mae([], [])
    with pytest.raises(DataError):
        mape([1, 2], [1, 0])


def test_mae_grad():
    np.testing.assert_array_equal(mae_loss_grad([1, 2], [1, 2]), [0.0, 0.0])
    np.testing.assert_array_equal(mae_loss_grad([3], [1]), [1.0])
    rng = np.random.default_rng(1)
    p, a = rng.normal(size=6), rng.normal(size=6)
    fd = numeric_grad(lambda: mae(p, a), p, h=1e-7)
    np.testing.assert_allclose(mae_loss_grad(p, a), fd, rtol=1e-6)


def test_mse_grad():
    rng = np.random.default_rng(2)
    p, a = rng.normal(size=5), rng.normal(size=5)
    fd = numeric_grad(lambda: mse(p, a), p)
    np.testing.assert_allclose(mse_loss_grad(p, a), fd, rtol=1e-6)


def test_mape_is_asymmetric():
    assert mape([2.0], [1.0]) != mape([1.0], [2.0])


vec = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=10)


@settings(max_examples=60, deadline=None)
@given(vec, st.floats(-100, 100, allow_nan=False), st.integers(0, 2**16))
def test_mae_properties(p, c, seed):
    p = np.array(p)
    a = p + np.random.default_rng(seed).normal(size=p.size)
    assert mae(p, a) == mae(a, p)
    assert mae(p, a) >= 0
    assert mae(p + c, a + c) == pytest.approx(mae(p, a), abs=1e-9)
    assert mae(p, p) == 0.0


def test_metric_pair():
    assert MetricPair(1.0, 1.01).inferior
    assert not MetricPair(1.0, 1.0).inferior
    assert evaluate([1, 2], [1, 4]).to_dict() == {"mae": 1.0, "mape": 0.25}
    assert format_mape_percent(0.1828) == "18.28%"
