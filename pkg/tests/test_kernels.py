import os
import subprocess
import sys

import numpy as np
import pytest

from plitransfer import kernels

BACKENDS = kernels.available_backends()
compiled_only = pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled extension not built")


def kernel_inputs(rng):
    n, d, h = 7, 4, 5
    x = rng.normal(size=(n, d))
    gamma, beta = rng.normal(size=(1, h)), rng.normal(size=(1, h))
    y = 1.0 / (1.0 + np.exp(-rng.normal(size=(n, h))))
    xh = rng.normal(size=(n, h))
    w2, g2 = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    pos = lambda: np.abs(rng.normal(size=(3, 2)))  # noqa: E731
    a1, a2, a3 = pos(), pos(), pos()
    return {
        "matmul": (x, rng.normal(size=(d, h))),
        "dense_forward": (x, rng.normal(size=(d, h)), rng.normal(size=(1, h))),
        "dense_backward": (x, rng.normal(size=(d, h)), rng.normal(size=(n, h))),
        "sigmoid_forward": (rng.normal(size=(n, h)) * 30,),
        "sigmoid_backward": (rng.normal(size=(n, h)), y),
        "batchnorm_forward_train": (xh, gamma, beta, np.zeros((1, h)), np.ones((1, h)), 1e-5, 0.1),
        "batchnorm_forward_eval": (xh, gamma, beta, rng.normal(size=(1, h)), np.ones((1, h)) * 2.0, 1e-5),
        "batchnorm_backward": (rng.normal(size=(n, h)), xh, np.ones((1, h)) * 1.5, gamma, 1e-5),
        "sgd_update": (w2, g2, 0.1),
        "momentum_update": (w2, g2, a1, 0.1, 0.9),
        "adam_update": (w2, g2, a1, a2, 0.01, 0.9, 0.999, 1e-8, 3),
        "adadelta_update": (w2, g2, a1, a2, 0.95, 1e-6),
        "rmsprop_update": (w2, g2, a3, 0.01, 0.9, 1e-8),
        "mae_and_grad": (rng.normal(size=(n, 1)), rng.normal(size=(n, 1))),
    }


def _copy(args):
    return tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)


def _flatten(out, args):
    out = out if isinstance(out, tuple) else (out,)
    # in-place kernels mutate their array arguments; compare those too
    return [np.asarray(o, dtype=float) for o in out] + [a for a in args if isinstance(a, np.ndarray)]


def test_every_kernel_is_exported():
    for name in kernels.KERNEL_NAMES:
        assert callable(getattr(kernels, name))
    assert kernels.BACKEND in ("compiled", "python")


@compiled_only
@pytest.mark.parametrize("name", kernels.KERNEL_NAMES)
def test_backends_agree(name):
    compiled = kernels.load_backend("compiled")
    python = kernels.load_backend("python")
    args = kernel_inputs(np.random.default_rng(7))[name]
    a_args, b_args = _copy(args), _copy(args)
    a = _flatten(getattr(compiled, name)(*a_args), a_args)
    b = _flatten(getattr(python, name)(*b_args), b_args)
    assert len(a) == len(b)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("backend", BACKENDS)
def test_sigmoid_saturation(backend):
    k = kernels.load_backend(backend)
    y = k.sigmoid_forward(np.array([[0.0, 40.0, -40.0, -800.0]]))
    assert y[0, 0] == 0.5
    assert abs(y[0, 1] - 1.0) < 1e-15
    assert 4.0e-18 < y[0, 2] < 4.5e-18
    assert y[0, 3] >= 0.0 and np.isfinite(y[0, 3])


@pytest.mark.parametrize("backend", BACKENDS)
def test_update_rejects_non_finite_gradient(backend):
    k = kernels.load_backend(backend)
    w = np.ones((1, 2))
    assert not k.sgd_update(w, np.array([[np.nan, 1.0]]), 0.1)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.load_backend("gpu")


def test_env_var_forces_fallback():
    code = "from plitransfer import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, PLITRANSFER_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
