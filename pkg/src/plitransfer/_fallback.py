"""Pure numpy versions of the kernels in ``_core``.

Used when the compiled extension is not built, or when
``PLITRANSFER_PURE_PYTHON=1`` is set. Signatures and in-place semantics
match the compiled module exactly.
"""

import numpy as np


def matmul(a, b):
    return a @ b


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(x, w, gout):
    gw = x.T @ gout
    gb = gout.sum(axis=0, keepdims=True)
    gin = gout @ w.T
    return gw, gb, gin


def sigmoid_forward(x):
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_backward(gout, y):
    return gout * y * (1.0 - y)


def batchnorm_forward_train(x, gamma, beta, running_mean, running_var, eps, momentum):
    mu = x.mean(axis=0, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=0, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + eps)
    y = gamma * xhat + beta
    running_mean[...] = (1.0 - momentum) * running_mean + momentum * mu
    running_var[...] = (1.0 - momentum) * running_var + momentum * var
    return y, xhat, var


def batchnorm_forward_eval(x, gamma, beta, running_mean, running_var, eps):
    return gamma * ((x - running_mean) / np.sqrt(running_var + eps)) + beta


def batchnorm_backward(gout, xhat, batch_var, gamma, eps):
    n = gout.shape[0]
    sg = gout.sum(axis=0, keepdims=True)
    sgx = (gout * xhat).sum(axis=0, keepdims=True)
    scale = gamma / np.sqrt(batch_var + eps) / n
    gin = scale * (n * gout - sg - xhat * sgx)
    return sgx, sg, gin


def sgd_update(w, g, lr):
    if not np.isfinite(g).all():
        return False
    w -= lr * g
    return True


def momentum_update(w, g, v, lr, mu):
    if not np.isfinite(g).all():
        return False
    v *= mu
    v += g
    w -= lr * v
    return True


def adam_update(w, g, m, v, lr, beta1, beta2, eps, t):
    if not np.isfinite(g).all():
        return False
    m[...] = beta1 * m + (1.0 - beta1) * g
    v[...] = beta2 * v + (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    w -= lr * mhat / (np.sqrt(vhat) + eps)
    return True


def adadelta_update(w, g, eg2, edx2, rho, eps):
    if not np.isfinite(g).all():
        return False
    eg2[...] = rho * eg2 + (1.0 - rho) * (g * g)
    dx = -(np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps)) * g
    edx2[...] = rho * edx2 + (1.0 - rho) * (dx * dx)
    w += dx
    return True


def rmsprop_update(w, g, eg2, lr, decay, eps):
    if not np.isfinite(g).all():
        return False
    eg2[...] = decay * eg2 + (1.0 - decay) * (g * g)
    w -= lr * g / np.sqrt(eg2 + eps)
    return True


def mae_and_grad(pred, actual):
    diff = pred - actual
    n = diff.shape[0]
    return float(np.abs(diff).sum() / n), np.sign(diff) / n
