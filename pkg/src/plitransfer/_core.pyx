# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the dense / batch-norm / sigmoid layers and the optimizers.

Every function here has a numpy twin in ``_fallback`` with the same signature.
Arrays are float64 and C-contiguous; callers in ``kernels`` guarantee that.
Loops run in a fixed order so results are bitwise reproducible.
The ``*_update`` kernels return False, leaving every array untouched, when the
gradient holds a NaN or infinity.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs

cnp.import_array()


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], p = b.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double aik
    out = np.zeros((n, p), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for k in range(m):
            aik = a[i, k]
            for j in range(p):
                o[i, j] += aik * b[k, j]
    return out


def dense_forward(const double[:, ::1] x, const double[:, ::1] w, const double[:, ::1] b):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], p = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double xik
    out = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(p):
            o[i, j] = 0.0
        for k in range(m):
            xik = x[i, k]
            for j in range(p):
                o[i, j] += xik * w[k, j]
        for j in range(p):
            o[i, j] += b[0, j]
    return out


def dense_backward(const double[:, ::1] x, const double[:, ::1] w, const double[:, ::1] gout):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], p = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double xik, acc
    gw_arr = np.zeros((m, p), dtype=np.float64)
    gb_arr = np.zeros((1, p), dtype=np.float64)
    gin_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] gw = gw_arr
    cdef double[:, ::1] gb = gb_arr
    cdef double[:, ::1] gin = gin_arr
    for i in range(n):
        for k in range(m):
            xik = x[i, k]
            acc = 0.0
            for j in range(p):
                gw[k, j] += xik * gout[i, j]
                acc += gout[i, j] * w[k, j]
            gin[i, k] = acc
        for j in range(p):
            gb[0, j] += gout[i, j]
    return gw_arr, gb_arr, gin_arr


cdef inline double _sigmoid(double v) nogil:
    cdef double e
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    e = exp(v)
    return e / (1.0 + e)


def sigmoid_forward(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(m):
            o[i, j] = _sigmoid(x[i, j])
    return out


def sigmoid_backward(const double[:, ::1] gout, const double[:, ::1] y):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(m):
            o[i, j] = gout[i, j] * y[i, j] * (1.0 - y[i, j])
    return out


def batchnorm_forward_train(const double[:, ::1] x, const double[:, ::1] gamma,
                            const double[:, ::1] beta, double[:, ::1] running_mean,
                            double[:, ::1] running_var, double eps, double momentum):
    """Returns (y, x_hat, batch_var); updates the running statistics in place."""
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef double mu, var, d, inv
    y_arr = np.empty((n, m), dtype=np.float64)
    xhat_arr = np.empty((n, m), dtype=np.float64)
    var_arr = np.empty((1, m), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[:, ::1] bvar = var_arr
    for j in range(m):
        mu = 0.0
        for i in range(n):
            mu += x[i, j]
        mu = mu / n
        var = 0.0
        for i in range(n):
            d = x[i, j] - mu
            var += d * d
        var = var / n
        bvar[0, j] = var
        inv = 1.0 / sqrt(var + eps)
        for i in range(n):
            xhat[i, j] = (x[i, j] - mu) * inv
            y[i, j] = gamma[0, j] * xhat[i, j] + beta[0, j]
        running_mean[0, j] = (1.0 - momentum) * running_mean[0, j] + momentum * mu
        running_var[0, j] = (1.0 - momentum) * running_var[0, j] + momentum * var
    return y_arr, xhat_arr, var_arr


def batchnorm_forward_eval(const double[:, ::1] x, const double[:, ::1] gamma,
                           const double[:, ::1] beta, const double[:, ::1] running_mean,
                           const double[:, ::1] running_var, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef double inv
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for j in range(m):
        inv = 1.0 / sqrt(running_var[0, j] + eps)
        for i in range(n):
            o[i, j] = gamma[0, j] * ((x[i, j] - running_mean[0, j]) * inv) + beta[0, j]
    return out


def batchnorm_backward(const double[:, ::1] gout, const double[:, ::1] xhat,
                       const double[:, ::1] batch_var, const double[:, ::1] gamma, double eps):
    cdef Py_ssize_t n = gout.shape[0], m = gout.shape[1], i, j
    cdef double sg, sgx, inv, scale
    gg_arr = np.empty((1, m), dtype=np.float64)
    gbeta_arr = np.empty((1, m), dtype=np.float64)
    gin_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] gg = gg_arr
    cdef double[:, ::1] gbeta = gbeta_arr
    cdef double[:, ::1] gin = gin_arr
    for j in range(m):
        sg = 0.0
        sgx = 0.0
        for i in range(n):
            sg += gout[i, j]
            sgx += gout[i, j] * xhat[i, j]
        gbeta[0, j] = sg
        gg[0, j] = sgx
        inv = 1.0 / sqrt(batch_var[0, j] + eps)
        scale = gamma[0, j] * inv / n
        for i in range(n):
            gin[i, j] = scale * (n * gout[i, j] - sg - xhat[i, j] * sgx)
    return gg_arr, gbeta_arr, gin_arr


cdef bint _all_finite(const double[:, ::1] g):
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            v = g[i, j]
            if v != v or v - v != 0.0:
                return False
    return True


def sgd_update(double[:, ::1] w, const double[:, ::1] g, double lr):
    cdef Py_ssize_t i, j
    if not _all_finite(g):
        return False
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            w[i, j] = w[i, j] - lr * g[i, j]
    return True


def momentum_update(double[:, ::1] w, const double[:, ::1] g, double[:, ::1] v,
                    double lr, double mu):
    cdef Py_ssize_t i, j
    if not _all_finite(g):
        return False
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            v[i, j] = mu * v[i, j] + g[i, j]
            w[i, j] = w[i, j] - lr * v[i, j]
    return True


def adam_update(double[:, ::1] w, const double[:, ::1] g, double[:, ::1] m,
                double[:, ::1] v, double lr, double beta1, double beta2, double eps, long t):
    cdef Py_ssize_t i, j
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double mhat, vhat
    if not _all_finite(g):
        return False
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            m[i, j] = beta1 * m[i, j] + (1.0 - beta1) * g[i, j]
            v[i, j] = beta2 * v[i, j] + (1.0 - beta2) * (g[i, j] * g[i, j])
            mhat = m[i, j] / c1
            vhat = v[i, j] / c2
            w[i, j] = w[i, j] - lr * mhat / (sqrt(vhat) + eps)
    return True


def adadelta_update(double[:, ::1] w, const double[:, ::1] g, double[:, ::1] eg2,
                    double[:, ::1] edx2, double rho, double eps):
    cdef Py_ssize_t i, j
    cdef double dx
    if not _all_finite(g):
        return False
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            eg2[i, j] = rho * eg2[i, j] + (1.0 - rho) * (g[i, j] * g[i, j])
            dx = -(sqrt(edx2[i, j] + eps) / sqrt(eg2[i, j] + eps)) * g[i, j]
            edx2[i, j] = rho * edx2[i, j] + (1.0 - rho) * (dx * dx)
            w[i, j] = w[i, j] + dx
    return True


def rmsprop_update(double[:, ::1] w, const double[:, ::1] g, double[:, ::1] eg2,
                   double lr, double decay, double eps):
    cdef Py_ssize_t i, j
    if not _all_finite(g):
        return False
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            eg2[i, j] = decay * eg2[i, j] + (1.0 - decay) * (g[i, j] * g[i, j])
            w[i, j] = w[i, j] - lr * g[i, j] / sqrt(eg2[i, j] + eps)
    return True


def mae_and_grad(const double[:, ::1] pred, const double[:, ::1] actual):
    """MAE of two (n, 1) columns and its subgradient, sign(0) = 0."""
    cdef Py_ssize_t n = pred.shape[0], i
    cdef double d, total = 0.0
    grad = np.empty((n, 1), dtype=np.float64)
    cdef double[:, ::1] gr = grad
    for i in range(n):
        d = pred[i, 0] - actual[i, 0]
        total += fabs(d)
        if d > 0.0:
            gr[i, 0] = 1.0 / n
        elif d < 0.0:
            gr[i, 0] = -1.0 / n
        else:
            gr[i, 0] = 0.0
    return total / n, grad
