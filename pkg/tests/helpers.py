"""Shared test utilities: finite-difference gradient checks and the acceptance log."""

import numpy as np

from plitransfer.nn import BatchNorm, Dense, Sigmoid, build_source_network
from plitransfer.optim import InitMethod

# Filled by the acceptance suite and echoed by the terminal-summary hook in conftest.
ACCEPTANCE_LINES = []


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f()`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b, floor=1e-6):
    """``|a - b| / max(|a|, |b|)`` in the 2-norm. The floor keeps an exactly-zero gradient
    from turning central-difference round-off (about 1e-11 at h=1e-5) into a large ratio."""
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def loss_and_grad(out, target, kind):
    d = out - target
    if kind == "mae":
        return float(np.abs(d).mean()), np.sign(d) / d.size
    return float((d * d).mean()), 2.0 * d / d.size


def layer_grad_errors(layer, x, kind, rng):
    """Relative error of every analytic gradient of ``layer`` (parameters and input)."""
    target = rng.normal(size=(x.shape[0], layer.out_dim))

    def f():
        return loss_and_grad(layer.forward(x, "train"), target, kind)[0]

    out = layer.forward(x, "train")
    _, g = loss_and_grad(out, target, kind)
    grad_in = layer.backward(g)
    errors = {}
    for name, p, grad in layer.parameters():
        errors[name] = rel_error(grad, numeric_grad(f, p))
    errors["input"] = rel_error(grad_in, numeric_grad(f, x))
    return errors


def network_grad_errors(net, x, kind, rng):
    target = rng.normal(size=(x.shape[0], 1))

    def f():
        return loss_and_grad(net.forward(x, "train"), target, kind)[0]

    out = net.forward(x, "train")
    _, g = loss_and_grad(out, target, kind)
    net.backward(g)
    return {name: rel_error(grad, numeric_grad(f, p)) for name, p, grad, _ in net.named_parameters()}


def random_layer(kind, rng):
    if kind == "dense":
        i, o = rng.integers(1, 6, size=2)
        return Dense(i, o, rng.normal(size=(i, o)), rng.normal(size=(1, o))), int(i)
    if kind == "batchnorm":
        d = int(rng.integers(1, 6))
        bn = BatchNorm(d)
        bn.gamma = rng.normal(size=(1, d))
        bn.beta = rng.normal(size=(1, d))
        return bn, d
    d = int(rng.integers(1, 6))
    return Sigmoid(d), d


def random_network(rng):
    """A small source network (input <= 6, hidden <= [5, 5]) with perturbed batch-norm affines."""
    d = int(rng.integers(1, 7))
    hidden = [int(h) for h in rng.integers(1, 6, size=int(rng.integers(1, 3)))]
    net = build_source_network(d, hidden, InitMethod(str(rng.choice(["xavier", "he", "random"])), int(rng.integers(1 << 30))))
    for layer in net.layers:
        if isinstance(layer, BatchNorm):
            layer.gamma = 1.0 + 0.3 * rng.normal(size=layer.gamma.shape)
            layer.beta = 0.3 * rng.normal(size=layer.beta.shape)
        if isinstance(layer, Dense):
            layer.bias = 0.3 * rng.normal(size=layer.bias.shape)
    return net, d


def gradient_suite(instances=20, seed=0):
    """Worst relative error per (component, loss) over ``instances`` random cases each."""
    rng = np.random.default_rng(seed)
    worst = {}
    for kind in ("mae", "mse"):
        for comp in ("dense", "batchnorm", "sigmoid", "network"):
            w = 0.0
            for _ in range(instances):
                batch = int(rng.integers(2, 9))
                if comp == "network":
                    net, d = random_network(rng)
                    errs = network_grad_errors(net, rng.normal(size=(batch, d)), kind, rng)
                else:
                    layer, d = random_layer(comp, rng)
                    errs = layer_grad_errors(layer, rng.normal(size=(batch, d)), kind, rng)
                w = max(w, max(errs.values()))
            worst[(comp, kind)] = w
    return worst


def scalar_reference(kind, w, grads, lr=0.01, mu=0.9, b1=0.9, b2=0.999, eps_adam=1e-8,
                     rho=0.95, eps_ada=1e-6, decay=0.9, eps_rms=1e-8):
    """Hand-rolled scalar trajectory of one optimizer, written independently of the package."""
    traj = []
    v = m = s = eg2 = edx2 = 0.0
    for t, g in enumerate(grads, start=1):
        if kind == "sgd":
            w = w - lr * g
        elif kind == "momentum_sgd":
            v = mu * v + g
            w = w - lr * v
        elif kind == "adam":
            m = b1 * m + (1 - b1) * g
            s = b2 * s + (1 - b2) * g * g
            mhat = m / (1 - b1**t)
            shat = s / (1 - b2**t)
            w = w - lr * mhat / (shat**0.5 + eps_adam)
        elif kind == "adadelta":
            eg2 = rho * eg2 + (1 - rho) * g * g
            dx = -((edx2 + eps_ada) ** 0.5) / ((eg2 + eps_ada) ** 0.5) * g
            edx2 = rho * edx2 + (1 - rho) * dx * dx
            w = w + dx
        elif kind == "rmsprop":
            eg2 = decay * eg2 + (1 - decay) * g * g
            w = w - lr * g / (eg2 + eps_rms) ** 0.5
        else:
            raise ValueError(kind)
        traj.append(w)
    return traj


def package_trajectory(kind, w, grads, **cfg):
    from plitransfer.optim import OptimizerConfig, OptimizerState, optimizer_step

    config = OptimizerConfig(kind=kind, **cfg)
    state = OptimizerState()
    p = np.array([[w]])
    out = []
    for g in grads:
        optimizer_step(config, state, p, np.array([[g]]), "w")
        out.append(float(p[0, 0]))
    return out
