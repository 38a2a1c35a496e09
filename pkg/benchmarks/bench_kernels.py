"""Compare the compiled kernels with the numpy fallback.

Times every hot kernel on the shapes a base-model source run uses (1220 rows,
12 -> 24 -> 24 -> 1), then a short end-to-end training run under each backend.
Also checks the two backends agree numerically before timing anything.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--epochs 50]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from plitransfer import kernels


def cases(rng):
    n, d, h = 1220, 12, 24
    x = rng.normal(size=(n, d))
    w = rng.normal(size=(d, h))
    b = rng.normal(size=(1, h))
    g = rng.normal(size=(n, h))
    y = 1.0 / (1.0 + np.exp(-rng.normal(size=(n, h))))
    gamma, beta = rng.normal(size=(1, h)), rng.normal(size=(1, h))
    wh, gh = rng.normal(size=(h, h)), rng.normal(size=(h, h))
    pred, actual = rng.normal(size=(n, 1)), rng.normal(size=(n, 1))
    xh = rng.normal(size=(n, h))
    return {
        "matmul": lambda k: k.matmul(x, w),
        "dense_forward": lambda k: k.dense_forward(x, w, b),
        "dense_backward": lambda k: k.dense_backward(x, w, g),
        "sigmoid_forward": lambda k: k.sigmoid_forward(g),
        "sigmoid_backward": lambda k: k.sigmoid_backward(g, y),
        "batchnorm_forward_train": lambda k: k.batchnorm_forward_train(
            xh, gamma, beta, np.zeros((1, h)), np.ones((1, h)), 1e-5, 0.1
        ),
        "batchnorm_forward_eval": lambda k: k.batchnorm_forward_eval(xh, gamma, beta, b, np.ones((1, h)), 1e-5),
        "batchnorm_backward": lambda k: k.batchnorm_backward(g, xh, np.ones((1, h)), gamma, 1e-5),
        "momentum_update": lambda k: k.momentum_update(wh.copy(), gh, np.zeros((h, h)), 0.01, 0.9),
        "adam_update": lambda k: k.adam_update(wh.copy(), gh, np.zeros((h, h)), np.zeros((h, h)), 0.01, 0.9, 0.999, 1e-8, 1),
        "mae_and_grad": lambda k: k.mae_and_grad(pred, actual),
    }


def check_agreement(backends, table):
    for name, fn in table.items():
        ref = fn(backends["python"])
        got = fn(backends["compiled"])
        ref = ref if isinstance(ref, tuple) else (ref,)
        got = got if isinstance(got, tuple) else (got,)
        for a, c in zip(ref, got):
            if not np.allclose(a, c, rtol=1e-10, atol=1e-12):
                raise SystemExit(f"backends disagree on {name}")


def time_training(backend, epochs):
    code = (
        "import time\n"
        "from plitransfer import kernels, harness\n"
        "from plitransfer.config import RunConfig\n"
        "from plitransfer.training import TrainConfig\n"
        f"cfg = RunConfig(train=TrainConfig(epochs={epochs}))\n"
        "p = harness.prepare_data(cfg)\n"
        "t = time.perf_counter(); harness.train_source(cfg, p); print(kernels.BACKEND, time.perf_counter() - t)\n"
    )
    env = dict(os.environ, PLITRANSFER_PURE_PYTHON="1" if backend == "python" else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    name, secs = out.split()
    return name, float(secs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=50)
    args = ap.parse_args()

    avail = kernels.available_backends()
    if "compiled" not in avail:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    backends = {name: kernels.load_backend(name) for name in ("compiled", "python")}
    table = cases(np.random.default_rng(0))
    check_agreement(backends, table)

    print(f"{'kernel':<26}{'compiled us':>13}{'python us':>12}{'speedup':>10}")
    for name, fn in table.items():
        t = {}
        for b, mod in backends.items():
            t[b] = min(timeit.repeat(lambda: fn(mod), number=args.repeat, repeat=3)) / args.repeat * 1e6
        print(f"{name:<26}{t['compiled']:>13.1f}{t['python']:>12.1f}{t['python'] / t['compiled']:>9.2f}x")

    print(f"\nsource training, {args.epochs} full-batch epochs (1220 rows):")
    for b in ("compiled", "python"):
        name, secs = time_training(b, args.epochs)
        print(f"  {name:<9} {secs:8.3f} s")


if __name__ == "__main__":
    main()
