"""Timing comparison of the compiled vs pure-numpy kernel backends.

Measures the three hot kernels (forward, backward, SGD update) and a full
training step (forward + loss + backward + update) at the desk-scale batch
shape, then prints per-call times and the compiled/python speedup. Also
cross-checks numerical agreement between the backends.

Usage: python benchmarks/bench_backends.py [--batch 64] [--repeats 2000]
"""

import argparse
import time

import numpy as np

from fbl.backend import available_backends
from fbl.losses import softmax_ce
from fbl.model import init_model


def time_call(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def build_problem(batch, d_in, hidden, feat, classes, seed=0):
    rng = np.random.default_rng(seed)
    model = init_model(d_in, hidden, feat, classes, seed=seed)
    model.b1[:] = rng.normal(scale=0.1, size=hidden)
    model.b2[:] = rng.normal(scale=0.1, size=feat)
    x = np.ascontiguousarray(rng.normal(size=(batch, d_in)))
    y = rng.integers(0, classes, size=batch)
    return model, x, y


def bench_backend(kernels, model, x, y, repeats):
    w1, b1, w2, b2, wc = model.params()
    fwd = kernels.forward(x, w1, b1, w2, b2, wc)
    _, hidden, _, feature, _, logits = fwd
    out = softmax_ce(logits, y)
    flat_params = [p.reshape(-1).copy() for p in model.params()]
    flat_grads = [np.random.default_rng(1).normal(size=p.shape) for p in flat_params]
    flat_bufs = [np.zeros_like(p) for p in flat_params]

    def full_step():
        h_pre, h, f_pre, f, norms, z = kernels.forward(x, w1, b1, w2, b2, wc)
        loss_out = softmax_ce(z, y)
        kernels.backward(x, h, f, w2, wc, loss_out.dl_dz, None)

    times = {
        "forward": time_call(lambda: kernels.forward(x, w1, b1, w2, b2, wc), repeats),
        "backward": time_call(
            lambda: kernels.backward(x, hidden, feature, w2, wc, out.dl_dz, None), repeats
        ),
        "sgd_update": time_call(
            lambda: [kernels.sgd_update(p, g, v, 0.0, 0.9, 1e-4)
                     for p, g, v in zip(flat_params, flat_grads, flat_bufs)],
            repeats,
        ),
        "train_step": time_call(full_step, repeats),
    }
    return times


def check_agreement(backends, model, x, y):
    outs = {}
    for name, kernels in backends.items():
        fwd = kernels.forward(x, *model.params())
        loss_out = softmax_ce(fwd[5], y)
        grads = kernels.backward(x, fwd[1], fwd[3], model.w2, model.wc,
                                 loss_out.dl_dz, None)
        outs[name] = list(fwd) + list(grads)
    names = list(outs)
    worst = 0.0
    if len(names) == 2:
        for a, b in zip(outs[names[0]], outs[names[1]]):
            scale = np.maximum(np.abs(a), 1.0)
            worst = max(worst, float((np.abs(a - b) / scale).max()))
    return worst


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--input-dim", type=int, default=16)
    parser.add_argument("--hidden-dim", type=int, default=64)
    parser.add_argument("--feat-dim", type=int, default=16)
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()

    backends = available_backends()
    model, x, y = build_problem(args.batch, args.input_dim, args.hidden_dim,
                                args.feat_dim, args.classes)
    print(f"shape: batch={args.batch} {args.input_dim}->{args.hidden_dim}"
          f"->{args.feat_dim}->{args.classes}, {args.repeats} repeats")
    print(f"backends built: {', '.join(backends)}")

    results = {name: bench_backend(k, model, x, y, args.repeats)
               for name, k in backends.items()}
    kernels_order = ["forward", "backward", "sgd_update", "train_step"]
    header = f"{'kernel':<12}" + "".join(f"{name + ' (us)':>14}" for name in results)
    if len(results) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for kname in kernels_order:
        row = f"{kname:<12}"
        vals = [results[b][kname] for b in results]
        for v in vals:
            row += f"{v * 1e6:>14.1f}"
        if len(vals) == 2:
            py, other = (vals[0], vals[1]) if "python" in list(results)[0] else (vals[1], vals[0])
            row += f"{py / other:>9.2f}x"
        print(row)

    if len(backends) == 2:
        worst = check_agreement(backends, model, x, y)
        print(f"max relative disagreement between backends: {worst:.2e}")


if __name__ == "__main__":
    main()
