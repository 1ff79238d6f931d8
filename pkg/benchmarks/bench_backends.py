"""Benchmark the numba kernels against the pure-numpy fallback.

Times the batched BiLSTM forward/backward (training hot path) and the
single-sequence inference recurrence at decoding shapes, asserting both
backends agree numerically.  Run from the repo root:

    python3 benchmarks/bench_backends.py [--repeat N]
"""

import argparse
import time

import numpy as np

from stacksql.numerics import available_backends, init_bilstm, set_backend
from stacksql.numerics.lstm import (
    bilstm_batch_backward,
    bilstm_batch_forward,
    seq_forward,
)


def time_fn(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_batch(backend, repeat, B=64, T=14, hidden=120, emb=50):
    rng = np.random.default_rng(0)
    params = init_bilstm(rng, emb, hidden)
    x = rng.normal(size=(B, T, emb))
    lengths = rng.integers(3, T + 1, size=B)
    for b, n in enumerate(lengths):
        x[b, n:] = 0.0
    dout = rng.normal(size=(B, T, 2 * hidden))
    for b, n in enumerate(lengths):
        dout[b, n:] = 0.0
    prev = set_backend(backend)
    try:
        out, cache = bilstm_batch_forward(params, x, lengths)  # warm compile
        bilstm_batch_backward(params, cache, dout)
        fwd = time_fn(lambda: bilstm_batch_forward(params, x, lengths), repeat)
        bwd = time_fn(lambda: bilstm_batch_backward(params, cache, dout), repeat)
    finally:
        set_backend(prev)
    return fwd, bwd, out


def bench_seq(backend, repeat, T=120, hidden=120):
    rng = np.random.default_rng(1)
    xg = rng.normal(size=(T, 4 * hidden))
    wh_t = np.ascontiguousarray(rng.normal(size=(4 * hidden, hidden)).T)
    zero = np.zeros(hidden)
    prev = set_backend(backend)
    try:
        out = seq_forward(xg, wh_t, zero, zero)  # warm compile
        best = time_fn(lambda: seq_forward(xg, wh_t, zero, zero), repeat)
    finally:
        set_backend(prev)
    return best, out[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    if len(backends) < 2:
        print("numba unavailable; nothing to compare")
        return
    print(f"{'kernel':<28} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    rows = []
    outs = {}
    for backend in backends:
        fwd, bwd, out = bench_batch(backend, args.repeat)
        seq, seq_out = bench_seq(backend, args.repeat)
        outs[backend] = (out, seq_out)
        rows.append((backend, fwd, bwd, seq))
    by = {r[0]: r for r in rows}
    for label, idx in (("batch bilstm fwd (64x14)", 1), ("batch bilstm bwd (64x14)", 2), ("seq recurrence (T=120)", 3)):
        nb = by["numba"][idx]
        np_ = by["numpy"][idx]
        print(f"{label:<28} {nb * 1e3:>8.2f}ms {np_ * 1e3:>8.2f}ms {np_ / nb:>7.1f}x")
    for a, b in zip(outs["numba"], outs["numpy"]):
        assert np.allclose(a, b, atol=1e-10), "backends disagree"
    print("backends agree to 1e-10")


if __name__ == "__main__":
    main()
