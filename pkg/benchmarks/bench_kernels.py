"""Time the numba kernels against their pure-numpy twins.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Each kernel runs once untimed (JIT compile / cache load), then ``--repeat``
times; the best wall time per flavour is reported with the speed-up.
"""

import argparse
import json
import time

import numpy as np

from himo import _kernels


def _inputs(rng):
    n = 1024
    sim = rng.standard_normal((n, n))
    scores = rng.standard_normal((20000, 8))
    words = [f"tok{i % 5000}" for i in range(200000)]
    raw = [w.encode() for w in words]
    buf = np.frombuffer(b"".join(raw), dtype=np.uint8)
    offsets = np.concatenate([[0], np.cumsum([len(r) for r in raw])]).astype(np.int64)
    return {
        "symmetric_xent": (sim / 0.07,),
        "pearson_rows": (scores,),
        "strictly_increasing_rows": (np.sort(scores, axis=1),),
        "truth_ranks": (sim, np.arange(n, dtype=np.int64)),
        "fnv1a_tokens": (buf, offsets, np.uint64(0)),
    }


def best_time(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    inputs = _inputs(np.random.default_rng(args.seed))
    rows = []
    print(f"{'kernel':<26}{'numpy ms':>12}{'numba ms':>12}{'speed-up':>10}")
    for name, (np_fn, nb_fn) in _kernels.KERNELS.items():
        t_np = best_time(np_fn, inputs[name], args.repeat)
        t_nb = best_time(nb_fn, inputs[name], args.repeat)
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb})
        print(f"{name:<26}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
