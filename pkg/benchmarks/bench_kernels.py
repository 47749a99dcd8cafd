"""Compare the compiled core against the numpy fallback on the hot loops.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--json PATH]

Each kernel runs on the shapes it sees during training (one frame pair of a
400-point scene through the deformation network) and rendering (a 160x120
label grid). Results are checked for bitwise equality before timing.
"""
import argparse
import json
import timeit

import numpy as np

from kinefield import _core_py

try:
    from kinefield import _core
except ImportError:
    _core = None


def cases(rng):
    n = 800  # 400 points x 2 frames
    X = rng.normal(size=(n, 48))
    W1, W2 = rng.normal(size=(48, 128)), rng.normal(size=(128, 128))
    b = rng.normal(size=128)
    H = np.maximum(X @ W1, 0.0)
    m = 2000
    u, v = rng.uniform(0, 160, m), rng.uniform(0, 120, m)
    r = rng.uniform(0.5, 3.0, m)
    lab = rng.integers(1, 5, m)
    grid = _core_py.splat_disks(u, v, r, lab, 160, 120)
    return {
        "matmul 800x48 @ 48x128 +relu": lambda impl: impl.matmul_bias(X, W1, b, True),
        "matmul 800x128 @ 128x128": lambda impl: impl.matmul_bias(H, W2, b, False),
        "matmul 128x800 @ 800x128 (weight grad)": lambda impl: impl.matmul_bias(
            np.ascontiguousarray(H.T), H, np.zeros(128), False),
        "splat 2000 disks on 160x120": lambda impl: impl.splat_disks(u, v, r, lab, 160, 120),
        "votes 2000 points": lambda impl: impl.accumulate_votes(u, v, grid, np.zeros((m, 5), dtype=np.int64)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="write results to this file")
    args = p.parse_args(argv)
    backends = {"python": _core_py}
    if _core is not None:
        backends["compiled"] = _core
    else:
        print("compiled core not built; timing the numpy fallback only")
    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        outs = {b: fn(impl) for b, impl in backends.items()}
        if len(outs) == 2:
            a, c = outs["python"], outs["compiled"]
            if a is not None and not np.array_equal(a, c):
                raise SystemExit(f"{name}: backends disagree")
        row = {"kernel": name}
        for b, impl in backends.items():
            number = 3
            best = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat)) / number
            row[b] = best * 1e3
        if "compiled" in row:
            row["speedup"] = row["python"] / row["compiled"]
        rows.append(row)
    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':{width}s}  python ms  compiled ms  speedup")
    for r in rows:
        comp = f"{r['compiled']:11.3f}  {r['speedup']:6.2f}x" if "compiled" in r else "          -        -"
        print(f"{r['kernel']:{width}s}  {r['python']:9.3f}  {comp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
