"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""

import argparse
import json
import timeit
from contextlib import contextmanager

import numpy as np

from hrpricer import GridSpec, ModelParams, VolatilityFn, kernels, solve


def _lcp(n_lines, n, seed=0):
    rng = np.random.default_rng(seed)
    sub = -rng.uniform(0.1, 0.4, (n_lines, n))
    sup = -rng.uniform(0.1, 0.4, (n_lines, n))
    diag = 1.0 + np.abs(sub) + np.abs(sup) + 0.05
    rhs = rng.uniform(-1, 1, (n_lines, n))
    ob = rng.uniform(-0.5, 0.5, (n_lines, n))
    return sub, diag, sup, rhs, ob


@contextmanager
def using(mod):
    saved = {k: getattr(kernels, k) for k in ("psor_lines", "tridiag_lines", "crr_put")}
    for k in saved:
        setattr(kernels, k, getattr(mod, k))
    try:
        yield
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)


def cases():
    sub, diag, sup, rhs, ob = _lcp(400, 129)
    P = ModelParams()
    vol = VolatilityFn.hobson_rogers()
    grid = GridSpec.for_model(P, vol, n_cells=128, n_t=64)
    return {
        "psor 400x129": lambda m: m.psor_lines(sub, diag, sup, rhs, ob, np.maximum(rhs, ob),
                                               1.2, 1e-9, 1290),
        "tridiag 400x129": lambda m: m.tridiag_lines(sub, diag, sup, rhs),
        "crr n=5000": lambda m: m.crr_put(100.0, 100.0, 0.05, 0.2, 1.0, 5000),
        "solve 128 cells x 64 steps": lambda m: _solve(m, P, vol, grid),
    }


def _solve(mod, P, vol, grid):
    with using(mod):
        return solve(P, vol, grid, keep_every=grid.n_t)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None, help="also write results here")
    args = ap.parse_args()
    found = kernels.backends()
    rows = []
    for name, fn in cases().items():
        timing = {}
        for backend, mod in found.items():
            timing[backend] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        rows.append({"case": name, **timing})
    names = list(found)
    print(f"{'case':<30}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for r in rows:
        line = f"{r['case']:<30}" + "".join(f"{r[n]:>11.4f}s" for n in names)
        if "cython" in r and "python" in r:
            line += f"{r['python'] / r['cython']:>11.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
