"""Compare the compiled evaluation kernel against the pure-Python fallback.

Usage: python3 benchmarks/benchmark_backends.py [batch_size] [repeats]

Evaluates every canonical law in the catalog with both kernels, checks
they agree, and prints per-law timings plus the overall speedup. With no
arguments it covers both regimes: session-sized batches (where the
compiled scalar stack machine avoids numpy's per-op temporaries) and bulk
batches (where vectorization amortizes the dispatch overhead).
"""

import sys
import time

import numpy as np

from lawlab.catalog import load_catalog
from lawlab.expr import backend_name, compile_tree, evaluate_batch


def time_backend(program, inputs, const_overrides, backend, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = evaluate_batch(
            program, inputs, const_overrides=const_overrides, backend=backend
        )
        best = min(best, time.perf_counter() - start)
    return best, out


def run_table(batch, repeats):
    print(f"batch size {batch}, best of {repeats} runs\n")
    header = f"{'law':<16}{'pure (ms)':>12}{'compiled (ms)':>15}{'speedup':>10}"
    print(header)
    print("-" * len(header))

    rng = np.random.default_rng(0)
    totals = {"pure": 0.0, "compiled": 0.0}
    for law in load_catalog():
        names = tuple(sorted(law.variables))
        inputs = np.column_stack(
            [law.sampling[n].sample(rng, batch) for n in names]
        )
        consts = {n: c.default_value for n, c in law.constants.items()}
        program = compile_tree(law.canonical, names)
        t_pure, out_pure = time_backend(program, inputs, consts, "pure", repeats)
        t_comp, out_comp = time_backend(
            program, inputs, consts, "compiled", repeats
        )
        if not np.allclose(out_pure, out_comp, rtol=1e-12, equal_nan=True):
            raise SystemExit(f"backend mismatch on {law.domain}")
        totals["pure"] += t_pure
        totals["compiled"] += t_comp
        print(
            f"{law.domain:<16}{t_pure * 1e3:>12.2f}{t_comp * 1e3:>15.2f}"
            f"{t_pure / t_comp:>10.1f}x"
        )

    print("-" * len(header))
    print(
        f"{'total':<16}{totals['pure'] * 1e3:>12.2f}"
        f"{totals['compiled'] * 1e3:>15.2f}"
        f"{totals['pure'] / totals['compiled']:>10.1f}x"
    )


def main():
    print(f"default backend: {backend_name()}\n")
    if len(sys.argv) > 1:
        batch = int(sys.argv[1])
        repeats = int(sys.argv[2]) if len(sys.argv) > 2 else 5
        run_table(batch, repeats)
        return
    run_table(20, 200)
    print()
    run_table(200_000, 5)


if __name__ == "__main__":
    main()
