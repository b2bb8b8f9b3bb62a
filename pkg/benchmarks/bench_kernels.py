"""Kernel timings: JIT vs pure-numpy fallback, and renormalization cadence.

Usage:  python benchmarks/bench_kernels.py

Spawns one subprocess per accel path (OSL_LAB_NUMBA=1/0) so each is
measured exactly as it runs in production, then prints a small table.
The cadence section measures the cost of renormalizing after every
multiplication against renormalizing every 10 steps; the per-step policy
is what the package ships (it removes all overflow analysis), and the
table documents what that safety margin costs.
"""

import json
import os
import subprocess
import sys
import time

INNER = """
import json
import time

import numpy as np

from osl_lab import _kernels, cocycle, dynamics


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


S = dynamics.RotationSystem()
A = cocycle.catalog("schrodinger", {"energy": 0.0, "coupling": 3.0})
x = S.phase(0.311)

n = 65536
stack2 = np.ascontiguousarray(A.matrix_stack(S.orbit_values(x, n)))
rng = np.random.default_rng(0)
stack4 = np.ascontiguousarray(rng.normal(size=(8192, 4, 4)))

_kernels.chain_product(stack2[:4], np.eye(2), 0.0)     # warm the JIT
_kernels.chain_product(stack4[:4], np.eye(4), 0.0)

results = {
    "numba": _kernels.USING_NUMBA,
    "chain_2x2_65536": timeit(
        lambda: _kernels.chain_product(stack2, np.eye(2), 0.0)),
    "chain_4x4_8192": timeit(
        lambda: _kernels.chain_product(stack4, np.eye(4), 0.0)),
    "schrodinger_iterate_4096": timeit(
        lambda: cocycle.iterate(A, S, x, 4096)),
}


def chain_every(stack, stride):
    fac = np.eye(2)
    acc = 0.0
    for j in range(stack.shape[0]):
        fac = stack[j] @ fac
        if (j + 1) % stride == 0:
            t = fac[0, 0] ** 2 + fac[0, 1] ** 2 + fac[1, 0] ** 2 \\
                + fac[1, 1] ** 2
            d = fac[0, 0] * fac[1, 1] - fac[0, 1] * fac[1, 0]
            disc = max(t * t - 4.0 * d * d, 0.0)
            s = np.sqrt(0.5 * (t + np.sqrt(disc)))
            fac = fac / s
            acc = acc + np.log(s)
    return fac, acc


if _kernels.USING_NUMBA:
    import numba
    chain_every = numba.njit(cache=False)(chain_every)

# cadence: renormalizing after every multiplication vs every 10 steps
# (a stride of 10 stays overflow-safe for this bounded cocycle)
short = stack2[:8192]
chain_every(short[:4], 1)
results["renorm_every_1"] = timeit(lambda: chain_every(short, 1), repeats=3)
results["renorm_every_10"] = timeit(lambda: chain_every(short, 10), repeats=3)

print(json.dumps(results))
"""


def run_path(flag):
    env = dict(os.environ, OSL_LAB_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", INNER], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    t0 = time.perf_counter()
    jit = run_path("1")
    plain = run_path("0")
    rows = [
        ("chain 2x2, 65536 steps", "chain_2x2_65536"),
        ("chain 4x4, 8192 steps", "chain_4x4_8192"),
        ("schrodinger iterate n=4096", "schrodinger_iterate_4096"),
    ]
    print(f"accel paths (numba={jit['numba']}, fallback={plain['numba']})")
    print(f"{'kernel':<32}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for label, key in rows:
        a, b = jit[key], plain[key]
        print(f"{label:<32}{a * 1e3:>10.2f}ms{b * 1e3:>10.2f}ms"
              f"{b / a:>9.1f}x")
    print()
    print("renormalization cadence (8192 2x2 steps, closed-form norm):")
    for label, res in (("numba", jit), ("numpy", plain)):
        every1, every10 = res["renorm_every_1"], res["renorm_every_10"]
        print(f"  [{label}] every step {every1 * 1e3:8.2f} ms | every 10 "
              f"{every10 * 1e3:8.2f} ms | per-step overhead "
              f"{100.0 * (every1 - every10) / every10:.0f}%")
    print(f"\ntotal benchmark time {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
