"""Time every kernel with numba and with the pure-numpy fallback.

Each backend runs in its own interpreter because ``LSSMG_DISABLE_NUMBA`` is
read at import time. Numba timings exclude compilation (one warm-up call).

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]
"""
import argparse
import csv
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, timeit
import numpy as np
from lssmg import _accel, kernels
from lssmg.dynamics import LorenzParams, integrate, random_initial_condition
from lssmg.kkt import assemble_blocks, schur_blocks
from lssmg.multigrid import averaging_weights

repeat = int(sys.argv[1])
P = LorenzParams()
traj = integrate(random_initial_condition(0), 0.004, 4096, 10.0, P)
blocks = assemble_blocks(traj, P, "r", 40.0)
A = schur_blocks(blocks)
Dinv = np.linalg.inv(A.D)
rng = np.random.default_rng(0)
w = rng.standard_normal((4096, 3))
s = averaging_weights(4)
u0 = traj.states[0]

cases = {
    "rk4_run (20000 steps)": lambda: kernels.rk4_run(u0, 0.001, 20000, P.s, P.r, P.b),
    "schur_matvec (m=4096)": lambda: kernels.schur_matvec(blocks.F, blocks.G, blocks.f,
                                                          1 / 40.0, w),
    "tridiag_matvec (m=4096)": lambda: kernels.tridiag_matvec(A.L, A.D, A.U, w),
    "gs_sweep (m=4096, 5 sweeps)": lambda: kernels.gs_sweep(A.L, Dinv, A.U, np.zeros_like(w),
                                                            w, 1.0, 5),
    "block_thomas (m=4096)": lambda: kernels.block_thomas(A.L, A.D, A.U, w),
    "restrict (m=4096, order 4)": lambda: kernels.restrict_blocks(w, s.array, s.vector_offset),
    "prolong (m=4096, order 4)": lambda: kernels.prolong_blocks(w[:2048], s.array,
                                                               s.vector_offset, 4096, 2.0),
}
out = {}
for name, fn in cases.items():
    fn()
    out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
print(json.dumps({"backend": _accel.backend(), "times": out}))
"""


def run(disable, repeat):
    env = dict(os.environ)
    if disable:
        env["LSSMG_DISABLE_NUMBA"] = "1"
    else:
        env.pop("LSSMG_DISABLE_NUMBA", None)
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--csv", metavar="PATH", help="also write the table as CSV")
    args = parser.parse_args(argv)
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    rows = []
    print(f"{'kernel':30s} {fast['backend']:>12s} {slow['backend']:>12s} {'speedup':>9s}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        rows.append((name, t_fast, t_slow, t_slow / t_fast))
        print(f"{name:30s} {t_fast * 1e3:10.3f}ms {t_slow * 1e3:10.3f}ms {t_slow / t_fast:8.1f}x")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("kernel", f"{fast['backend']}_seconds",
                             f"{slow['backend']}_seconds", "speedup"))
            writer.writerows((n, format(a, ".17g"), format(b, ".17g"), format(c, ".17g"))
                             for n, a, b, c in rows)


if __name__ == "__main__":
    main()
