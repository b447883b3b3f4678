"""Compare the numba kernels with the pure-Python fallback.

Each backend runs in its own interpreter because the choice is made at
import time through HUBLOOPS_NO_NUMBA. Usage:

    python3 benchmarks/bench_kernels.py [--samples 2000] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, math, sys, timeit
import numpy as np
from hubloops import rng
from hubloops._accel import backend
from hubloops.lattice import chain
from hubloops.model import Model
from hubloops.worldline import run_batch

n, repeat = int(sys.argv[1]), int(sys.argv[2])
cases = {
    "hubbard_chain4_U4": Model(chain(4, 1.0, "open"), 2, 4.0),
    "hardcore_ring4_N3": Model(chain(4, 1.0, "periodic"), 3, math.inf),
}
keys = rng.seed_keys(1)
out = {"backend": backend()}
for name, m in cases.items():
    inp = m.kernel_inputs()
    run_batch(inp, 1.0, m.constraint, keys, 0, 8)  # compile or warm up
    t = min(timeit.repeat(lambda: run_batch(inp, 1.0, m.constraint, keys, 0, n),
                          number=1, repeat=repeat))
    out[name] = n / t
buf = np.zeros(4, np.uint64)
t = min(timeit.repeat(lambda: rng.fill_block(buf, 0, 0, 0, 0, keys), number=2000, repeat=repeat))
out["philox_blocks"] = 2000 / t
print(json.dumps(out))
"""


def run(no_numba: bool, samples: int, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("HUBLOOPS_NO_NUMBA", None)
    if no_numba:
        env["HUBLOOPS_NO_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", CHILD, str(samples), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run(False, args.samples, args.repeat)
    slow = run(True, max(args.samples // 20, 50), args.repeat)
    print(f"{'kernel':24s} {'numba /s':>12s} {'python /s':>12s} {'speedup':>9s}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:24s} {fast[key]:12.1f} {slow[key]:12.1f} {fast[key] / slow[key]:9.1f}")
    print(f"backends: {fast['backend']} vs {slow['backend']}")


if __name__ == "__main__":
    main()
