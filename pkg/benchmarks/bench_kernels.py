"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--train-steps 2000]

Each kernel is timed at the batch sizes the package actually uses: one
row per training step and a hundred rows per evaluation step. The last
section runs a short MMDDPG training job under each backend in a fresh
interpreter, since the backend is fixed at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mmddpg import _kernels_py, kernels

TRAIN_SNIPPET = """
import time
from mmddpg import kernels
from mmddpg.agents import AgentConfig, make_agent
from mmddpg.envs import PointMassEnv
from mmddpg.train import Trainer, seed_streams
env = PointMassEnv()
st = seed_streams(0)
agent = make_agent("mmddpg", env.spec, AgentConfig(warm_up=256), st["init"])
tr = Trainer(agent, env, st)
tr.run(256)
t = time.perf_counter()
tr.run({steps})
print(kernels.BACKEND, (time.perf_counter() - t) / {steps} * 1e3)
"""


def kernel_cases(batch, rng):
    pos = rng.standard_normal((batch, 2))
    vel = rng.standard_normal((batch, 2))
    target = rng.standard_normal((batch, 2))
    a = rng.uniform(-1, 1, (batch, 2))
    w = rng.uniform(-1, 1, (batch, 2))
    pm = (pos, vel, target, a, w, 1.0, 0.5, 1.0, 1.0, 1.0, 0.05, 1.0, 1.0, 0.1, 0.01)
    tl = (pos, vel, target, a, w, 1.0, 1.0, 0.1, 0.1, 0.02, 0.05, 1.0, 1.0, 0.01, 1.0, 0.2, 0.01, 0.01)
    return {"point_mass_step": pm, "two_link_step": tl}


def time_call(fn, args, repeat, number):
    return min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number


def bench_kernels(compiled, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for batch in (1, 100):
        for name, args in kernel_cases(batch, rng).items():
            py = time_call(getattr(_kernels_py, name), args, repeat, 2000)
            cy = time_call(getattr(compiled, name), args, repeat, 2000)
            rows.append((f"{name} (batch {batch})", py, cy))
    for size in (5_000, 50_000):
        p, g = rng.standard_normal(size), rng.standard_normal(size)
        m, v = np.zeros(size), np.zeros(size)
        args = (p, g, m, v, 1e-4, 0.9, 0.999, 1e-8, 0.1, 0.001)
        rows.append((f"adam_update ({size} params)", time_call(_kernels_py.adam_update, args, repeat, 500),
                     time_call(compiled.adam_update, args, repeat, 500)))
        o = rng.standard_normal(size)
        rows.append((f"lerp_inplace ({size} params)",
                     time_call(_kernels_py.lerp_inplace, (p, o, 0.005), repeat, 500),
                     time_call(compiled.lerp_inplace, (p, o, 0.005), repeat, 500)))
    return rows


def bench_training(steps):
    out = []
    for pure in ("1", "0"):
        env = dict(os.environ, MMDDPG_PURE_PYTHON=pure)
        proc = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(steps=steps)],
                              env=env, capture_output=True, text=True, check=True)
        backend, ms = proc.stdout.split()
        out.append((backend, float(ms)))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--train-steps", type=int, default=2000, help="0 skips the training comparison")
    args = p.parse_args(argv)

    compiled = kernels.compiled_module()
    if compiled is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':34s} {'numpy us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for name, py, cy in bench_kernels(compiled, args.repeat):
        print(f"{name:34s} {py * 1e6:10.2f} {cy * 1e6:10.2f} {py / cy:8.1f}x")
    if args.train_steps:
        print()
        for backend, ms in bench_training(args.train_steps):
            print(f"mmddpg training step, {backend:6s} backend: {ms:.3f} ms")
    return 0


if __name__ == "__main__":
    sys.exit(main())
