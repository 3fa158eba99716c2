"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 128]

Each kernel runs on identical inputs under both backends; the script also
checks that their outputs are bit-identical.
"""
import argparse
import time

import numpy as np

from evhdr import _backend
from evhdr.esim import SimConfig, simulate_log_frames
from evhdr.event_core import EventStream
from evhdr.kernels import DeformableKernel, deformable_conv2d
from evhdr.voxelizer import VoxelSpec, build_spike_tensor


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def cases(size, rng):
    logs = rng.normal(0, 0.5, (10, size, size))
    ts = np.arange(10) * 2000
    cfg = SimConfig(S=0.2)
    yield "simulate", lambda k: simulate_log_frames(logs, ts, cfg, backend=k)[0], lambda a, b: a == b

    n = 200_000
    stream = EventStream.from_columns((size, size), np.sort(rng.integers(0, 50_000, n)),
                                      rng.integers(0, size, n), rng.integers(0, size, n),
                                      rng.choice([-1, 1], n))
    spec = VoxelSpec((size, size), 5)
    yield "voxelize", lambda k: build_spike_tensor(stream, 0, 50_000, spec, backend=k).values, np.array_equal

    F = rng.normal(size=(16, size // 2, size // 2))
    kern = DeformableKernel(rng.normal(size=(16, 16, 3, 3)), rng.normal(0, 1.5, (9, 2) + F.shape[1:]))
    yield "deform_conv", lambda k: deformable_conv2d(F, kern, backend=k), np.array_equal


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    names = _backend.available()
    if "cython" not in names:
        print("compiled extension not built; only the numpy fallback is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<12} " + " ".join(f"{n:>10}" for n in names) + "   speedup  identical")
    for label, run, same in cases(args.size, rng):
        results = {n: best_of(lambda: run(_backend.get(n)), args.repeat) for n in names}
        row = f"{label:<12} " + " ".join(f"{results[n][0] * 1e3:>8.2f}ms" for n in names)
        if len(names) == 2:
            speedup = results["python"][0] / results["cython"][0]
            row += f"   {speedup:6.2f}x  {bool(same(results['python'][1], results['cython'][1]))}"
        print(row)


if __name__ == "__main__":
    main()
