"""Compare the compiled kernels against the pure-numpy fallback on the
convolution hot path and on a full training step.

Run from a source checkout (after optionally building the extension):

    python3 benchmarks/bench_conv.py
"""

import importlib
import os
import sys
import time

import numpy as np


def timeit(fn, n=200):
    fn()
    t0 = time.perf_counter()
    for _ in range(n):
        fn()
    return (time.perf_counter() - t0) / n


def bench_kernels(mod, tag):
    x = np.random.default_rng(0).random((1, 16, 63, 63), dtype=np.float32)
    cols = mod.im2col(x, 3, 1, 1, 1)
    g = np.random.default_rng(1).random(cols.shape, dtype=np.float32)
    t_im = timeit(lambda: mod.im2col(x, 3, 1, 1, 1))
    t_col = timeit(lambda: mod.col2im(g, x.shape, 3, 1, 1, 1))
    print(f"  {tag:8s} im2col {t_im * 1e3:7.3f} ms   col2im {t_col * 1e3:7.3f} ms")
    return t_im, t_col


def bench_step():
    from pathroute import kernels
    from pathroute.distortion import NoiseSpec, make_dataset
    from pathroute.model import ModelConfig, MultiPathRestorer
    from pathroute.reward import RewardConfig
    from pathroute.trainer import _iter_rng, stage1_step

    data = make_dataset(None, NoiseSpec("uniform", 50.0), count=100, seed=0)
    batch = [(s.degraded, s.clean) for s in (data.sample(i) for i in range(4))]
    model = MultiPathRestorer(ModelConfig(features=16), seed=1)
    rc = RewardConfig()

    def step(it=[0]):
        it[0] += 1
        stage1_step(model, batch, 2e-4, 0.1, _iter_rng(0, 1, it[0]), rc)

    t = timeit(step, n=10)
    print(f"  stage-1 step (K=4, F=16, N=6): {t * 1e3:.0f} ms  "
          f"[{kernels.BACKEND} backend]")
    return t


def main():
    print("kernel micro-benchmarks (16ch 63x63, 3x3 kernel):")
    from pathroute.kernels import fallback

    t_np = bench_kernels(fallback, "numpy")
    try:
        from pathroute.kernels import _convext
    except ImportError:
        print("  compiled extension not built; run `python3 setup.py build_ext --inplace`")
        _convext = None
    else:
        t_cy = bench_kernels(_convext, "cython")
        print(f"  speedup: im2col x{t_np[0] / t_cy[0]:.2f}, col2im x{t_np[1] / t_cy[1]:.2f}")

    print("\nend-to-end training step, selected backend:")
    bench_step()

    if _convext is not None and os.environ.get("PATHROUTE_FORCE_NUMPY") != "1":
        print("\nend-to-end training step, forced numpy fallback:")
        os.environ["PATHROUTE_FORCE_NUMPY"] = "1"
        for name in list(sys.modules):
            if name.startswith("pathroute"):
                del sys.modules[name]
        importlib.invalidate_caches()
        bench_step()


if __name__ == "__main__":
    main()
