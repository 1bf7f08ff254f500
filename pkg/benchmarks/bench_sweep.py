"""Compare the compiled and pure-Python sweep kernels.

    python benchmarks/bench_sweep.py [--sweeps 20] [--size 8]

For each group a chain is built on a ``size x size``-vertex box and timed for
``--sweeps`` sweeps on both backends; both runs start from the same state and
use the same uniforms, so the final configurations must agree exactly.
"""
import argparse
import time

import numpy as np

from latgauge.groups import GroupSpec
from latgauge.kernels import get_backend
from latgauge.lattice import Geometry
from latgauge.model import Chain, SamplerParams


def time_backend(group, geom, backend, sweeps, beta):
    chain = Chain(geom, group, None, SamplerParams(beta=beta, seed=7, backend=backend))
    t0 = time.perf_counter()
    chain.sweep(sweeps)
    return time.perf_counter() - t0, chain.config.values.copy()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--size", type=int, default=8)
    args = ap.parse_args(argv)
    try:
        get_backend("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    geom = Geometry.box((0, 0), (args.size - 1, args.size - 1))
    print(f"{'group':>6} {'edges':>6} {'python s':>10} {'cython s':>10} {'speedup':>8} identical")
    for name, beta in (("Z2", 0.5), ("Z3", 0.7), ("U1", 1.0), ("SU2", 2.0)):
        group = GroupSpec.parse(name)
        tp, vp = time_backend(group, geom, "python", args.sweeps, beta)
        tc, vc = time_backend(group, geom, "cython", args.sweeps, beta)
        same = bool(np.array_equal(vp, vc))
        print(f"{name:>6} {geom.n_edges:>6} {tp:>10.4f} {tc:>10.4f} {tp / tc:>8.1f} {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
