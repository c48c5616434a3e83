"""Compare the compiled and numpy kernels on a double-bubble-sized mesh.

    python3 benchmarks/bench_kernels.py [--triangles 8000] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from triflow import _kernels_py
from triflow.cluster_mesh import double_bubble_for_triangles

try:
    from triflow import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(mesh):
    p = max(mesh.patches, key=lambda q: len(q.elements))
    X, E = p.positions, p.elements
    _, _, kloc = _kernels_py.element_geometry(X, E)
    vals = np.random.default_rng(0).standard_normal((len(E), 3))
    return {
        "element_geometry": lambda m: m.element_geometry(X, E),
        "scatter_stiffness": lambda m: m.scatter_stiffness(E, kloc),
        "lump": lambda m: m.lump(E, vals, len(X)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--triangles", type=int, default=8000)
    ap.add_argument("--repeat", type=int, default=20)
    a = ap.parse_args()
    mesh = double_bubble_for_triangles((1, 1, 1), a.triangles)
    n = sum(len(p.elements) for p in mesh.patches)
    print(f"mesh: {n} triangles; largest patch used")
    print(f"{'kernel':20s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for name, fn in cases(mesh).items():
        tp = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=a.repeat)) * 1e3
        if _compiled is None:
            print(f"{name:20s} {tp:12.3f} {'n/a':>12s} {'n/a':>9s}")
            continue
        tc = min(timeit.repeat(lambda: fn(_compiled), number=1, repeat=a.repeat)) * 1e3
        print(f"{name:20s} {tp:12.3f} {tc:12.3f} {tp / tc:9.2f}")


if __name__ == "__main__":
    main()
