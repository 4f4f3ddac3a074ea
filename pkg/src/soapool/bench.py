"""Descriptor size / speed trade-off table and the numba-vs-numpy kernel benchmark."""
import csv
import time

import numpy as np

from . import kernels
from ._backend import HAVE_NUMBA
from .aggregate import AggregatorSpec, descriptor_dim

CSV_HEADER = ["method", "k", "dim", "bytes", "agg_us_per_scan", "dist_evals_per_s"]
DEFAULT_METHODS = ("spoc", "mac", "gem", "cov", "cps", "cbp", "kernel")
# database size for throughput runs: ~16 MB of float32 descriptors, capped
_THROUGHPUT_BYTES = 16 * 2 ** 20


def _best_time(fn, repeats):
    best = float("inf")
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def distance_throughput(dim, repeats=3, seed=0):
    """Exact distance evaluations per second against a random float32 database."""
    rows = int(np.clip(_THROUGHPUT_BYTES // (4 * dim), 64, 20000))
    rng = np.random.default_rng(seed)
    db = rng.standard_normal((rows, dim)).astype(np.float32)
    q = rng.standard_normal(dim).astype(np.float32)
    kernels.sqdist_to_query(db[:2], q)
    return rows / _best_time(lambda: kernels.sqdist_to_query(db, q), repeats)


def tradeoff_rows(d=256, k_list=(1, 2, 4, 8, 16), n_points=4096, repeats=3, seed=0,
                  methods=DEFAULT_METHODS, sketch_dim=8192, ns_iters=5):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((d, n_points))
    rows = []
    for method in methods:
        ks = k_list if method == "cps" else (1,)
        for k in ks:
            spec = AggregatorSpec(method, k=k, sketch_dim=sketch_dim, ns_iters=ns_iters,
                                  seed=seed, sigma=float(np.sqrt(n_points)))
            dim = descriptor_dim(method, d, k, sketch_dim)
            spec(x[:, :8])
            agg = _best_time(lambda: spec(x), repeats)
            rows.append({
                "method": method,
                "k": k,
                "dim": dim,
                "bytes": dim * 4,
                "agg_us_per_scan": agg * 1e6,
                "dist_evals_per_s": distance_throughput(dim, repeats, seed),
            })
    return rows


def format_table(rows):
    head = f"{'method':<8}{'k':>4}{'dim':>8}{'bytes':>9}{'agg_us/scan':>14}{'dist_evals/s':>16}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['method']:<8}{r['k']:>4}{r['dim']:>8}{r['bytes']:>9}"
                     f"{r['agg_us_per_scan']:>14.1f}{r['dist_evals_per_s']:>16.4g}")
    return "\n".join(lines)


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "agg_us_per_scan": f"{r['agg_us_per_scan']:.3f}",
                        "dist_evals_per_s": f"{r['dist_evals_per_s']:.6g}"})


def _kernel_cases(rng):
    x = rng.standard_normal((64, 2048))
    spd = np.cov(rng.standard_normal((48, 200))) + np.eye(48)
    h = rng.integers(0, 4096, 256)
    s = 2.0 * rng.integers(0, 2, 256) - 1.0
    wide = rng.standard_normal((256, 1024))
    db = rng.standard_normal((20000, 136)).astype(np.float32)
    q = rng.standard_normal(136).astype(np.float32)
    return {
        "covariance": ("64x2048", (x,)),
        "jacobi_eigh": ("48x48", (spd, 1e-15, 100)),
        "count_sketch": ("256x1024->4096", (wide, h, s, 4096)),
        "row_sqdist": ("64x2048", (x,)),
        "sqdist_to_query": ("20000x136", (db, q)),
    }


def compare_backends(repeats=5, seed=0):
    """Best-of-``repeats`` wall time of every kernel under both backends.

    The numba path is called once before timing so compilation is excluded.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for name, (size, args) in _kernel_cases(rng).items():
        for backend in ("numba", "numpy"):
            if backend == "numba" and not HAVE_NUMBA:
                continue
            fn = kernels.IMPLEMENTATIONS[name][backend]
            fn(*args)
            rows.append({"kernel": name, "backend": backend, "size": size,
                         "ms": _best_time(lambda: fn(*args), repeats) * 1e3})
    return rows


def format_backend_table(rows):
    lines = [f"{'kernel':<18}{'size':<18}{'backend':<8}{'ms':>10}"]
    for r in rows:
        lines.append(f"{r['kernel']:<18}{r['size']:<18}{r['backend']:<8}{r['ms']:>10.3f}")
    return "\n".join(lines)
