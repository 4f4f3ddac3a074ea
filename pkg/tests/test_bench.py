import numpy as np

from soapool import bench


def test_tradeoff_rows_dims_and_bytes():
    rows = bench.tradeoff_rows(d=32, k_list=(1, 2, 4), n_points=16, repeats=1, methods=("cov", "cps", "spoc"))
    assert [(r["method"], r["k"], r["dim"], r["bytes"]) for r in rows] == [
        ("cov", 1, 528, 2112), ("cps", 1, 528, 2112), ("cps", 2, 136, 544),
        ("cps", 4, 36, 144), ("spoc", 1, 32, 128)]
    assert all(r["agg_us_per_scan"] > 0 and r["dist_evals_per_s"] > 0 for r in rows)
    table = bench.format_table(rows).splitlines()
    assert table[0].split() == ["method", "k", "dim", "bytes", "agg_us/scan", "dist_evals/s"]
    assert len(table) == len(rows) + 2


def test_small_descriptors_scan_faster():
    assert bench.distance_throughput(136, repeats=5) > bench.distance_throughput(32896, repeats=5)


def test_compare_backends_covers_every_kernel():
    rows = bench.compare_backends(repeats=1)
    from soapool.kernels import IMPLEMENTATIONS
    assert {r["kernel"] for r in rows} == set(IMPLEMENTATIONS)
    assert all(np.isfinite(r["ms"]) and r["ms"] > 0 for r in rows)
    assert len(bench.format_backend_table(rows).splitlines()) == len(rows) + 1
