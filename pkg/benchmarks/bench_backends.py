"""Time every hot kernel under numba and numpy.

    python benchmarks/bench_backends.py [--repeats N] [--seed S]
"""
import argparse

from soapool.bench import compare_backends, format_backend_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rows = compare_backends(args.repeats, args.seed)
    print(format_backend_table(rows))
    by_kernel = {}
    for r in rows:
        by_kernel.setdefault(r["kernel"], {})[r["backend"]] = r["ms"]
    print()
    for name, t in by_kernel.items():
        if "numba" in t:
            print(f"{name:<18}numpy/numba = {t['numpy'] / t['numba']:.2f}x")


if __name__ == "__main__":
    main()
