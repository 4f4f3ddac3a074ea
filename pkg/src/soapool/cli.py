"""Command-line interface.

Exit codes: 0 success, 1 self-test/property failure, 2 invalid input or
flags, 3 incomparable descriptor databases.
"""
import argparse
import os
import sys
from pathlib import Path

from . import bench, formats, selftest
from ._backend import BACKEND
from .aggregate import AggregatorSpec, METHODS
from .errors import IncomparableDescriptorsError, SoapoolError
from .retrieve import EvalProtocol, PlaceDatabase, PlaceRecord, evaluate, load_db, save_db
from .synth import ToyBackboneConfig, gen_world, record_id, toy_backbone

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INCOMPARABLE = 0, 1, 2, 3
MANIFEST_NAME = "manifest.txt"


def _bounded_int(lo):
    def parse(s):
        v = int(s)
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v
    return parse


def _nonneg_float(s):
    v = float(s)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _pos_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _int_list(s):
    try:
        vals = [int(v) for v in str(s).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {s!r}")
    return vals


def _float_list(s):
    try:
        return [float(v) for v in str(s).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _position(s):
    vals = _float_list(s)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"position needs x,y,z, got {s!r}")
    return vals


def _bool(s):
    if isinstance(s, bool):
        return s
    return str(s).strip().lower() in ("1", "true", "yes", "on")


def _add_method_flags(p):
    p.add_argument("--method", choices=METHODS, default="cps")
    p.add_argument("--p", type=float, default=3.0, help="GeM exponent")
    p.add_argument("--k", type=_bounded_int(1), default=2, help="CPS partition count")
    p.add_argument("--ns-iters", type=_bounded_int(1), default=5)
    p.add_argument("--sketch-dim", type=_bounded_int(1), default=8192)
    p.add_argument("--sigma", type=_pos_float, default=1.0, help="RBF kernel width")
    p.add_argument("--weights", type=_float_list, default=None, help="CPS raw logits, comma separated")


def _spec_from(args):
    return AggregatorSpec(args.method, p=args.p, k=args.k if args.method == "cps" else 1,
                          raw_weights=args.weights, ns_iters=args.ns_iters,
                          sketch_dim=args.sketch_dim, sigma=args.sigma, seed=args.seed)


def build_parser():
    parser = argparse.ArgumentParser(prog="soapool", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, default=None, help="key=value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (falls back to $SOAPOOL_SEED, then 0)")
        p.set_defaults(func=func)
        cmds[name] = p
        return p

    p = add("gen-synth", cmd_gen_synth, "write a synthetic world as LPC1 clouds + manifest")
    p.add_argument("--places", type=_bounded_int(2), default=10)
    p.add_argument("--traversals", type=_bounded_int(2), default=2)
    p.add_argument("--points", type=_bounded_int(1), default=256)
    p.add_argument("--noise", type=_nonneg_float, default=0.0)
    p.add_argument("--out-dir", type=Path, required=True)

    p = add("featurize", cmd_featurize, "run the toy backbone on an LPC1 cloud, write LFM1")
    p.add_argument("--cloud", type=Path, required=True)
    p.add_argument("--channels", type=_bounded_int(2), default=16)
    p.add_argument("--freq-scale", type=_pos_float, default=1.0)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    p.add_argument("--out", type=Path, required=True)

    p = add("aggregate", cmd_aggregate, "pool an LFM1 feature matrix into a descriptor")
    _add_method_flags(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="write a one-record CDB1")
    p.add_argument("--db", type=Path, default=None, help="append to an existing CDB1")
    p.add_argument("--id", type=_bounded_int(0), default=0)
    p.add_argument("--pos", type=_position, default=[0.0, 0.0, 0.0])

    p = add("build-db", cmd_build_db, "backbone + pooling for one traversal of a manifest")
    _add_method_flags(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--traversal", type=_bounded_int(0), required=True)
    p.add_argument("--channels", type=_bounded_int(2), default=16)
    p.add_argument("--freq-scale", type=_pos_float, default=1.0)
    p.add_argument("--backbone-seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = add("eval", cmd_eval, "evaluate a query database against a reference database")
    p.add_argument("--query-db", type=Path, required=True)
    p.add_argument("--ref-db", type=Path, required=True)
    p.add_argument("--threshold", type=_pos_float, default=5.0)
    p.add_argument("--top-n", type=_int_list, default=[1, 5])
    p.add_argument("--one-percent", type=_bool, default=True, nargs="?", const=True)
    p.add_argument("--mrr", type=_bool, default=True, nargs="?", const=True)
    p.add_argument("--format", choices=("table", "kv"), default="table")

    p = add("bench", cmd_bench, "descriptor size / speed trade-off table")
    p.add_argument("--d", type=_bounded_int(1), default=256)
    p.add_argument("--k-list", type=_int_list, default=[1, 2, 4, 8, 16])
    p.add_argument("--n-points", type=_bounded_int(2), default=4096)
    p.add_argument("--repeats", type=_bounded_int(1), default=3)
    p.add_argument("--methods", default=",".join(bench.DEFAULT_METHODS))
    p.add_argument("--sketch-dim", type=_bounded_int(1), default=8192)
    p.add_argument("--csv", type=Path, default=None)

    p = add("bench-backends", cmd_bench_backends, "time every hot kernel under numba and numpy")
    p.add_argument("--repeats", type=_bounded_int(1), default=5)

    p = add("selftest", cmd_selftest, "run the built-in property suites")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--break-ns", action="store_true", help=argparse.SUPPRESS)
    return parser, cmds


def read_config(path):
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SoapoolError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_args(argv):
    parser, cmds = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        sub = cmds[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in read_config(args.config).items():
            if key not in known or key in ("help", "func"):
                sub.error(f"unknown config key {key!r} for {args.command}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                value = _bool(value)
            defaults[key] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = int(os.environ.get("SOAPOOL_SEED", "0"))
    return args


def _print_config(args):
    for key in sorted(vars(args)):
        if key != "func":
            print(f"config: {key}={getattr(args, key)}", file=sys.stderr)
    print(f"config: backend={BACKEND}", file=sys.stderr)


# -- subcommands ------------------------------------------------------------

def cmd_gen_synth(args):
    world = gen_world(args.places, args.traversals, args.points, args.noise, args.seed)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for t, scans in world.traversals:
        for place, cloud in scans:
            name = f"t{t:02d}_p{place:04d}.lpc"
            formats.save_cloud(out / name, cloud)
            x, y, z = (float(v) for v in world.position(place))
            lines.append(f"{t} {place} {name} {x!r} {y!r} {z!r}")
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} clouds to {out}")
    return EXIT_OK


def cmd_featurize(args):
    cfg = ToyBackboneConfig(args.channels, args.freq_scale, args.seed)
    x = toy_backbone(formats.load_cloud(args.cloud), cfg)
    formats.save_features(args.out, x, args.dtype)
    print(f"d={x.shape[0]} N={x.shape[1]}")
    return EXIT_OK


def cmd_aggregate(args):
    spec = _spec_from(args)
    desc = spec(formats.load_features(args.input))
    record = PlaceRecord(args.id, args.pos, desc)
    if args.db is not None:
        db = load_db(args.db) if args.db.exists() else PlaceDatabase(desc.dim, desc.method_tag)
        db.insert(record)
        save_db(db, args.db)
    if args.out is not None:
        db = PlaceDatabase(desc.dim, desc.method_tag)
        db.insert(record)
        save_db(db, args.out)
    print(f"method_tag={desc.method_tag}")
    print(f"dim={desc.dim}")
    return EXIT_OK


def read_manifest(path):
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                t, place, name, x, y, z = line.split()
                rows.append((int(t), int(place), Path(path).parent / name, [float(x), float(y), float(z)]))
            except ValueError:
                raise SoapoolError(f"{path}:{n}: expected 't place file x y z'")
    return rows


def cmd_build_db(args):
    spec = _spec_from(args)
    cfg = ToyBackboneConfig(args.channels, args.freq_scale, args.backbone_seed)
    db = PlaceDatabase(spec.dim(args.channels), spec.tag)
    for t, place, path, pos in read_manifest(args.manifest):
        if t == args.traversal:
            desc = spec(toy_backbone(formats.load_cloud(path), cfg))
            db.insert(PlaceRecord(record_id(t, place), pos, desc))
    if not len(db):
        raise SoapoolError(f"traversal {args.traversal} not found in {args.manifest}")
    save_db(db, args.out)
    print(f"method_tag={db.method_tag}")
    print(f"dim={db.dim}")
    print(f"records={len(db)}")
    return EXIT_OK


def cmd_eval(args):
    protocol = EvalProtocol(args.threshold, tuple(sorted(set(args.top_n))),
                            args.one_percent, args.mrr)
    report = evaluate(load_db(args.query_db), load_db(args.ref_db), protocol)
    if args.format == "kv":
        print("\n".join(report.lines()))
    else:
        print(f"{'metric':<8}{'value':>10}")
        for key, value in report.metrics.items():
            print(f"{key:<8}{value:>10.4f}")
        print(f"{'queries':<8}{report.num_queries:>10d}")
    return EXIT_OK


def cmd_bench(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rows = bench.tradeoff_rows(args.d, args.k_list, args.n_points, args.repeats, args.seed,
                               methods, args.sketch_dim)
    print(bench.format_table(rows))
    if args.csv is not None:
        bench.write_csv(rows, args.csv)
    return EXIT_OK


def cmd_bench_backends(args):
    print(bench.format_backend_table(bench.compare_backends(args.repeats, args.seed)))
    return EXIT_OK


def cmd_selftest(args):
    results = selftest.run_all(quick=args.quick, break_ns=args.break_ns)
    for r in results:
        print(f"{r.name:<14}{r.passed:>5}/{r.total:<5}{'PASS' if r.ok else 'FAIL'}")
    failed = [r for r in results if not r.ok]
    if failed:
        print(f"counterexample[{failed[0].name}]={selftest.serialize(failed[0].counterexample)}")
        return EXIT_FAIL
    return EXIT_OK


def main(argv=None):
    args = parse_args(sys.argv[1:] if argv is None else argv)
    _print_config(args)
    try:
        return args.func(args)
    except IncomparableDescriptorsError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INCOMPARABLE
    except (SoapoolError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
