"""Built-in property suites run by ``soapool selftest``.

Each suite returns a :class:`SuiteResult`; the first failing case is kept as
a JSON-serializable counterexample.
"""
import json
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aggregate as agg
from . import formats
from .errors import BadMagicError, TruncatedPayloadError, VersionMismatchError
from .learn import central_difference, grad_cps_weights, grad_gem_p
from .retrieve import PlaceDatabase, PlaceRecord, load_db, mrr, recall_at_n, save_db
from .symmat import NsConfig, ns_sqrt, relative_frobenius, sqrt_eig, upper_tri_vec
from .synth import ToyBackboneConfig, toy_backbone

# T used for NS-vs-eig agreement; trace normalization needs about
# log(d)/log(2.25) steps before quadratic convergence, so 7 is too few at d=64
SELFTEST_NS_ITERS = 20
NS_TOL = 1e-4
PERM_TOL = 1e-12


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    total: int = 0
    counterexample: dict = field(default=None)

    @property
    def ok(self):
        return self.passed == self.total

    def record(self, ok, **case):
        self.total += 1
        if ok:
            self.passed += 1
        elif self.counterexample is None:
            self.counterexample = case


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def serialize(case):
    return json.dumps({k: _jsonable(v) for k, v in case.items()}, sort_keys=True)


def random_spd(rng, dim, cond):
    """Random orthogonal basis with log-spaced eigenvalues from 1 down to 1/cond."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    ev = np.geomspace(1.0, 1.0 / cond, dim)
    m = (q * ev) @ q.T
    return (m + m.T) * 0.5


def suite_dims(quick):
    res = SuiteResult("dims")
    for method, d, k, want in (("cov", 256, 1, 32896), ("cps", 256, 2, 8256), ("cps", 256, 16, 136)):
        got = agg.descriptor_dim(method, d, k)
        res.record(got == want, method=method, d=d, k=k, got=got, want=want)
    rng = np.random.default_rng(0)
    for d in (16, 32) if quick else (16, 32, 64):
        x = rng.standard_normal((d, 20))
        for k in (1, 2, 4, 8, 16):
            got = agg.AggregatorSpec("cps", k=k)(x).dim
            res.record(got == agg.descriptor_dim("cps", d, k), d=d, k=k, got=got)
    return res


def suite_ns_oracle(quick, break_ns=False):
    res = SuiteResult("ns_oracle")
    iters = 1 if break_ns else SELFTEST_NS_ITERS
    rng = np.random.default_rng(1)
    cases = [(32, 1e3)]  # ill-conditioned fixture
    cases += [(int(rng.integers(2, 17 if quick else 65)), float(rng.uniform(1, 1e3)))
              for _ in range(10 if quick else 40)]
    for dim, cond in cases:
        m = random_spd(rng, dim, cond)
        err = relative_frobenius(ns_sqrt(m, NsConfig(iters)), sqrt_eig(m))
        res.record(err <= NS_TOL, dim=dim, cond=cond, iterations=iters, rel_error=err)
    for seed in range(5 if quick else 20):
        m = random_spd(np.random.default_rng(100 + seed), 16, 1e2)
        ref = sqrt_eig(m)
        errs = [relative_frobenius(ns_sqrt(m, NsConfig(t)), ref) for t in range(1, 11)]
        res.record(all(b <= a for a, b in zip(errs, errs[1:])), seed=seed, errors=errs)
    return res


def _aggregators(d, n):
    return {
        "spoc": agg.spoc,
        "mac": agg.mac,
        "gem": lambda x: agg.gem(x, 3.0),
        "covariance": lambda x: agg.covariance(x).ravel(),
        "full_soa": agg.full_soa,
        "cps": lambda x: agg.cps(x, agg.CpsParams(agg.PartitionConfig(2), np.array([0.3, -0.2]))),
        "cbp": lambda x: agg.cbp_ts(x, agg.SketchConfig.make(d, 256, 0)),
        "kernel": lambda x: agg.kernel_soa(x, np.sqrt(n)),
    }


def _values(d):
    return d.values if isinstance(d, agg.Descriptor) else d


def suite_permutation(quick):
    res = SuiteResult("permutation")
    rng = np.random.default_rng(2)
    for case in range(5 if quick else 30):
        d, n = 2 * int(rng.integers(1, 9)), int(rng.integers(2, 120))
        x = rng.standard_normal((d, n))
        perm = rng.permutation(n)
        for name, fn in _aggregators(d, n).items():
            diff = float(np.max(np.abs(_values(fn(x)) - _values(fn(x[:, perm])))))
            res.record(diff <= PERM_TOL, aggregator=name, case=case, d=d, n=n, max_abs_diff=diff)
    cfg = ToyBackboneConfig(8, 1.0, 3)
    cloud = rng.uniform(-10, 10, size=(64, 3))
    perm = rng.permutation(64)
    for name, fn in _aggregators(8, 64).items():
        diff = float(np.max(np.abs(_values(fn(toy_backbone(cloud, cfg)))
                                   - _values(fn(toy_backbone(cloud[perm], cfg))))))
        res.record(diff <= PERM_TOL, aggregator=name, end_to_end=True, max_abs_diff=diff)
    return res


def suite_structure(quick):
    res = SuiteResult("cps_structure")
    rng = np.random.default_rng(3)
    for case in range(10 if quick else 50):
        d = int(rng.choice([4, 8, 16]))
        x = rng.standard_normal((d, int(rng.integers(2, 80))))
        full = agg.full_soa(x).values
        one = agg.cps(x, agg.CpsParams(agg.PartitionConfig(1), rng.standard_normal(1))).values
        res.record(full.tobytes() == one.tobytes(), check="k1_reduction", case=case, d=d)
        k = 2 if d == 4 else 4
        i = int(rng.integers(k))
        raw = np.full(k, -800.0)
        raw[i] = 0.0
        z = agg.cps(x, agg.CpsParams(agg.PartitionConfig(k), raw)).values
        grp = agg.partition(x, agg.PartitionConfig(k))[i]
        want = upper_tri_vec(ns_sqrt(agg.covariance(grp)))
        res.record(np.array_equal(z, want), check="one_hot_block", case=case, d=d, k=k, group=i)
    return res


def suite_covariance(quick):
    res = SuiteResult("covariance")
    rng = np.random.default_rng(4)
    for case in range(20 if quick else 100):
        d, n = int(rng.integers(1, 17)), int(rng.integers(1, 101))
        x = rng.standard_normal((d, n))
        mu = x.mean(axis=1)
        want = sum(np.outer(x[:, j] - mu, x[:, j] - mu) for j in range(n)) / n
        err = relative_frobenius(agg.covariance(x), want)
        res.record(err <= 1e-12, case=case, d=d, n=n, rel_error=err)
    return res


def _grad_ok(analytic, numeric):
    analytic, numeric = np.atleast_1d(analytic), np.atleast_1d(numeric)
    for a, b in zip(analytic, numeric):
        if abs(b) < 1e-2:
            if abs(a - b) > 1e-8:
                return False
        elif abs(a - b) > 1e-6 * abs(b):
            return False
    return True


def suite_gradients(quick):
    res = SuiteResult("gradients")
    rng = np.random.default_rng(5)
    for case in range(10 if quick else 50):
        x = rng.standard_normal((16, 40))
        params = agg.CpsParams(agg.PartitionConfig(4), rng.standard_normal(4))
        up = rng.standard_normal(agg.descriptor_dim("cps", 16, 4))
        ana = grad_cps_weights(x, params, up)
        num = central_difference(
            lambda r: float(up @ agg.cps(x, agg.CpsParams(params.partition, r)).values),
            params.raw_weights)
        res.record(_grad_ok(ana, num), op="grad_cps_weights", case=case, analytic=ana, numeric=num)
        xg = rng.uniform(0.0, 2.0, size=(8, 30))
        p = float(rng.uniform(1.0, 6.0))
        upg = rng.standard_normal(8)
        ana = grad_gem_p(xg, p, upg)
        num = central_difference(lambda q: float(upg @ agg.gem(xg, q[0]).values), [p])[0]
        res.record(_grad_ok(ana, num), op="grad_gem_p", case=case, p=p, analytic=ana, numeric=num)
    return res


def suite_roundtrip(quick):
    res = SuiteResult("roundtrip")
    rng = np.random.default_rng(6)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        db = PlaceDatabase(12, "selftest-tag")
        for i in range(20 if quick else 100):
            db.insert(PlaceRecord(int(rng.integers(0, 2 ** 63)) + i, rng.standard_normal(3),
                                  agg.Descriptor(rng.standard_normal(12), "selftest-tag")))
        path = tmp / "db.cdb"
        save_db(db, path)
        blob = path.read_bytes()
        again = load_db(path)
        save_db(again, tmp / "db2.cdb")
        res.record(again == db and (tmp / "db2.cdb").read_bytes() == blob, check="cdb_roundtrip")
        x = rng.standard_normal((6, 33))
        for dt in ("f32", "f64"):
            b = formats.encode_lfm(x, dt)
            res.record(formats.encode_lfm(formats.decode_lfm(b), dt) == b, check=f"lfm_{dt}")
        pts = rng.standard_normal((17, 3))
        b = formats.encode_lpc(pts)
        res.record(np.array_equal(formats.decode_lpc(b), pts), check="lpc_roundtrip")
        corruptions = {
            "magic": (b"XDB1" + blob[4:], BadMagicError),
            "version": (blob[:4] + b"\x02\x00" + blob[6:], VersionMismatchError),
            "truncation": (blob[:-7], TruncatedPayloadError),
        }
        for name, (bad, exc) in corruptions.items():
            try:
                formats.decode_cdb(bad)
                ok = False
            except exc:
                ok = True
            except Exception:
                ok = False
            res.record(ok, check=f"corrupt_{name}")
    return res


def suite_metrics(quick):
    res = SuiteResult("metrics")
    gt = [{1}, {1}, {1}]
    res.record(recall_at_n([[1, 2], [1, 3], [1, 4]], gt, 1) == 1.0, fixture="all_top1")
    ranks = [[1, 9, 9, 9, 9], [9, 1, 9, 9, 9], [9, 9, 1, 9, 9], [9, 9, 9, 9, 1]]
    res.record(recall_at_n(ranks, [{1}] * 4, 1) == 0.25, fixture="ranks_1_2_3_5")
    got = mrr([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]], [{1}] * 3)
    res.record(abs(got - 7 / 12) <= 1e-9, fixture="mrr_1_2_4", got=got)
    return res


def run_all(quick=False, break_ns=False):
    return [
        suite_dims(quick),
        suite_ns_oracle(quick, break_ns),
        suite_permutation(quick),
        suite_structure(quick),
        suite_covariance(quick),
        suite_gradients(quick),
        suite_roundtrip(quick),
        suite_metrics(quick),
    ]
