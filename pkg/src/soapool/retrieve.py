"""Place descriptor database, exact kNN search and retrieval metrics."""
import threading
from dataclasses import dataclass, field

import numpy as np

from . import formats, kernels
from .aggregate import Descriptor
from .errors import (
    ConfigError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyDatabaseError,
    IncomparableDescriptorsError,
    NoValidQueriesError,
)

DEFAULT_REVISIT_THRESHOLD_M = 5.0


@dataclass(eq=False)
class PlaceRecord:
    id: int
    position: np.ndarray
    descriptor: Descriptor

    def __post_init__(self):
        self.id = int(self.id)
        if not 0 <= self.id < 2 ** 64:
            raise ConfigError(f"record id {self.id} does not fit in u64")
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)


class PlaceDatabase:
    """Ordered set of place records sharing one descriptor dim and method tag.

    Descriptors are stored as float32, matching the on-disk format, and
    distances are accumulated in float64. Inserts take a lock; readers work
    on an immutable array snapshot.
    """

    def __init__(self, dim, method_tag):
        if int(dim) < 1:
            raise ConfigError("database dim must be >= 1")
        self.dim = int(dim)
        self.method_tag = str(method_tag)
        self._ids = []
        self._positions = []
        self._values = []
        self._id_set = set()
        self._lock = threading.Lock()
        self._snapshot = None

    @classmethod
    def from_arrays(cls, dim, method_tag, ids, positions, values):
        db = cls(dim, method_tag)
        values = np.asarray(values, dtype=np.float32).reshape(-1, dim)
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        for i, pos, vals in zip(ids, positions, values):
            db._append(int(i), pos, vals)
        return db

    def _append(self, rid, position, values):
        if rid in self._id_set:
            raise DuplicateIdError(f"duplicate record id {rid}")
        self._ids.append(rid)
        self._positions.append(np.array(position, dtype=np.float64))
        self._values.append(np.array(values, dtype=np.float32))
        self._id_set.add(rid)
        self._snapshot = None

    def insert(self, record):
        vals = record.descriptor.values
        if vals.size != self.dim:
            raise DimensionMismatchError(
                f"descriptor dim {vals.size} does not match database dim {self.dim}")
        if record.descriptor.method_tag != self.method_tag:
            raise IncomparableDescriptorsError(
                f"descriptor tag {record.descriptor.method_tag!r} != database tag {self.method_tag!r}")
        with self._lock:
            self._append(record.id, record.position, vals)
        return self

    def arrays(self):
        """``(ids, positions, values)`` snapshot; not invalidated by later inserts."""
        with self._lock:
            if self._snapshot is None:
                n = len(self._ids)
                self._snapshot = (
                    np.array(self._ids, dtype=np.uint64),
                    np.array(self._positions, dtype=np.float64).reshape(n, 3),
                    np.array(self._values, dtype=np.float32).reshape(n, self.dim),
                )
            return self._snapshot

    def __len__(self):
        return len(self._ids)

    def __contains__(self, rid):
        return int(rid) in self._id_set

    def __iter__(self):
        ids, pos, vals = self.arrays()
        for i in range(len(ids)):
            yield PlaceRecord(int(ids[i]), pos[i], Descriptor(vals[i], self.method_tag))

    def __eq__(self, other):
        if not isinstance(other, PlaceDatabase):
            return NotImplemented
        if (self.dim, self.method_tag, len(self)) != (other.dim, other.method_tag, len(other)):
            return False
        return all(a.tobytes() == b.tobytes() for a, b in zip(self.arrays(), other.arrays()))

    def knn(self, query, n, exclude_id=None):
        """Exact Euclidean nearest neighbours as ``[(id, distance), ...]``.

        Ordered by (distance, id); ``exclude_id`` drops one record from the
        candidate set.
        """
        q = query.values if isinstance(query, Descriptor) else np.asarray(query)
        if q.size != self.dim:
            raise DimensionMismatchError(f"query dim {q.size} does not match database dim {self.dim}")
        if n < 1:
            raise ConfigError("n must be >= 1")
        if not len(self):
            raise EmptyDatabaseError("knn on an empty database")
        ids, _, vals = self.arrays()
        q = np.ascontiguousarray(q, dtype=np.float32).reshape(self.dim)
        d2 = kernels.sqdist_to_query(vals, q)
        order = np.lexsort((ids, d2))
        out = []
        for i in order:
            rid = int(ids[i])
            if rid == exclude_id:
                continue
            out.append((rid, float(np.sqrt(d2[i]))))
            if len(out) == n:
                break
        return out


def db_insert(db, record):
    return db.insert(record)


def knn(db, query, n, exclude_id=None):
    return db.knn(query, n, exclude_id)


def save_db(db, path):
    ids, pos, vals = db.arrays()
    formats.write_bytes(path, formats.encode_cdb(db.dim, db.method_tag, ids, pos, vals))


def load_db(path):
    dim, tag, ids, pos, vals = formats.decode_cdb(formats.read_bytes(path))
    return PlaceDatabase.from_arrays(dim, tag, ids, pos, vals)


# -- metrics ----------------------------------------------------------------

def _evaluable(results, ground_truth):
    if len(results) != len(ground_truth):
        raise DimensionMismatchError("need one ranked list per ground-truth set")
    pairs = [(list(r), set(g)) for r, g in zip(results, ground_truth) if len(g)]
    if not pairs:
        raise NoValidQueriesError()
    return pairs


def recall_at_n(results, ground_truth, n):
    """Fraction of queries with a positive among their top ``n`` results.

    Queries whose positive set is empty are left out of the denominator.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    pairs = _evaluable(results, ground_truth)
    hits = sum(1 for ranked, pos in pairs if pos.intersection(ranked[:n]))
    return hits / len(pairs)


def one_percent_n(db_size):
    """``max(1, round(db_size / 100))`` with halves rounded up."""
    if db_size < 1:
        raise ConfigError("db_size must be >= 1")
    return max(1, (int(db_size) + 50) // 100)


def recall_at_one_percent(results, ground_truth, db_size):
    return recall_at_n(results, ground_truth, one_percent_n(db_size))


def mrr(results, ground_truth):
    """Mean reciprocal rank of the first positive (0 when none is returned)."""
    pairs = _evaluable(results, ground_truth)
    total = 0.0
    for ranked, pos in pairs:
        for rank, rid in enumerate(ranked, start=1):
            if rid in pos:
                total += 1.0 / rank
                break
    return total / len(pairs)


@dataclass(frozen=True)
class EvalProtocol:
    revisit_threshold_m: float = DEFAULT_REVISIT_THRESHOLD_M
    top_ns: tuple = (1, 5)
    report_one_percent: bool = True
    report_mrr: bool = True

    def __post_init__(self):
        object.__setattr__(self, "top_ns", tuple(int(n) for n in self.top_ns))
        if not self.revisit_threshold_m > 0:
            raise ConfigError("revisit threshold must be positive")
        if not self.top_ns or min(self.top_ns) < 1 or list(self.top_ns) != sorted(self.top_ns):
            raise ConfigError(f"top_ns must be positive and ascending, got {self.top_ns}")


@dataclass
class EvalReport:
    metrics: dict = field(default_factory=dict)
    num_queries: int = 0
    retrieved: int = 0

    def lines(self):
        out = [f"{k}={v:.4f}" for k, v in self.metrics.items()]
        out.append(f"queries={self.num_queries}")
        return out


def ground_truth_sets(query_db, reference_db, threshold):
    """Reference ids within ``threshold`` metres of each query (self excluded)."""
    q_ids, q_pos, _ = query_db.arrays()
    r_ids, r_pos, _ = reference_db.arrays()
    sets = []
    for qid, qp in zip(q_ids, q_pos):
        dist = np.sqrt(((r_pos - qp) ** 2).sum(axis=1))
        sets.append({int(r) for r, dd in zip(r_ids, dist) if dd <= threshold and r != qid})
    return sets


def evaluate(query_db, reference_db, protocol=None):
    """Run every query against the reference database and report metrics.

    A reference record sharing the query's id is never a candidate.
    """
    protocol = protocol or EvalProtocol()
    if query_db.method_tag != reference_db.method_tag:
        raise IncomparableDescriptorsError(
            f"incomparable descriptors: {query_db.method_tag!r} vs {reference_db.method_tag!r}")
    if query_db.dim != reference_db.dim:
        raise IncomparableDescriptorsError(
            f"incomparable descriptors: dim {query_db.dim} vs {reference_db.dim}")
    if not len(reference_db):
        raise EmptyDatabaseError("reference database is empty")
    gt = ground_truth_sets(query_db, reference_db, protocol.revisit_threshold_m)
    n_pct = one_percent_n(len(reference_db))
    n_max = max(protocol.top_ns + ((n_pct,) if protocol.report_one_percent else ()))
    results, truths = [], []
    for record, positives in zip(query_db, gt):
        if not positives:
            continue
        ranked = reference_db.knn(record.descriptor, n_max, exclude_id=record.id)
        results.append([rid for rid, _ in ranked])
        truths.append(positives)
    if not results:
        raise NoValidQueriesError()
    metrics = {f"R@{n}": recall_at_n(results, truths, n) for n in protocol.top_ns}
    if protocol.report_one_percent:
        metrics["R@1%"] = recall_at_n(results, truths, n_pct)
    if protocol.report_mrr:
        metrics["MRR"] = mrr(results, truths)
    return EvalReport(metrics, len(results), n_max)


def merge(databases):
    """Concatenate databases that share dim and method tag."""
    databases = list(databases)
    first = databases[0]
    out = PlaceDatabase(first.dim, first.method_tag)
    for db in databases:
        if (db.dim, db.method_tag) != (first.dim, first.method_tag):
            raise IncomparableDescriptorsError("cannot merge databases with different tags or dims")
        ids, pos, vals = db.arrays()
        for i, p, v in zip(ids, pos, vals):
            out._append(int(i), p, v)
    return out
