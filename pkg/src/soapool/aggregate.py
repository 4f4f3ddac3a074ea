"""Pooling operators mapping a ``(d, N)`` feature matrix to a global descriptor.

Feature matrices are float64 arrays with one row per channel and one column
per point. First-order poolers (``spoc``, ``mac``, ``gem``) give ``d`` values;
second-order poolers vectorize the upper triangle of a square-rooted
covariance (``full_soa``), per-group covariances (``cps``) or an RBF kernel
matrix (``kernel_soa``); ``cbp_ts`` approximates the bilinear map with a
Tensor Sketch.
"""
import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionMismatchError, PartitionMismatchError, SketchOverflowError
from .symmat import NsConfig, as_symmetric, ns_sqrt, tri_len, upper_tri_vec

GEM_CLAMP_FLOOR = 1e-6
# max sketch entries (output_dim x points) materialized at once
_SKETCH_CHUNK_ELEMS = 2 ** 22

METHODS = ("spoc", "mac", "gem", "cov", "cps", "cbp", "kernel")
ALIASES = {
    "full_soa": "cov",
    "full": "cov",
    "isqrt": "cov",
    "covariance": "cov",
    "cbp_ts": "cbp",
    "kernel_soa": "kernel",
}


def canonical_method(name):
    name = str(name).lower()
    name = ALIASES.get(name, name)
    if name not in METHODS:
        raise ConfigError(f"unknown aggregation method {name!r}; expected one of {METHODS}")
    return name


def as_features(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionMismatchError(f"feature matrix must be (d>=1, N>=1), got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ConfigError("feature matrix contains non-finite entries")
    return np.ascontiguousarray(x)


def _canon(value):
    if isinstance(value, (float, np.floating)):
        return float(value).hex()
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ",".join(_canon(v) for v in np.asarray(value, dtype=np.float64).ravel()) + "]"
    return str(value)


def method_tag(method, **params):
    """``<method>-<hash>`` where the hash covers every parameter exactly."""
    body = method + ";" + ";".join(f"{k}={_canon(params[k])}" for k in sorted(params))
    return f"{method}-{hashlib.sha1(body.encode()).hexdigest()[:12]}"


def _ns_params(ns):
    return {"T": int(ns.iterations), "eps": float(ns.trace_epsilon)}


@dataclass(eq=False)
class Descriptor:
    values: np.ndarray
    method_tag: str

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 1:
            raise DimensionMismatchError("descriptor values must be a vector")
        if not np.isfinite(self.values).all():
            raise ConfigError("descriptor contains non-finite values")

    @property
    def dim(self):
        return self.values.size


# -- first-order -------------------------------------------------------------

def spoc(x):
    x = as_features(x)
    return Descriptor(x.mean(axis=1), method_tag("spoc"))


def mac(x):
    x = as_features(x)
    return Descriptor(x.max(axis=1), method_tag("mac"))


def _gem_values(x, p):
    v = np.maximum(x, GEM_CLAMP_FLOOR)
    top = v.max(axis=1, keepdims=True)
    # scaled by the row max so large p cannot overflow
    return top[:, 0] * np.mean((v / top) ** p, axis=1) ** (1.0 / p)


def gem(x, p):
    if not p >= 1:
        raise ConfigError(f"GeM exponent must be >= 1, got {p}")
    x = as_features(x)
    return Descriptor(_gem_values(x, float(p)), method_tag("gem", p=float(p)))


# -- second-order -----------------------------------------------------------

def covariance(x):
    """Sample covariance ``(1/N) Xc Xc^T`` of the centered channel rows."""
    return kernels.covariance(as_features(x))


def full_soa(x, ns=None):
    ns = ns or NsConfig()
    c = upper_tri_vec(ns_sqrt(covariance(x), ns))
    return Descriptor(c, method_tag("cov", **_ns_params(ns)))


@dataclass(frozen=True)
class PartitionConfig:
    k: int
    mode: str = "strict"

    def __post_init__(self):
        if int(self.k) < 1:
            raise ConfigError(f"partition count k must be >= 1, got {self.k}")
        if self.mode not in ("strict", "ragged"):
            raise ConfigError(f"partition mode must be 'strict' or 'ragged', got {self.mode!r}")

    def sizes(self, d):
        k = self.k
        if self.mode == "strict":
            if d % k:
                raise PartitionMismatchError(d, k, "d is not divisible by k")
            return [d // k] * k
        if k > d:
            raise PartitionMismatchError(d, k, "k exceeds d")
        head = -(-d // k)
        last = d - head * (k - 1)
        if last < 1:
            raise PartitionMismatchError(d, k, f"ceil split of {head} leaves no rows for the last group")
        return [head] * (k - 1) + [last]


def partition(x, cfg):
    """Split channels into ``cfg.k`` contiguous row blocks, in order."""
    x = as_features(x)
    groups, start = [], 0
    for size in cfg.sizes(x.shape[0]):
        groups.append(np.ascontiguousarray(x[start:start + size]))
        start += size
    return groups


def softmax(raw):
    raw = np.asarray(raw, dtype=np.float64)
    e = np.exp(raw - raw.max())
    return e / e.sum()


@dataclass
class CpsParams:
    partition: PartitionConfig
    raw_weights: np.ndarray = None
    ns: NsConfig = field(default_factory=NsConfig)

    def __post_init__(self):
        if self.raw_weights is None:
            self.raw_weights = np.zeros(self.partition.k)
        self.raw_weights = np.asarray(self.raw_weights, dtype=np.float64).reshape(-1)
        if self.raw_weights.size != self.partition.k:
            raise ConfigError(
                f"need {self.partition.k} raw weights, got {self.raw_weights.size}")

    @property
    def weights(self):
        return softmax(self.raw_weights)

    @property
    def tag(self):
        return method_tag("cps", k=self.partition.k, w=self.raw_weights, **_ns_params(self.ns))


def group_vectors(x, params):
    """Stack of the per-group normalized covariance vectors, shape ``(k, L)``."""
    if params.partition.mode != "strict":
        raise ConfigError("cps requires equal groups (strict partition mode)")
    return np.stack([upper_tri_vec(ns_sqrt(covariance(g), params.ns))
                     for g in partition(x, params.partition)])


def combine_groups(cs, raw_weights):
    w = softmax(raw_weights)
    z = w[0] * cs[0]
    for i in range(1, len(cs)):
        z = z + w[i] * cs[i]
    return z


def cps_from_covariance(cov, params):
    """CPS from a precomputed ``d x d`` covariance; only diagonal blocks are read."""
    if params.partition.mode != "strict":
        raise ConfigError("cps requires equal groups (strict partition mode)")
    cov = as_symmetric(cov)
    sizes = params.partition.sizes(cov.shape[0])
    edges = np.concatenate([[0], np.cumsum(sizes)])
    cs = np.stack([upper_tri_vec(ns_sqrt(cov[a:b, a:b].copy(), params.ns))
                   for a, b in zip(edges[:-1], edges[1:])])
    return Descriptor(combine_groups(cs, params.raw_weights), params.tag)


def cps(x, params):
    cs = group_vectors(x, params)
    return Descriptor(combine_groups(cs, params.raw_weights), params.tag)


# -- compact bilinear pooling -----------------------------------------------

@dataclass(frozen=True, eq=False)
class SketchConfig:
    output_dim: int
    h1: np.ndarray
    h2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    seed: int

    @classmethod
    def make(cls, d, output_dim, seed=0):
        """Draw hashes and signs from PCG64 seeded by ``(seed, d, output_dim)``.

        Draw order: h1, s1, h2, s2.
        """
        if output_dim < 1 or d < 1:
            raise ConfigError("sketch needs d >= 1 and output_dim >= 1")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, d, output_dim])))
        h1 = rng.integers(0, output_dim, d)
        s1 = 2.0 * rng.integers(0, 2, d) - 1.0
        h2 = rng.integers(0, output_dim, d)
        s2 = 2.0 * rng.integers(0, 2, d) - 1.0
        return cls(int(output_dim), h1, h2, s1, s2, int(seed))

    @property
    def d(self):
        return self.h1.size


def cbp_ts(x, sketch):
    """Tensor Sketch of the mean outer product of the columns.

    Each column is count-sketched twice; the two sketches are circularly
    convolved through the real FFT, accumulated over points and averaged.
    """
    x = as_features(x)
    if x.shape[0] != sketch.d:
        raise DimensionMismatchError(f"sketch built for d={sketch.d}, features have d={x.shape[0]}")
    big_d = sketch.output_dim
    n = x.shape[1]
    chunk = max(1, _SKETCH_CHUNK_ELEMS // big_d)
    acc = np.zeros(big_d // 2 + 1, dtype=np.complex128)
    for start in range(0, n, chunk):
        block = np.ascontiguousarray(x[:, start:start + chunk])
        a = kernels.count_sketch(block, sketch.h1, sketch.s1, big_d)
        b = kernels.count_sketch(block, sketch.h2, sketch.s2, big_d)
        acc += (np.fft.rfft(a, axis=0) * np.fft.rfft(b, axis=0)).sum(axis=1)
    z = np.fft.irfft(acc, n=big_d) / n
    if not np.isfinite(z).all():
        raise SketchOverflowError("sketch overflow: non-finite value in Tensor Sketch")
    return Descriptor(z, method_tag("cbp", D=big_d, seed=sketch.seed))


# -- kernel matrix ------------------------------------------------------------

def rbf_kernel_matrix(x, sigma):
    if not sigma > 0:
        raise ConfigError(f"RBF width must be positive, got {sigma}")
    x = as_features(x)
    xc = np.ascontiguousarray(x - x.mean(axis=1, keepdims=True))
    return np.exp(-kernels.row_sqdist(xc) / (2.0 * sigma * sigma))


def kernel_soa(x, sigma=1.0, ns=None):
    ns = ns or NsConfig()
    k = rbf_kernel_matrix(x, sigma)
    return Descriptor(upper_tri_vec(ns_sqrt(k, ns)),
                      method_tag("kernel", sigma=float(sigma), **_ns_params(ns)))


# -- dispatch ---------------------------------------------------------------

def descriptor_dim(method, d, k=1, sketch_dim=None):
    method = canonical_method(method)
    if method in ("spoc", "mac", "gem"):
        return d
    if method in ("cov", "kernel"):
        return tri_len(d)
    if method == "cps":
        if d % k:
            raise PartitionMismatchError(d, k, "d is not divisible by k")
        return tri_len(d // k)
    if sketch_dim is None:
        raise ConfigError("cbp dimension needs sketch_dim")
    return int(sketch_dim)


@dataclass(frozen=True)
class AggregatorSpec:
    """A pooling method together with every parameter it uses."""

    method: str
    p: float = 3.0
    k: int = 1
    raw_weights: tuple = None
    ns_iters: int = 5
    sketch_dim: int = 8192
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        if self.raw_weights is not None:
            object.__setattr__(self, "raw_weights",
                               tuple(float(w) for w in np.asarray(self.raw_weights).ravel()))
            if len(self.raw_weights) != self.k:
                raise ConfigError(f"need {self.k} raw weights, got {len(self.raw_weights)}")
        if self.method == "gem" and not self.p >= 1:
            raise ConfigError(f"GeM exponent must be >= 1, got {self.p}")
        NsConfig(self.ns_iters)
        PartitionConfig(self.k)

    @property
    def ns(self):
        return NsConfig(self.ns_iters)

    def cps_params(self):
        return CpsParams(PartitionConfig(self.k), self.weights(), self.ns)

    def weights(self):
        if self.raw_weights is None:
            return np.zeros(self.k)
        return np.array(self.raw_weights)

    @property
    def tag(self):
        m = self.method
        if m in ("spoc", "mac"):
            return method_tag(m)
        if m == "gem":
            return method_tag(m, p=float(self.p))
        if m == "cov":
            return method_tag(m, **_ns_params(self.ns))
        if m == "cps":
            return self.cps_params().tag
        if m == "cbp":
            return method_tag(m, D=int(self.sketch_dim), seed=int(self.seed))
        return method_tag(m, sigma=float(self.sigma), **_ns_params(self.ns))

    def dim(self, d):
        return descriptor_dim(self.method, d, self.k, self.sketch_dim)

    def replace(self, **changes):
        return replace(self, **changes)

    def __call__(self, x):
        m = self.method
        if m == "spoc":
            return spoc(x)
        if m == "mac":
            return mac(x)
        if m == "gem":
            return gem(x, self.p)
        if m == "cov":
            return full_soa(x, self.ns)
        if m == "cps":
            return cps(x, self.cps_params())
        if m == "cbp":
            x = as_features(x)
            return cbp_ts(x, SketchConfig.make(x.shape[0], self.sketch_dim, self.seed))
        return kernel_soa(x, self.sigma, self.ns)
