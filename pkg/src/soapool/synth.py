"""Deterministic synthetic data for end-to-end checks.

The toy backbone is a per-point random Fourier feature map, so permuting the
points of a cloud permutes the feature columns identically. Worlds scatter
places over a fixed arena and revisit each one on every traversal with a
jittered, reshuffled copy of the place's base cloud.
"""
from dataclasses import dataclass

import numpy as np

from .aggregate import AggregatorSpec
from .errors import ConfigError, SizingError
from .learn import Triplet
from .retrieve import DEFAULT_REVISIT_THRESHOLD_M, PlaceDatabase, PlaceRecord

ARENA_M = 1000.0
MIN_PLACE_SPACING_M = 4 * DEFAULT_REVISIT_THRESHOLD_M
SCAN_HALF_WIDTH_M = 15.0
SCAN_HEIGHT_M = 4.0
_PLACEMENT_ATTEMPTS_PER_PLACE = 500

# stream ids mixed into SeedSequence entropy
_PLACES, _BASE, _SCAN, _BACKBONE = 0, 1, 2, 3


def _rng(*key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def as_cloud(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ConfigError(f"point cloud must be (N>=1, 3), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise ConfigError("point cloud has non-finite coordinates")
    return pts


@dataclass(frozen=True)
class ToyBackboneConfig:
    out_channels: int = 16
    frequency_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.out_channels < 2 or self.out_channels % 2:
            raise ConfigError(f"toy backbone needs an even channel count, got {self.out_channels}")
        if not self.frequency_scale > 0:
            raise ConfigError("frequency_scale must be positive")

    def frequencies(self):
        rng = _rng(self.seed, _BACKBONE, self.out_channels)
        return rng.normal(size=(self.out_channels // 2, 3)) * self.frequency_scale


def toy_backbone(cloud, cfg):
    """``(d, N)`` features: rows alternate sin/cos of <omega_i, q_j>."""
    pts = as_cloud(cloud)
    phase = cfg.frequencies() @ pts.T
    out = np.empty((cfg.out_channels, pts.shape[0]))
    out[0::2] = np.sin(phase)
    out[1::2] = np.cos(phase)
    return out


def record_id(traversal, place):
    """Pack ids as ``(traversal << 32) | place``."""
    return (int(traversal) << 32) | int(place)


def split_record_id(rid):
    return int(rid) >> 32, int(rid) & 0xFFFFFFFF


@dataclass(eq=False)
class SynthWorld:
    places: list
    traversals: list
    noise_sigma: float
    seed: int

    def position(self, place_id):
        return self.places[place_id][1]


def _place_positions(num_places, seed):
    s = MIN_PLACE_SPACING_M
    # hexagonal packing bound for discs of diameter s in the padded arena
    if num_places * np.pi * s * s / 4 > 0.9069 * (ARENA_M + s) ** 2:
        raise SizingError(f"{num_places} places cannot be {s} m apart in a {ARENA_M} m arena")
    rng = _rng(seed, _PLACES)
    pts = np.empty((0, 2))
    for _ in range(_PLACEMENT_ATTEMPTS_PER_PLACE * num_places):
        cand = rng.uniform(0.0, ARENA_M, 2)
        if not len(pts) or np.min(np.hypot(*(pts - cand).T)) >= s:
            pts = np.vstack([pts, cand])
            if len(pts) == num_places:
                return pts
    raise SizingError(f"could not place {num_places} places {s} m apart in a {ARENA_M} m arena")


def gen_world(num_places, traversals, points_per_scan, noise_sigma, seed):
    if num_places < 2:
        raise ConfigError("need at least 2 places")
    if traversals < 2:
        raise ConfigError("need at least 2 traversals")
    if points_per_scan < 1:
        raise ConfigError("need at least 1 point per scan")
    if not noise_sigma >= 0:
        raise ConfigError("noise_sigma must be >= 0")
    xy = _place_positions(num_places, seed)
    places = [(i, np.array([x, y, 0.0])) for i, (x, y) in enumerate(xy)]
    lo = np.array([-SCAN_HALF_WIDTH_M, -SCAN_HALF_WIDTH_M, 0.0])
    hi = np.array([SCAN_HALF_WIDTH_M, SCAN_HALF_WIDTH_M, SCAN_HEIGHT_M])
    base = [_rng(seed, _BASE, i).uniform(lo, hi, size=(points_per_scan, 3))
            for i in range(num_places)]
    trav = []
    for t in range(traversals):
        scans = []
        for i in range(num_places):
            rng = _rng(seed, _SCAN, t, i)
            jitter = rng.normal(size=(points_per_scan, 3)) * noise_sigma
            perm = rng.permutation(points_per_scan)
            scans.append((i, (base[i] + jitter)[perm]))
        trav.append((t, scans))
    return SynthWorld(places, trav, float(noise_sigma), int(seed))


def extract_all(world, backbone_cfg, agg_spec):
    """One database per traversal: backbone, then pooling, for every scan."""
    dim = agg_spec.dim(backbone_cfg.out_channels)
    tag = agg_spec.tag
    dbs = []
    for t, scans in world.traversals:
        db = PlaceDatabase(dim, tag)
        for place, cloud in scans:
            desc = agg_spec(toy_backbone(cloud, backbone_cfg))
            db.insert(PlaceRecord(record_id(t, place), world.position(place), desc))
        dbs.append(db)
    return dbs


# -- triplet fixtures for the fitter ----------------------------------------

def make_cps_triplets(num_places=6, per_place=3, group_channels=4, k=3, points=200, seed=0):
    """Triplets where only channel group 0 identifies the place.

    Group 0 of every scan of a place is drawn through that place's fixed
    mixing matrix; the remaining groups get a fresh mixing matrix per scan.
    """
    rng = _rng(seed, 17)
    mixers = [rng.normal(size=(group_channels, group_channels)) for _ in range(num_places)]

    def scan(place):
        rows = [mixers[place] @ rng.normal(size=(group_channels, points))]
        for _ in range(k - 1):
            rows.append(rng.normal(size=(group_channels, group_channels)) @ rng.normal(size=(group_channels, points)))
        return np.vstack(rows)

    scans = [[scan(p) for _ in range(per_place)] for p in range(num_places)]
    triplets = []
    for p in range(num_places):
        for a in range(per_place):
            pos = (a + 1) % per_place
            neg = (p + 1 + a) % num_places
            if neg == p:
                neg = (neg + 1) % num_places
            triplets.append(Triplet(scans[p][a], scans[p][pos], scans[neg][a]))
    return triplets


def make_gem_triplets(num_places=6, per_place=3, channels=4, points=64, peak_points=4, seed=0):
    """Triplets where each place is a set of per-channel peaks over uniform clutter.

    Clutter and peak locations are redrawn for every scan, so the channel mean
    separates places poorly while the channel maximum separates them well.
    """
    rng = _rng(seed, 23)
    peaks = rng.uniform(5.0, 15.0, size=(num_places, channels))

    def scan(place):
        x = rng.uniform(0.0, 5.0, size=(channels, points))
        for c in range(channels):
            x[c, rng.choice(points, peak_points, replace=False)] = peaks[place, c]
        return x

    scans = [[scan(p) for _ in range(per_place)] for p in range(num_places)]
    triplets = []
    for p in range(num_places):
        for a in range(per_place):
            neg = (p + 1 + a) % num_places
            triplets.append(Triplet(scans[p][a], scans[p][(a + 1) % per_place], scans[neg][a]))
    return triplets


def default_backbone(channels=16, seed=0):
    return ToyBackboneConfig(channels, 1.0, seed)


def spec_for(method, **overrides):
    """Small-world defaults used by tests and the self-test.

    The RBF width is 8 because squared distances between channel rows grow
    with the point count; at width 1 a 256-point scan yields K = I.
    """
    params = {"cps": {"k": 2}, "cbp": {"sketch_dim": 1024}, "gem": {"p": 3.0},
              "kernel": {"sigma": 8.0}}.get(method, {})
    params.update(overrides)
    return AggregatorSpec(method, **params)
