"""Gradients for the learnable pooling scalars and a small triplet fitter.

Only two parameter families are trainable here: the CPS group logits (the
descriptor is linear in the softmaxed weights) and the GeM exponent (closed
form). Nothing is backpropagated through the square-root iteration.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .aggregate import (
    AggregatorSpec,
    Descriptor,
    GEM_CLAMP_FLOOR,
    _gem_values,
    as_features,
    combine_groups,
    group_vectors,
    softmax,
)
from .errors import ConfigError, DimensionMismatchError, FitDivergenceError

log = logging.getLogger(__name__)


def _vec(d):
    return d.values if isinstance(d, Descriptor) else np.asarray(d, dtype=np.float64)


def softmax_vjp(raw, g):
    """Vector-Jacobian product of softmax at ``raw`` with cotangent ``g``."""
    w = softmax(raw)
    g = np.asarray(g, dtype=np.float64)
    return w * (g - np.dot(w, g))


def grad_cps_from_groups(cs, raw_weights, upstream):
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cs.shape[1:]:
        raise DimensionMismatchError(
            f"upstream has length {upstream.size}, descriptor has {cs.shape[1]}")
    return softmax_vjp(raw_weights, cs @ upstream)


def grad_cps_weights(x, params, upstream):
    """d<upstream, cps(x)> / d raw_weights."""
    return grad_cps_from_groups(group_vectors(x, params), params.raw_weights, upstream)


def grad_gem_p(x, p, upstream):
    """d<upstream, gem(x, p)> / dp, evaluated in max-scaled form."""
    if not p >= 1:
        raise ConfigError(f"GeM exponent must be >= 1, got {p}")
    x = as_features(x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0],):
        raise DimensionMismatchError(
            f"upstream has length {upstream.size}, expected {x.shape[0]}")
    v = np.maximum(x, GEM_CLAMP_FLOOR)
    top = v.max(axis=1, keepdims=True)
    rp = (v / top) ** p
    s = rp.sum(axis=1)
    g = _gem_values(x, p)
    log_m = p * np.log(top[:, 0]) + np.log(s / x.shape[1])
    weighted_log = (rp * np.log(v)).sum(axis=1) / s
    dg = g * (-log_m / p ** 2 + weighted_log / p)
    return float(np.dot(upstream, dg))


def triplet_loss(a, p, n, margin):
    a, p, n = _vec(a), _vec(p), _vec(n)
    if not a.shape == p.shape == n.shape:
        raise DimensionMismatchError("triplet descriptors differ in dimension")
    return max(0.0, float(np.linalg.norm(a - p) - np.linalg.norm(a - n) + margin))


def triplet_loss_grads(a, p, n, margin):
    """Loss and its (sub)gradients with respect to the three descriptors."""
    a, p, n = _vec(a), _vec(p), _vec(n)
    dp, dn = a - p, a - n
    lp, ln = np.linalg.norm(dp), np.linalg.norm(dn)
    loss = lp - ln + margin
    zero = np.zeros_like(a)
    if loss <= 0:
        return 0.0, zero, zero, zero
    up = dp / lp if lp > 0 else zero
    un = dn / ln if ln > 0 else zero
    return float(loss), up - un, -up, un


@dataclass
class Triplet:
    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        self.anchor = as_features(self.anchor)
        self.positive = as_features(self.positive)
        self.negative = as_features(self.negative)
        if not self.anchor.shape[0] == self.positive.shape[0] == self.negative.shape[0]:
            raise DimensionMismatchError("triplet members must share the channel count")

    def members(self):
        return self.anchor, self.positive, self.negative


@dataclass(frozen=True)
class FitConfig:
    margin: float = 0.5
    learning_rate: float = 0.01
    epochs: int = 100

    def __post_init__(self):
        if not self.margin > 0:
            raise ConfigError("margin must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class FitResult:
    spec: AggregatorSpec
    losses: list = field(default_factory=list)


def _cps_epoch(groups, raw, margin):
    total, grad = 0.0, np.zeros_like(raw)
    for cs_a, cs_p, cs_n in groups:
        a, p, n = (combine_groups(cs, raw) for cs in (cs_a, cs_p, cs_n))
        loss, ga, gp, gn = triplet_loss_grads(a, p, n, margin)
        total += loss
        if loss > 0:
            grad += (grad_cps_from_groups(cs_a, raw, ga)
                     + grad_cps_from_groups(cs_p, raw, gp)
                     + grad_cps_from_groups(cs_n, raw, gn))
    return total / len(groups), grad / len(groups)


def _gem_epoch(triplets, p, margin):
    total, grad = 0.0, 0.0
    for t in triplets:
        a, pos, n = (_gem_values(x, p) for x in t.members())
        loss, ga, gp, gn = triplet_loss_grads(a, pos, n, margin)
        total += loss
        if loss > 0:
            grad += (grad_gem_p(t.anchor, p, ga) + grad_gem_p(t.positive, p, gp)
                     + grad_gem_p(t.negative, p, gn))
    return total / len(triplets), grad / len(triplets)


def fit(triplets, spec, cfg):
    """Full-batch gradient descent on the mean triplet margin loss.

    ``gem`` specs fit the exponent (projected back to ``p >= 1``); ``cps``
    specs fit the raw group logits. Returns the fitted spec and the mean loss
    recorded at the start of each epoch.
    """
    triplets = list(triplets)
    if not triplets:
        raise ConfigError("fit needs at least one triplet")
    if spec.method not in ("gem", "cps"):
        raise ConfigError(f"method {spec.method!r} has no learnable scalars")
    losses = []
    if spec.method == "cps":
        params = spec.cps_params()
        groups = [tuple(group_vectors(x, params) for x in t.members()) for t in triplets]
        raw = spec.weights()
        for epoch in range(cfg.epochs):
            loss, grad = _cps_epoch(groups, raw, cfg.margin)
            if not np.isfinite(loss) or not np.isfinite(grad).all():
                raise FitDivergenceError(epoch)
            losses.append(loss)
            raw = raw - cfg.learning_rate * grad
        fitted = spec if cfg.epochs == 0 else spec.replace(raw_weights=tuple(raw))
    else:
        p = float(spec.p)
        for epoch in range(cfg.epochs):
            loss, grad = _gem_epoch(triplets, p, cfg.margin)
            if not (np.isfinite(loss) and np.isfinite(grad)):
                raise FitDivergenceError(epoch)
            losses.append(loss)
            p = max(1.0, p - cfg.learning_rate * grad)
        fitted = spec if cfg.epochs == 0 else spec.replace(p=p)
    if losses:
        log.debug("fit %s: loss %.6g -> %.6g over %d epochs",
                  spec.method, losses[0], losses[-1], len(losses))
    return FitResult(fitted, losses)


def central_difference(f, theta, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at vector ``theta``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2 * h)
    return grad
