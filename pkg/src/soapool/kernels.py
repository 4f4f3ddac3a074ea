"""Hot numeric kernels, each with a numba loop version and a numpy version.

The module-level names (``covariance``, ``jacobi_eigh``, ...) point at the
implementation chosen by ``SOAPOOL_BACKEND``; ``IMPLEMENTATIONS`` exposes both
so tests and the benchmark can compare them directly.

Loop kernels sum sequentially over points so results depend only on the
multiset of columns up to rounding of a fixed-order reduction.
"""
import math

import numpy as np

from ._backend import BACKEND, njit


# -- covariance -------------------------------------------------------------

@njit
def _covariance_nb(x):
    d, n = x.shape
    mu = np.empty(d)
    for i in range(d):
        s = 0.0
        for j in range(n):
            s += x[i, j]
        mu[i] = s / n
    xc = np.empty((d, n))
    for i in range(d):
        for j in range(n):
            xc[i, j] = x[i, j] - mu[i]
    c = np.empty((d, d))
    for i in range(d):
        for k in range(i, d):
            s = 0.0
            for j in range(n):
                s += xc[i, j] * xc[k, j]
            c[i, k] = s / n
            c[k, i] = c[i, k]
    return c


def _covariance_np(x):
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    c = (xc @ xc.T) / n
    return (c + c.T) * 0.5


# -- cyclic Jacobi eigensolver ----------------------------------------------

@njit
def _jacobi_nb(a, tol, max_sweeps):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = math.sqrt(scale)
    if scale == 0.0:
        scale = 1.0
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if math.sqrt(2.0 * off) <= tol * scale:
            return np.diag(a).copy(), v, sweep, True
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return np.diag(a).copy(), v, max_sweeps, False


def _round_robin(n):
    """Tournament schedule: ``n - 1`` rounds (``n`` rounded up to even) of disjoint pairs."""
    m = n + (n % 2)
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(idx[i], idx[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        rounds.append((np.array([a for a, _ in pairs], dtype=np.int64),
                       np.array([b for _, b in pairs], dtype=np.int64)))
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]
    return rounds


def _jacobi_np(a, tol, max_sweeps):
    # parallel ordering: the pairs in a round are disjoint, so all their
    # rotations are applied at once
    n = a.shape[0]
    a = np.array(a, dtype=np.float64, copy=True)
    v = np.eye(n)
    scale = np.linalg.norm(a) or 1.0
    iu = np.triu_indices(n, 1)
    rounds = _round_robin(n) if n > 1 else []
    for sweep in range(max_sweeps + 1):
        if math.sqrt(2.0 * float(np.sum(a[iu] ** 2))) <= tol * scale:
            return np.diag(a).copy(), v, sweep, True
        if sweep == max_sweeps:
            break
        for p, q in rounds:
            apq = a[p, q]
            live = apq != 0.0
            if not live.any():
                continue
            p, q, apq = p[live], q[live], apq[live]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            big = np.abs(theta) > 1e150
            safe = np.where(big, 1.0, theta)
            t = np.where(big, 0.5 / np.where(big, theta, 1.0),
                         np.sign(safe) / (np.abs(safe) + np.sqrt(safe * safe + 1.0)))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            colp, colq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * colp - s * colq
            a[:, q] = s * colp + c * colq
            rowp, rowq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rowp - s[:, None] * rowq
            a[q, :] = s[:, None] * rowp + c[:, None] * rowq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, max_sweeps, False


# -- count sketch -----------------------------------------------------------

@njit
def _count_sketch_nb(x, h, s, out_dim):
    d, n = x.shape
    out = np.zeros((out_dim, n))
    for i in range(d):
        hi = h[i]
        si = s[i]
        for j in range(n):
            out[hi, j] += si * x[i, j]
    return out


def _count_sketch_np(x, h, s, out_dim):
    out = np.zeros((out_dim, x.shape[1]))
    np.add.at(out, h, s[:, None] * x)
    return out


# -- pairwise squared distances between channel rows ------------------------

@njit
def _row_sqdist_nb(x):
    d, n = x.shape
    out = np.zeros((d, d))
    for i in range(d):
        for k in range(i + 1, d):
            s = 0.0
            for j in range(n):
                diff = x[i, j] - x[k, j]
                s += diff * diff
            out[i, k] = s
            out[k, i] = s
    return out


def _row_sqdist_np(x):
    d = x.shape[0]
    out = np.empty((d, d))
    for i in range(d):
        diff = x - x[i]
        out[i] = np.einsum("ij,ij->i", diff, diff)
    out = np.minimum(out, out.T)
    np.fill_diagonal(out, 0.0)
    return out


# -- descriptor-to-query distances ------------------------------------------

@njit
def _sqdist_to_query_nb(db, q):
    m, dim = db.shape
    out = np.empty(m)
    for r in range(m):
        s = 0.0
        for c in range(dim):
            diff = np.float64(db[r, c]) - np.float64(q[c])
            s += diff * diff
        out[r] = s
    return out


def _sqdist_to_query_np(db, q):
    diff = db.astype(np.float64) - q.astype(np.float64)
    return np.einsum("ij,ij->i", diff, diff)


IMPLEMENTATIONS = {
    "covariance": {"numba": _covariance_nb, "numpy": _covariance_np},
    "jacobi_eigh": {"numba": _jacobi_nb, "numpy": _jacobi_np},
    "count_sketch": {"numba": _count_sketch_nb, "numpy": _count_sketch_np},
    "row_sqdist": {"numba": _row_sqdist_nb, "numpy": _row_sqdist_np},
    "sqdist_to_query": {"numba": _sqdist_to_query_nb, "numpy": _sqdist_to_query_np},
}

covariance = IMPLEMENTATIONS["covariance"][BACKEND]
jacobi_eigh = IMPLEMENTATIONS["jacobi_eigh"][BACKEND]
count_sketch = IMPLEMENTATIONS["count_sketch"][BACKEND]
row_sqdist = IMPLEMENTATIONS["row_sqdist"][BACKEND]
sqdist_to_query = IMPLEMENTATIONS["sqdist_to_query"][BACKEND]
