"""Exact k-nearest-neighbor search and point sampling."""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.spatial import cKDTree

from .errors import ArgumentError, StateError

_CHUNK = 8192


def _sqdist(queries, points):
    """Squared Euclidean distances, ``queries`` (M,1,3) or (M,3) against (M,C,3)."""
    diff = queries - points
    return (diff * diff).sum(axis=-1)


class KnnIndex:
    """Exact Euclidean KNN over a fixed set of 3-D points.

    Candidate sets come from a k-d tree; distances are then recomputed directly
    and ordered by ``(distance, index)`` so ties resolve to the lower index.
    The index is read-only after construction and safe to query concurrently.
    """

    def __init__(self, positions):
        pts = np.asarray(positions, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ArgumentError(f"positions must be N x 3, got {pts.shape}")
        if pts.shape[0] < 1:
            raise StateError("cannot index an empty point set")
        if not np.all(np.isfinite(pts)):
            raise StateError("positions contain non-finite values")
        self.positions = np.ascontiguousarray(pts)
        self.positions.flags.writeable = False
        self._tree = cKDTree(self.positions, leafsize=16, balanced_tree=True, compact_nodes=True)

    def __len__(self):
        return self.positions.shape[0]

    def query(self, queries, k: int, return_distance: bool = False):
        """Indices (and optionally distances) of the ``k`` nearest points per query.

        When ``k`` exceeds the point count, each row is padded by repeating its
        farthest neighbor.
        """
        if int(k) != k or k < 1:
            raise ArgumentError(f"k must be a positive integer, got {k}")
        k = int(k)
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim == 1:
            q = q[None, :]
        if q.ndim != 2 or q.shape[1] != 3:
            raise ArgumentError(f"queries must be M x 3, got {q.shape}")
        if not np.all(np.isfinite(q)):
            raise StateError("queries contain non-finite values")
        n = len(self)
        kk = min(k, n)
        idx = np.empty((q.shape[0], kk), dtype=np.int64)
        dist = np.empty((q.shape[0], kk), dtype=np.float64)
        for start in range(0, q.shape[0], _CHUNK):
            sl = slice(start, start + _CHUNK)
            idx[sl], dist[sl] = self._query_exact(q[sl], kk)
        if kk < k:
            pad = k - kk
            idx = np.concatenate([idx, np.repeat(idx[:, -1:], pad, axis=1)], axis=1)
            dist = np.concatenate([dist, np.repeat(dist[:, -1:], pad, axis=1)], axis=1)
        if return_distance:
            return idx, dist
        return idx

    def _query_exact(self, q, k):
        n = len(self)
        m = q.shape[0]
        out_idx = np.empty((m, k), dtype=np.int64)
        out_d2 = np.empty((m, k), dtype=np.float64)
        todo = np.arange(m)
        extra = 8
        while todo.size:
            c = min(n, k + extra)
            _, cand = self._tree.query(q[todo], k=c)
            cand = np.asarray(cand, dtype=np.int64).reshape(todo.size, c)
            d2 = _sqdist(q[todo][:, None, :], self.positions[cand])
            order = np.lexsort((cand, d2), axis=-1)
            cand = np.take_along_axis(cand, order, axis=1)
            d2 = np.take_along_axis(d2, order, axis=1)
            if c == n:
                done = np.ones(todo.size, dtype=bool)
            else:
                # Points beyond the candidate set are at least as far as the
                # farthest candidate; a row is settled only if that bound is
                # strictly beyond its k-th distance (up to rounding slack).
                kth = d2[:, k - 1]
                bound = d2[:, -1]
                done = bound > kth * (1.0 + 1e-9) + 1e-300
            out_idx[todo[done]] = cand[done, :k]
            out_d2[todo[done]] = d2[done, :k]
            todo = todo[~done]
            extra *= 4
        return out_idx, np.sqrt(out_d2)


def build_index(positions) -> KnnIndex:
    return KnnIndex(positions)


def knn(index: KnnIndex, queries, k: int) -> np.ndarray:
    """M x k neighbor indices, nearest first, ties to the lower index."""
    return index.query(queries, k)


@dataclasses.dataclass(frozen=True)
class SampleSpec:
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ArgumentError(f"sample ratio must be in (0, 1], got {self.ratio}")

    def size(self, n: int) -> int:
        return sample_size(n, self.ratio)


def sample_size(n: int, ratio: float) -> int:
    """``max(1, round(ratio * n))`` with halves rounded up."""
    return max(1, int(np.floor(ratio * n + 0.5)))


def random_sample(n: int, spec: SampleSpec) -> np.ndarray:
    """Unique uniformly drawn indices in ``[0, n)``; a pure function of ``(n, spec)``."""
    if n < 1:
        raise ArgumentError("cannot sample from an empty set")
    m = spec.size(n)
    rng = np.random.default_rng(spec.seed)
    return rng.choice(n, size=m, replace=False).astype(np.int64)


def farthest_point_sample(positions, count: int, seed: int = 0, start=None) -> np.ndarray:
    """Greedy max-min selection from a seeded (or given) start point.

    Each pick maximizes the distance to the already selected set; ties go to
    the lower index.
    """
    pts = np.asarray(positions, dtype=np.float64)
    n = pts.shape[0]
    if count > n:
        raise ArgumentError(f"cannot pick {count} points from {n}")
    if count < 1:
        return np.empty(0, dtype=np.int64)
    if start is None:
        start = int(np.random.default_rng(seed).integers(n))
    picked = np.empty(count, dtype=np.int64)
    picked[0] = start
    mind = _sqdist(pts, pts[start])
    for i in range(1, count):
        nxt = int(np.argmax(mind))
        picked[i] = nxt
        np.minimum(mind, _sqdist(pts, pts[nxt]), out=mind)
    return picked
