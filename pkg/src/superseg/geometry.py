"""Point cloud container, exact k-nearest-neighbour index and PCA normals."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import kernels

DEFAULT_KNN_K = 30
_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        col = np.ascontiguousarray(self.colors, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must have shape (N, 3), got {pos.shape}")
        if col.shape != pos.shape:
            raise ValueError(f"colors shape {col.shape} does not match positions {pos.shape}")
        if pos.shape[0] < 1:
            raise ValueError("empty cloud")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if col.min() < 0.0 or col.max() > 1.0:
            raise ValueError("color channels must lie in [0, 1]")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        if self.normals is not None:
            nrm = np.ascontiguousarray(self.normals, dtype=np.float64)
            if nrm.shape != pos.shape:
                raise ValueError(f"normals shape {nrm.shape} does not match positions {pos.shape}")
            if np.any(np.abs(np.linalg.norm(nrm, axis=1) - 1.0) > 1e-6):
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)

    def __len__(self):
        return self.positions.shape[0]

    def with_normals(self, normals) -> "PointCloud":
        return replace(self, normals=normals)


def _sqdist(points, q):
    d = points - q
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


class NeighborIndex:
    """Exact k-NN over a fixed set of positions.

    Results exclude the query point and are ordered by ascending distance,
    ties broken by ascending point index. A kd-tree proposes candidates;
    rows whose k-th distance might be tied with an unseen point are
    resolved exactly with a ball query.
    """

    _PAD = 4

    def __init__(self, positions):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.n = self.positions.shape[0]
        self._tree = cKDTree(self.positions)

    def query(self, k: int, ids=None) -> np.ndarray:
        """Neighbours of every point in ``ids`` (default: all), shape (len(ids), k)."""
        n = self.n
        if not 1 <= k <= n - 1:
            raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
        ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise IndexError("query id out of range")
        P = self.positions
        kq = min(k + 1 + self._PAD, n)
        _, cand = self._tree.query(P[ids], k=kq)
        cand = np.asarray(cand, dtype=np.int64).reshape(len(ids), kq)
        d2 = _sqdist(P[cand], P[ids][:, None, :])
        is_self = cand == ids[:, None]
        d2 = np.where(is_self, -1.0, d2)
        # index order first, then a stable distance sort gives the tie rule
        o = np.argsort(cand, axis=1)
        cand = np.take_along_axis(cand, o, 1)
        d2 = np.take_along_axis(d2, o, 1)
        o = np.argsort(d2, axis=1, kind="stable")
        cand = np.take_along_axis(cand, o, 1)
        d2 = np.take_along_axis(d2, o, 1)
        has_self = is_self.any(axis=1)
        out = cand[:, 1:k + 1].copy()
        if kq == n:
            exact = has_self
        else:
            kth = d2[:, k]
            exact = has_self & (d2[:, -1] > kth * (1.0 + 1e-9) + 1e-300)
        for r in np.flatnonzero(~exact):
            out[r] = self._exact_row(int(ids[r]), k)
        return out

    def _exact_row(self, q, k):
        P = self.positions
        radius = None
        kq = k + 1 + self._PAD
        while True:
            kq = min(kq * 2, self.n)
            dist, _ = self._tree.query(P[q], k=kq)
            radius = float(np.max(dist)) * (1.0 + 1e-6) + 1e-12
            cand = np.array(self._tree.query_ball_point(P[q], radius), dtype=np.int64)
            cand = cand[cand != q]
            if cand.size >= k or kq == self.n:
                break
        d2 = _sqdist(P[cand], P[q])
        order = np.lexsort((cand, d2))
        return cand[order[:k]]


def knn(index: NeighborIndex, query: int, k: int) -> list:
    if not 0 <= query < index.n:
        raise IndexError(f"query id {query} out of range for {index.n} points")
    return index.query(k, ids=[query])[0].tolist()


def canonical_orientation(normals):
    """Flip each normal so its largest-magnitude component is positive (earlier axis wins ties)."""
    normals = np.asarray(normals, dtype=np.float64)
    axis = np.argmax(np.abs(normals), axis=1)
    sign = np.where(normals[np.arange(len(normals)), axis] < 0, -1.0, 1.0)
    return normals * sign[:, None]


def estimate_normals(cloud: PointCloud, k: int = DEFAULT_KNN_K, index: Optional[NeighborIndex] = None) -> PointCloud:
    """PCA normals from each point plus its ``k`` nearest neighbours.

    Covariances are accumulated in ascending neighbour index so the result
    does not depend on how the neighbour set was discovered. Fully
    coincident neighbourhoods get (0, 0, 1).
    """
    n = len(cloud)
    if k < 3:
        raise ValueError(f"k must be at least 3, got {k}")
    if k >= n:
        raise ValueError(f"k must be smaller than the point count ({n}), got {k}")
    index = index or NeighborIndex(cloud.positions)
    nbrs = index.query(k)
    hood = np.sort(np.concatenate([np.arange(n)[:, None], nbrs], axis=1), axis=1)
    cov = kernels.neighbor_covariances(cloud.positions, np.ascontiguousarray(hood))
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    degenerate = np.trace(cov, axis1=1, axis2=2) <= 0.0
    normals[degenerate] = _UP
    return cloud.with_normals(canonical_orientation(normals))
