"""Superpoint over-segmentation on a k-NN graph with normal + color edge weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import DEFAULT_KNN_K, NeighborIndex, PointCloud, estimate_normals

_SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class PrimitiveConfig:
    w_n: float = 0.96
    w_c: float = 0.04
    fzs_k: float = 0.06
    min_segment_size: int = 20
    graph_knn: int = 8

    def __post_init__(self):
        if self.w_n < 0 or self.w_c < 0 or self.w_n + self.w_c <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        if self.fzs_k <= 0:
            raise ValueError("fzs_k must be positive")
        if self.min_segment_size < 1 or self.graph_knn < 1:
            raise ValueError("min_segment_size and graph_knn must be >= 1")


@dataclass(frozen=True)
class Partition:
    """Point labels; -1 marks an unassigned point."""

    labels: np.ndarray
    num_segments: int

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Renumber arbitrary ids to 0..k-1 in order of first occurrence, keeping -1."""
        labels = np.asarray(labels, dtype=np.int64)
        out = np.full(labels.shape, -1, dtype=np.int64)
        assigned = labels >= 0
        if assigned.any():
            ids, first, inverse = np.unique(labels[assigned], return_index=True, return_inverse=True)
            rank = np.argsort(np.argsort(first))
            out[assigned] = rank[inverse]
            return cls(out, int(ids.size))
        return cls(out, 0)

    def __len__(self):
        return self.labels.shape[0]

    def members(self):
        """Point ids per segment, each ascending."""
        order = np.argsort(self.labels, kind="stable")
        sorted_labels = self.labels[order]
        start = np.searchsorted(sorted_labels, 0)
        bounds = np.searchsorted(sorted_labels[start:], np.arange(self.num_segments + 1)) + start
        return [order[bounds[s]:bounds[s + 1]] for s in range(self.num_segments)]


def edge_weight(n_a, n_b, c_a, c_b, cfg: PrimitiveConfig) -> float:
    n_a, n_b = np.asarray(n_a, float), np.asarray(n_b, float)
    cos = float(n_a @ n_b) / (np.linalg.norm(n_a) * np.linalg.norm(n_b))
    cos = min(max(cos, -1.0), 1.0)
    dc = np.asarray(c_a, float) - np.asarray(c_b, float)
    return cfg.w_n * (1.0 - cos) / 2.0 + cfg.w_c * float(np.sqrt(dc @ dc)) / _SQRT3


def _edge_weights(normals, colors, a, b, cfg):
    na, nb = normals[a], normals[b]
    cos = np.einsum("ij,ij->i", na, nb) / (np.linalg.norm(na, axis=1) * np.linalg.norm(nb, axis=1))
    cos = np.clip(cos, -1.0, 1.0)
    dc = colors[a] - colors[b]
    return cfg.w_n * (1.0 - cos) / 2.0 + cfg.w_c * np.sqrt(np.einsum("ij,ij->i", dc, dc)) / _SQRT3


def build_primitive_graph(cloud: PointCloud, cfg: PrimitiveConfig, index: NeighborIndex | None = None):
    """Undirected k-NN edges as ``(src, dst, weight)`` arrays, sorted by (weight, min id, max id)."""
    if cloud.normals is None:
        raise ValueError("cloud has no normals; run estimate_normals first")
    n = len(cloud)
    if n < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    k = min(cfg.graph_knn, n - 1)
    index = index or NeighborIndex(cloud.positions)
    nbrs = index.query(k)
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = nbrs.reshape(-1)
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    pairs = np.unique(lo * n + hi)
    lo, hi = pairs // n, pairs % n
    w = _edge_weights(cloud.normals, cloud.colors, lo, hi, cfg)
    order = np.lexsort((hi, lo, w))
    return lo[order], hi[order], w[order]


def segment_graph(edges, n: int, cfg: PrimitiveConfig) -> Partition:
    """Felzenszwalb-Huttenlocher merge sweep followed by a small-segment cleanup pass."""
    if n <= 0:
        raise ValueError("point count must be positive")
    src, dst, w = (np.asarray(e) for e in edges)
    src = np.ascontiguousarray(src, dtype=np.int64)
    dst = np.ascontiguousarray(dst, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if src.size:
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        dw, dlo, dhi = np.diff(w), np.diff(lo), np.diff(hi)
        ok = (dw > 0) | ((dw == 0) & ((dlo > 0) | ((dlo == 0) & (dhi >= 0))))
        if not ok.all():
            raise ValueError("edge list is not sorted by (weight, min id, max id)")
        if lo.min() < 0 or hi.max() >= n:
            raise ValueError("edge endpoint out of range")
    labels = kernels.felzenszwalb(src, dst, w, n, float(cfg.fzs_k), int(cfg.min_segment_size))
    return Partition(np.asarray(labels, dtype=np.int64), int(labels.max()) + 1)


def compute_primitives(cloud: PointCloud, cfg: PrimitiveConfig, knn_k: int = DEFAULT_KNN_K) -> Partition:
    index = NeighborIndex(cloud.positions)
    if cloud.normals is None:
        cloud = estimate_normals(cloud, min(knn_k, len(cloud) - 1), index=index)
    edges = build_primitive_graph(cloud, cfg, index=index)
    return segment_graph(edges, len(cloud), cfg)
