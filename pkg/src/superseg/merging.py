"""Distance-aware region growing over the superpoint graph and box-guided refinement."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .affinity import DEFAULT_MIN_GAMMA, AffinityGraph
from .errors import ConfigError
from .geometry import PointCloud
from .primitives import Partition


@dataclass(frozen=True)
class MergeConfig:
    delta1_schedule: tuple = (0.9, 0.8, 0.7, 0.6, 0.5)
    delta2: float = 0.75
    distance_floor: float = 1.0
    ascending_boxes: bool = True
    exclusion_after_claim: bool = True

    def __post_init__(self):
        sched = tuple(float(t) for t in self.delta1_schedule)
        if not sched:
            raise ValueError("delta1_schedule must not be empty")
        if any(not 0 < t <= 1 for t in sched):
            raise ValueError("delta1_schedule values must lie in (0, 1]")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("delta1_schedule must be strictly descending")
        if not 0 < self.delta2 < 1:
            raise ValueError("delta2 must lie in (0, 1)")
        if self.distance_floor <= 0:
            raise ValueError("distance_floor must be positive")
        object.__setattr__(self, "delta1_schedule", sched)


@dataclass(frozen=True)
class Box3D:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max_corner, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError("box min corner exceeds max corner")
        if np.any(hi - lo <= 0):
            raise ValueError("box has zero volume")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @property
    def volume(self):
        return float(np.prod(self.max_corner - self.min_corner))

    def contains(self, points):
        return np.all((points >= self.min_corner) & (points <= self.max_corner), axis=1)


def merge_confidence(a: float, dist: float, floor: float = 1.0) -> float:
    return a / max(dist, floor)


@dataclass
class GrowResult:
    partition: Partition
    cluster_of: np.ndarray  # superpoint -> representative superpoint id
    merges_per_pass: list
    merges: list = field(default_factory=list)  # (pass, threshold, kept, absorbed, confidence)


def grow_clusters(graph: AffinityGraph, cfg: MergeConfig, min_gamma: float = DEFAULT_MIN_GAMMA) -> GrowResult:
    """Run one merge pass per threshold of ``cfg.delta1_schedule``.

    Each pass walks the pairs that have an affinity, in descending
    confidence order as of the start of the pass, and merges a pair when its
    *current* confidence reaches the threshold. After a merge the cluster's
    histograms are summed and its affinities to all other clusters redone.
    """
    n = graph.num_superpoints
    sched = np.array(cfg.delta1_schedule, dtype=np.float64)
    if graph.histograms is None or graph.histograms.shape[0] == 0:
        hist = np.zeros((0, n, 1))
        vis = np.zeros((0, n))
    else:
        hist = np.ascontiguousarray(graph.histograms)
        vis = np.ascontiguousarray(graph.visible)
    sizes = np.asarray(graph.sizes, dtype=np.float64)
    csum = np.ascontiguousarray(graph.centroids * sizes[:, None])
    roots, merges, lp, li, lj, lc = kernels.region_grow(hist, vis, sizes, csum, sched,
                                                        float(cfg.distance_floor), float(min_gamma))
    total = graph.num_points or int(sizes.sum())
    labels = np.full(total, -1, dtype=np.int64)
    for s, pts in enumerate(graph.members):
        labels[pts] = roots[s]
    log = [(int(p), float(sched[p]), int(i), int(j), float(c)) for p, i, j, c in zip(lp, li, lj, lc)]
    return GrowResult(Partition.from_labels(labels), np.asarray(roots), [int(m) for m in merges], log)


def region_grow(graph: AffinityGraph, cfg: MergeConfig, min_gamma: float = DEFAULT_MIN_GAMMA) -> Partition:
    return grow_clusters(graph, cfg, min_gamma).partition


def refine_with_boxes(labels: Partition, cloud: PointCloud, boxes, cfg: MergeConfig, audit=None) -> Partition:
    """Relabel instances that a detection box captures almost entirely.

    For every box (ascending volume unless ``cfg.ascending_boxes`` is off) and
    every instance with points inside it, sigma is the fraction of that
    instance's points lying in the box; when sigma exceeds ``delta2`` the whole
    instance takes the box's fresh label. Instances claimed this way are
    skipped by later boxes when ``exclusion_after_claim`` is set. Decisions are
    appended to ``audit`` when a list is given.
    """
    if len(labels) != len(cloud):
        raise ValueError("label count does not match the cloud")
    lab = labels.labels.copy()
    if not boxes:
        return Partition.from_labels(lab)
    sign = 1.0 if cfg.ascending_boxes else -1.0
    order = sorted(range(len(boxes)), key=lambda b: (sign * boxes[b].volume, b))
    next_label = int(lab.max(initial=-1)) + 1
    claimed = set()
    for b in order:
        inside = boxes[b].contains(cloud.positions)
        ids, hits = np.unique(lab[inside & (lab >= 0)], return_counts=True)
        used = False
        for inst, hit in zip(ids.tolist(), hits.tolist()):
            if cfg.exclusion_after_claim and inst in claimed:
                if audit is not None:
                    audit.append({"box": b, "instance": inst, "action": "skipped_claimed"})
                continue
            members = lab == inst
            sigma = hit / int(members.sum())
            take = sigma > cfg.delta2
            if take:
                lab[members] = next_label
                used = True
            if audit is not None:
                audit.append({"box": b, "instance": inst, "sigma": sigma,
                              "action": "claimed" if take else "below_threshold",
                              "new_label": next_label if take else None})
        if used:
            claimed.add(next_label)
        next_label += 1
    return Partition.from_labels(lab)


def load_boxes(path) -> list:
    if not os.path.isfile(path):
        raise ConfigError(f"{path}: boxes file not found")
    try:
        with open(path) as fh:
            raw = json.load(fh)
        return [Box3D(np.array(b["min"], float), np.array(b["max"], float)) for b in raw]
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: bad boxes file: {exc}") from None


def save_boxes(path, boxes):
    with open(path, "w") as fh:
        json.dump([{"min": b.min_corner.tolist(), "max": b.max_corner.tolist()} for b in boxes], fh, indent=1)
        fh.write("\n")
