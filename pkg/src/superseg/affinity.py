"""Superpoint affinity graph from multi-view 2D masks."""
from __future__ import annotations

import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, FrameError
from .geometry import PointCloud
from .primitives import Partition
from .projection import (DEFAULT_DEPTH_TOLERANCE, CameraFrame, DepthRaster, PixelFootprint,
                         depth_to_mm, footprint, load_camera, read_pgm16, save_camera, write_pgm16)

DEFAULT_MIN_GAMMA = 1e-4


@dataclass(frozen=True)
class MaskRaster:
    """Row-major mask ids, 0 = unlabeled."""

    ids: np.ndarray  # (height, width)

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if ids.ndim != 2 or ids.min(initial=0) < 0:
            raise ValueError("mask raster must be 2-D with non-negative ids")
        object.__setattr__(self, "ids", ids)

    @property
    def width(self):
        return self.ids.shape[1]

    @property
    def height(self):
        return self.ids.shape[0]


@dataclass(frozen=True)
class Frame:
    camera: CameraFrame
    depth: DepthRaster
    masks: MaskRaster

    def __post_init__(self):
        cam = self.camera
        for what, r in (("depth", self.depth), ("mask", self.masks)):
            if (r.width, r.height) != (cam.width, cam.height):
                raise DimensionMismatchError(
                    f"frame {cam.frame_id}: {what} raster is {r.width}x{r.height}, "
                    f"camera expects {cam.width}x{cam.height}")

    @property
    def frame_id(self):
        return self.camera.frame_id


@dataclass(frozen=True)
class FrameHistogram:
    superpoint: int
    frame_id: int
    counts: dict
    visibility: float


@dataclass
class AffinityGraph:
    """Superpoint nodes with pairwise affinities (-1 = no shared evidence).

    ``histograms[f, i, b]`` counts visible points of superpoint ``i`` on mask
    ``mask_ids[f][b]`` in frame ``frame_ids[f]``; ``visible[f, i]`` counts all
    visible points including those on unlabeled pixels.
    """

    num_superpoints: int
    adjacency: np.ndarray
    centroids: np.ndarray
    sizes: np.ndarray
    members: list
    frame_ids: list = field(default_factory=list)
    mask_ids: list = field(default_factory=list)
    histograms: Optional[np.ndarray] = None
    visible: Optional[np.ndarray] = None
    num_points: int = 0


def _bins(masks: MaskRaster):
    ids = np.unique(masks.ids)
    ids = ids[ids > 0]
    bins = np.searchsorted(ids, masks.ids)
    bins[masks.ids == 0] = -1
    return ids, np.ascontiguousarray(bins, dtype=np.int64)


def _frame_counts(fp: PixelFootprint, masks: MaskRaster, partition: Partition):
    if (masks.width, masks.height) != (fp.width, fp.height):
        raise DimensionMismatchError(
            f"frame {fp.frame_id}: mask raster is {masks.width}x{masks.height}, "
            f"footprint expects {fp.width}x{fp.height}")
    ids, bins = _bins(masks)
    labels = partition.labels[fp.point_ids]
    status = np.where(fp.visible, 2, 1).astype(np.int8)
    counts, visible = kernels.mask_histogram(labels, fp.u, fp.v, status, bins,
                                             partition.num_segments, ids.size)
    return ids, counts, visible


def frame_histograms(fp: PixelFootprint, masks: MaskRaster, partition: Partition) -> list:
    if fp.point_ids.size and fp.point_ids.max() >= len(partition):
        raise DimensionMismatchError("footprint references points outside the partition")
    ids, counts, visible = _frame_counts(fp, masks, partition)
    sizes = np.bincount(partition.labels[partition.labels >= 0], minlength=partition.num_segments)
    out = []
    for s in range(partition.num_segments):
        nz = np.flatnonzero(counts[s])
        hist = {int(ids[b]): int(counts[s, b]) for b in nz}
        out.append(FrameHistogram(s, fp.frame_id, hist, float(visible[s] / sizes[s])))
    return out


def frame_affinity(h_i: FrameHistogram, h_j: FrameHistogram) -> Optional[float]:
    """Cosine similarity of two mask histograms; None when either is empty."""
    if h_i.frame_id != h_j.frame_id:
        raise ValueError(f"histograms come from frames {h_i.frame_id} and {h_j.frame_id}")
    if not h_i.counts or not h_j.counts:
        return None
    dot = sum(c * h_j.counts.get(m, 0) for m, c in h_i.counts.items())
    ni = np.sqrt(sum(c * c for c in h_i.counts.values()))
    nj = np.sqrt(sum(c * c for c in h_j.counts.values()))
    return min(max(dot / (ni * nj), 0.0), 1.0)


def aggregate_affinity(per_frame, min_gamma: float = DEFAULT_MIN_GAMMA) -> Optional[float]:
    """Visibility-weighted mean of ``(affinity, vis_i, vis_j)`` triples."""
    num = 0.0
    den = 0.0
    for a, vi, vj in per_frame:
        g = vi * vj
        if g < min_gamma:
            continue
        num += g * a
        den += g
    return num / den if den > 0 else None


def build_affinity_graph(cloud: PointCloud, partition: Partition, frames, tol: float = DEFAULT_DEPTH_TOLERANCE,
                         min_gamma: float = DEFAULT_MIN_GAMMA, workers: int = 1) -> AffinityGraph:
    """Affinity graph over the partition's superpoints; ``workers`` threads share the frames (0 = all cores)."""
    frames = sorted(frames, key=lambda f: f.frame_id)
    if not frames:
        raise ValueError("at least one frame is required")
    if len(partition) != len(cloud):
        raise DimensionMismatchError("partition length does not match the cloud")
    n_sp = partition.num_segments

    def one(frame):
        fp = footprint(cloud, partition, frame.camera, frame.depth, tol)
        return _frame_counts(fp, frame.masks, partition)

    if workers <= 0:
        workers = os.cpu_count() or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, frames))
    else:
        results = [one(f) for f in frames]

    sizes = np.bincount(partition.labels[partition.labels >= 0], minlength=n_sp).astype(np.float64)
    kmax = max([r[0].size for r in results] + [1])
    hist = np.zeros((len(frames), n_sp, kmax))
    visible = np.zeros((len(frames), n_sp))
    num = np.zeros((n_sp, n_sp))
    den = np.zeros((n_sp, n_sp))
    # ascending frame order keeps the float reduction independent of ``workers``
    for f, (ids, counts, vis) in enumerate(results):
        hist[f, :, :ids.size] = counts
        visible[f] = vis
        kernels.accumulate_frame_affinity(counts, vis / sizes, float(min_gamma), num, den)
    # only the upper triangle is accumulated
    adjacency = np.full((n_sp, n_sp), -1.0)
    ii, jj = np.nonzero(den > 0)
    adjacency[ii, jj] = num[ii, jj] / den[ii, jj]
    adjacency[jj, ii] = adjacency[ii, jj]

    members = partition.members()
    csum = np.zeros((n_sp, 3))
    assigned = partition.labels >= 0
    np.add.at(csum, partition.labels[assigned], cloud.positions[assigned])
    return AffinityGraph(n_sp, adjacency, csum / sizes[:, None], sizes.astype(np.int64), members,
                         [f.frame_id for f in frames], [r[0] for r in results], hist, visible, len(cloud))


# --- frame directory -------------------------------------------------------

_CAMERA_RE = re.compile(r"^(-?\d+)\.json$")


def save_frames(directory, frames):
    os.makedirs(directory, exist_ok=True)
    for fr in frames:
        fid = fr.frame_id
        save_camera(os.path.join(directory, f"{fid}.json"), fr.camera)
        write_pgm16(os.path.join(directory, f"{fid}.depth.pgm"), depth_to_mm(fr.depth))
        write_pgm16(os.path.join(directory, f"{fid}.mask.pgm"), fr.masks.ids)


def load_frames(directory) -> list:
    """Read ``<id>.json``, ``<id>.depth.pgm`` and ``<id>.mask.pgm`` triples, ordered by id."""
    if not os.path.isdir(directory):
        raise FrameError(f"{directory}: frames directory not found")
    ids = sorted(int(m.group(1)) for m in map(_CAMERA_RE.match, os.listdir(directory)) if m)
    if not ids:
        raise FrameError(f"{directory}: no camera files found")
    frames = []
    for fid in ids:
        cam = load_camera(os.path.join(directory, f"{fid}.json"))
        if cam.frame_id != fid:
            raise FrameError(f"{directory}/{fid}.json: frame_id {cam.frame_id} does not match file name")
        for kind in ("depth", "mask"):
            p = os.path.join(directory, f"{fid}.{kind}.pgm")
            if not os.path.isfile(p):
                raise FrameError(f"{p}: missing {kind} file")
        depth = DepthRaster(read_pgm16(os.path.join(directory, f"{fid}.depth.pgm")) / 1000.0)
        masks = MaskRaster(read_pgm16(os.path.join(directory, f"{fid}.mask.pgm")))
        frames.append(Frame(cam, depth, masks))
    return frames
