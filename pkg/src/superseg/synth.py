"""Synthetic multi-view scenes with exact ground truth.

Objects are axis-aligned boxes and plane patches. Depth and mask rasters are
ray cast analytically, then masks can be corrupted with part-level splits and
boundary noise to imitate an imperfect 2D segmenter.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .affinity import Frame, MaskRaster, save_frames
from .evaluation import write_labels
from .geometry import PointCloud
from .merging import Box3D, save_boxes
from .plyio import save_ply
from .primitives import Partition
from .projection import CameraFrame, DepthRaster

_UP = np.array([0.0, 0.0, 1.0])
_EPS = 1e-9


@dataclass
class SceneObject:
    kind: str  # "box" or "plane"; a plane has exactly one zero-extent axis
    min: list
    max: list
    color: list
    part_of: Optional[int] = None  # index of the object whose instance this primitive extends

    def __post_init__(self):
        lo, hi = np.asarray(self.min, float), np.asarray(self.max, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo > hi):
            raise ValueError("object corners must be 3-vectors with min <= max")
        flat = int(np.sum(hi - lo <= 0))
        if self.kind == "box" and flat:
            raise ValueError("box objects need positive extent on every axis")
        if self.kind == "plane" and flat != 1:
            raise ValueError("plane objects need exactly one zero-extent axis")
        if self.kind not in ("box", "plane"):
            raise ValueError(f"unknown object kind {self.kind!r}")
        c = np.asarray(self.color, float)
        if c.shape != (3,) or c.min() < 0 or c.max() > 1:
            raise ValueError("object color must be an RGB triple in [0, 1]")


@dataclass
class Orbit:
    radius: float = 3.6
    height: float = 2.2
    count: int = 12
    target: list = field(default_factory=lambda: [0.0, 0.0, 0.3])
    phase: float = 0.0
    width: int = 640
    height_px: int = 480
    fx: float = 525.0
    fy: float = 525.0


@dataclass
class MaskCorruption:
    part_split_prob: float = 0.0
    # "longer", "x" (split columns), "y" (split rows) cut in image space, so the cut moves
    # between views; "lid" separates an object's upward-facing top from the rest in every view
    split_axis_policy: str = "longer"
    boundary_noise_px: int = 0


@dataclass
class Noise:
    color_sigma: float = 0.0
    position_sigma: float = 0.0


@dataclass
class SceneSpec:
    objects: list
    room_min: list = field(default_factory=lambda: [-2.0, -2.0, 0.0])
    room_max: list = field(default_factory=lambda: [2.0, 2.0, 2.5])
    points_per_m2: float = 2000.0
    orbit: Optional[Orbit] = field(default_factory=Orbit)
    cameras: list = field(default_factory=list)  # explicit camera dicts, used when orbit is None
    mask_corruption: MaskCorruption = field(default_factory=MaskCorruption)
    noise: Noise = field(default_factory=Noise)
    seed: int = 0

    def __post_init__(self):
        if not self.objects:
            raise ValueError("a scene needs at least one object")
        if self.orbit is None and not self.cameras:
            raise ValueError("a scene needs at least one camera")
        if self.orbit is not None and self.orbit.count < 1:
            raise ValueError("orbit needs at least one camera")
        if not 0 <= self.mask_corruption.part_split_prob <= 1:
            raise ValueError("part_split_prob must lie in [0, 1]")
        if self.mask_corruption.split_axis_policy not in ("longer", "x", "y", "lid"):
            raise ValueError("split_axis_policy must be 'longer', 'x', 'y' or 'lid'")
        if self.mask_corruption.boundary_noise_px < 0:
            raise ValueError("boundary_noise_px must be >= 0")
        if self.points_per_m2 <= 0:
            raise ValueError("points_per_m2 must be positive")
        for k, o in enumerate(self.objects):
            if o.part_of is None:
                continue
            if not 0 <= o.part_of < len(self.objects) or o.part_of == k \
                    or self.objects[o.part_of].part_of is not None:
                raise ValueError(f"object {k}: part_of must name another object that is not itself a part")

    def instance_of(self) -> np.ndarray:
        """Instance number of every object; instances are numbered by their first object."""
        roots = [k if o.part_of is None else o.part_of for k, o in enumerate(self.objects)]
        order = {r: i for i, r in enumerate(dict.fromkeys(roots))}
        return np.array([order[r] for r in roots], dtype=np.int64)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        objects = [SceneObject(**o) for o in obj.pop("objects")]
        orbit = obj.pop("orbit", {})
        mc = obj.pop("mask_corruption", {})
        noise = obj.pop("noise", {})
        return cls(objects, orbit=None if orbit is None else Orbit(**orbit),
                   mask_corruption=MaskCorruption(**mc), noise=Noise(**noise), **obj)


@dataclass
class SyntheticScene:
    cloud: PointCloud
    gt: Partition
    boxes: list
    frames: list
    spec: SceneSpec


# --- scene families ----------------------------------------------------------

PALETTE = [
    (0.85, 0.10, 0.10), (0.10, 0.70, 0.20), (0.15, 0.25, 0.85), (0.90, 0.85, 0.10),
    (0.80, 0.15, 0.75), (0.10, 0.75, 0.80), (0.95, 0.50, 0.10),
]
FLOOR_COLOR = (0.55, 0.55, 0.55)


def room8_spec(seed: int, points_per_m2: float = 2000.0, n_cameras: int = 12, part_split_prob: float = 0.0,
               split_axis_policy: str = "longer",
               width: int = 640, height: int = 480, color_sigma: float = 0.0) -> SceneSpec:
    """Floor plane plus seven separated boxes with distinct colors, seen by an orbit of cameras."""
    rng = np.random.default_rng([seed, 8])
    colors = [PALETTE[i] for i in rng.permutation(len(PALETTE))]
    placed = []
    half, gap = 1.7, 0.25
    scale = 1.0
    while len(placed) < 7:
        for _ in range(2000):
            sx, sy = rng.uniform(0.3, 0.9, 2) * scale
            sz = rng.uniform(0.3, 1.0)
            x = rng.uniform(-half + sx / 2, half - sx / 2)
            y = rng.uniform(-half + sy / 2, half - sy / 2)
            lo = np.array([x - sx / 2, y - sy / 2, 0.0])
            hi = np.array([x + sx / 2, y + sy / 2, sz])
            if all(max(p[0][0] - hi[0], lo[0] - p[1][0], p[0][1] - hi[1], lo[1] - p[1][1]) >= gap
                   for p in placed):
                placed.append((np.round(lo, 4), np.round(hi, 4)))
                break
        else:
            placed, scale = [], scale * 0.9
    objects = [SceneObject("plane", [-2.0, -2.0, 0.0], [2.0, 2.0, 0.0], list(FLOOR_COLOR))]
    objects += [SceneObject("box", lo.tolist(), hi.tolist(), list(c)) for (lo, hi), c in zip(placed, colors)]
    orbit = Orbit(count=n_cameras, width=width, height_px=height,
                  fx=525.0 * width / 640, fy=525.0 * height / 480)
    return SceneSpec(objects, points_per_m2=points_per_m2, orbit=orbit,
                     mask_corruption=MaskCorruption(part_split_prob, split_axis_policy),
                     noise=Noise(color_sigma=color_sigma), seed=seed)


def stacked_boxes_spec(seed: int = 0, points_per_m2: float = 3000.0) -> SceneSpec:
    """A small box resting on a large one, on a floor."""
    objects = [
        SceneObject("plane", [-2.0, -2.0, 0.0], [2.0, 2.0, 0.0], list(FLOOR_COLOR)),
        SceneObject("box", [-0.6, -0.4, 0.0], [0.6, 0.4, 0.6], list(PALETTE[2])),
        SceneObject("box", [-0.1, -0.1, 0.6], [0.2, 0.15, 0.85], list(PALETTE[3])),
    ]
    return SceneSpec(objects, points_per_m2=points_per_m2, orbit=Orbit(count=8), seed=seed)


def shelf_spec(seed: int = 0, points_per_m2: float = 3000.0) -> SceneSpec:
    """A small box standing on a shelf whose bounding box (base plus back panel) encloses it."""
    shelf = list(PALETTE[2])
    objects = [
        SceneObject("plane", [-2.0, -2.0, 0.0], [2.0, 2.0, 0.0], list(FLOOR_COLOR)),
        SceneObject("box", [-0.6, -0.4, 0.0], [0.6, 0.4, 0.3], shelf),
        SceneObject("box", [-0.6, 0.3, 0.3], [0.6, 0.4, 1.0], shelf, part_of=1),
        SceneObject("box", [-0.15, -0.2, 0.3], [0.15, 0.1, 0.6], list(PALETTE[3])),
    ]
    return SceneSpec(objects, points_per_m2=points_per_m2, orbit=Orbit(count=8), seed=seed)


def coplanar_two_color(n: int = 2000, seed: int = 0, size=(2.0, 1.0)):
    """Points on z=0; x < 0 is red, x >= 0 is blue. Returns (cloud, gt labels)."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform([-size[0] / 2, -size[1] / 2], [size[0] / 2, size[1] / 2], size=(n, 2))
    pos = np.column_stack([xy, np.zeros(n)])
    gt = (xy[:, 0] >= 0).astype(np.int64)
    colors = np.where(gt[:, None] == 0, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    return PointCloud(pos, colors), gt


def l_shape(n_per_plane: int = 1500, seed: int = 0, size: float = 1.0):
    """Two perpendicular uniformly colored squares meeting along the y axis: z=0 (x>0) and x=0 (z>0)."""
    rng = np.random.default_rng(seed)
    a = rng.uniform([0, 0], [size, size], size=(n_per_plane, 2))
    b = rng.uniform([0, 0], [size, size], size=(n_per_plane, 2))
    floor = np.column_stack([a[:, 0], a[:, 1], np.zeros(n_per_plane)])
    wall = np.column_stack([np.zeros(n_per_plane), b[:, 1], b[:, 0]])
    pos = np.vstack([floor, wall])
    gt = np.repeat([0, 1], n_per_plane)
    return PointCloud(pos, np.full((2 * n_per_plane, 3), 0.5)), gt


# --- generation ------------------------------------------------------------------

def _faces(obj: SceneObject, others):
    """(fixed axis, fixed value, face min, face max) for each sampled face of an object."""
    lo, hi = np.asarray(obj.min, float), np.asarray(obj.max, float)
    if obj.kind == "plane":
        axis = int(np.flatnonzero(hi - lo <= 0)[0])
        return [(axis, lo[axis], lo, hi)]
    faces = []
    for axis in range(3):
        for val in (lo[axis], hi[axis]):
            flo, fhi = lo.copy(), hi.copy()
            flo[axis] = fhi[axis] = val
            if axis == 2 and val == lo[2] and _supported(flo, fhi, others):
                continue
            faces.append((axis, val, flo, fhi))
    return faces


def _supported(flo, fhi, others):
    """True when a bottom face lies flat on the top of another object."""
    for o in others:
        olo, ohi = np.asarray(o.min, float), np.asarray(o.max, float)
        if abs(ohi[2] - flo[2]) < _EPS and np.all(olo[:2] <= flo[:2] + _EPS) and np.all(ohi[:2] >= fhi[:2] - _EPS):
            return True
    return False


def _sample(spec: SceneSpec, rng):
    instance = spec.instance_of()
    pos, col, lab = [], [], []
    for k, obj in enumerate(spec.objects):
        others = spec.objects[:k] + spec.objects[k + 1:]
        for axis, val, flo, fhi in _faces(obj, others):
            free = [a for a in range(3) if a != axis]
            area = float(np.prod((fhi - flo)[free]))
            m = int(round(area * spec.points_per_m2))
            if m == 0:
                continue
            p = np.empty((m, 3))
            p[:, axis] = val
            p[:, free] = rng.uniform(flo[free], fhi[free], size=(m, 2))
            # surface covered by another box cannot be scanned
            hidden = np.zeros(m, dtype=bool)
            for o in others:
                if o.kind == "box":
                    hidden |= np.all((p >= np.asarray(o.min) - _EPS) & (p <= np.asarray(o.max) + _EPS), axis=1)
            p = p[~hidden]
            m = p.shape[0]
            pos.append(p)
            col.append(np.tile(np.asarray(obj.color, float), (m, 1)))
            lab.append(np.full(m, instance[k], dtype=np.int64))
    if not pos:
        raise ValueError("scene sampling produced zero points")
    pos, col, lab = np.vstack(pos), np.vstack(col), np.concatenate(lab)
    if spec.noise.position_sigma > 0:
        pos = pos + rng.normal(0.0, spec.noise.position_sigma, pos.shape)
    if spec.noise.color_sigma > 0:
        col = col + rng.normal(0.0, spec.noise.color_sigma, col.shape)
    # quantize to what a PLY file stores so in-memory and exported scenes agree
    pos = pos.astype(np.float32).astype(np.float64)
    col = np.rint(np.clip(col, 0.0, 1.0) * 255.0) / 255.0
    return PointCloud(pos, col), lab


def look_at(eye, target, frame_id, orbit: Orbit) -> CameraFrame:
    eye, target = np.asarray(eye, float), np.asarray(target, float)
    fwd = target - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, _UP)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = right, down, fwd, eye
    return CameraFrame(orbit.fx, orbit.fy, (orbit.width - 1) / 2.0, (orbit.height_px - 1) / 2.0,
                       orbit.width, orbit.height_px, m, frame_id)


def orbit_cameras(orbit: Orbit, phase_offset: float = 0.0) -> list:
    cams = []
    tx, ty, tz = orbit.target
    for c in range(orbit.count):
        ang = orbit.phase + phase_offset + 2.0 * np.pi * c / orbit.count
        eye = [tx + orbit.radius * np.cos(ang), ty + orbit.radius * np.sin(ang), orbit.height]
        cams.append(look_at(eye, orbit.target, c, orbit))
    return cams


def _extents(spec):
    bmin = np.array([o.min for o in spec.objects], dtype=np.float64)
    bmax = np.array([o.max for o in spec.objects], dtype=np.float64)
    return bmin, bmax


def pixel_rays(cam: CameraFrame):
    """World-space ray directions through every pixel center, row-major; camera depth equals the ray parameter."""
    xs, ys = np.meshgrid(np.arange(cam.width, dtype=np.float64), np.arange(cam.height, dtype=np.float64))
    d = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs)], axis=-1).reshape(-1, 3)
    return np.ascontiguousarray(d @ cam.cam_to_world[:3, :3].T)


def render(spec: SceneSpec, cam: CameraFrame):
    """Analytic depth (meters, 0 = background) and object index + 1 per pixel."""
    bmin, bmax = _extents(spec)
    eye = cam.center
    inside = np.all((eye > bmin + _EPS) & (eye < bmax - _EPS), axis=1)
    if inside.any():
        raise ValueError(f"camera {cam.frame_id} is inside object {int(np.flatnonzero(inside)[0])}")
    t, hit = kernels.raycast_boxes(eye, pixel_rays(cam), bmin, bmax)
    shape = (cam.height, cam.width)
    return t.reshape(shape), (hit + 1).reshape(shape)


def _split_masks(ids, hits, depth, cam, spec: SceneSpec, rng):
    """Give part of each instance's mask a second id. ``hits`` holds object index + 1 per pixel."""
    corruption = spec.mask_corruption
    n_inst = int(spec.instance_of().max()) + 1
    out = ids.copy()
    for inst in range(1, n_inst + 1):
        draw = rng.random()
        rows, cols = np.nonzero(ids == inst)
        if rows.size == 0 or draw >= corruption.part_split_prob:
            continue
        policy = corruption.split_axis_policy
        if policy == "lid":
            tops = np.array([o.max[2] for o in spec.objects])
            flat = np.array([o.min[2] == o.max[2] for o in spec.objects])
            obj = hits[rows, cols] - 1
            z = cam.center[2] + depth[rows, cols] * pixel_rays(cam)[rows * cam.width + cols, 2]
            second = (z >= tops[obj] - _EPS) & ~flat[obj]
        else:
            if policy == "longer":
                policy = "x" if np.ptp(cols) >= np.ptp(rows) else "y"
            coord = cols if policy == "x" else rows
            if np.ptp(coord) < 1:
                continue
            second = coord > (coord.min() + coord.max()) / 2.0
        out[rows[second], cols[second]] = n_inst + inst
    return out


def _boundary_noise(ids, px, rng):
    h, w = ids.shape
    offsets = np.array([[0, 1], [0, -1], [1, 0], [-1, 0]])
    for _ in range(px):
        pick = offsets[rng.integers(0, 4, size=(h, w))]
        flip = rng.random((h, w)) < 0.5
        rr = np.clip(np.arange(h)[:, None] + pick[..., 0], 0, h - 1)
        cc = np.clip(np.arange(w)[None, :] + pick[..., 1], 0, w - 1)
        nb = ids[rr, cc]
        ids = np.where(flip & (nb != ids), nb, ids)
    return ids


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    rng = np.random.default_rng([spec.seed, 0])
    cloud, labels = _sample(spec, rng)
    instance = spec.instance_of()
    to_mask = np.concatenate([[0], instance + 1])

    if spec.orbit is not None:
        for attempt in range(8):
            cams = orbit_cameras(spec.orbit, phase_offset=attempt * np.pi / (4 * spec.orbit.count))
            renders = [render(spec, c) for c in cams]
            seen = np.zeros(len(spec.objects) + 1, dtype=bool)
            for _, hits in renders:
                seen[np.unique(hits)] = True
            if seen[1:].all():
                break
        else:
            raise ValueError("some objects are not visible from any orbit camera")
    else:
        cams = [CameraFrame.from_json(c) for c in spec.cameras]
        renders = [render(spec, c) for c in cams]

    mrng = np.random.default_rng([spec.seed, 1])
    frames = []
    for cam, (depth, hits) in zip(cams, renders):
        ids = _split_masks(to_mask[hits], hits, depth, cam, spec, mrng)
        if spec.mask_corruption.boundary_noise_px:
            ids = _boundary_noise(ids, spec.mask_corruption.boundary_noise_px, mrng)
            ids = np.where(depth > 0, ids, 0)
        frames.append(Frame(cam, DepthRaster(depth), MaskRaster(ids)))

    # one box per instance that has box primitives: the union of their extents
    boxes = []
    pad = 1e-3 + 3.0 * spec.noise.position_sigma
    for inst in range(int(instance.max()) + 1):
        parts = [o for o, i in zip(spec.objects, instance) if i == inst and o.kind == "box"]
        if parts:
            lo = np.min([o.min for o in parts], axis=0)
            hi = np.max([o.max for o in parts], axis=0)
            boxes.append(Box3D(lo - pad, hi + pad))
    return SyntheticScene(cloud, Partition.from_labels(labels), boxes, frames, spec)


def export_scene(scene: SyntheticScene, directory):
    """Write scene.ply (with ``label``), frames/, boxes.json, gt_labels.txt and spec.json."""
    os.makedirs(directory, exist_ok=True)
    save_ply(os.path.join(directory, "scene.ply"), scene.cloud.positions, scene.cloud.colors, scene.gt.labels)
    save_frames(os.path.join(directory, "frames"), scene.frames)
    save_boxes(os.path.join(directory, "boxes.json"), scene.boxes)
    write_labels(os.path.join(directory, "gt_labels.txt"), scene.gt.labels)
    with open(os.path.join(directory, "spec.json"), "w") as fh:
        json.dump(scene.spec.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
