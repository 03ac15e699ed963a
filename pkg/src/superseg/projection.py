"""Pinhole projection, depth-buffer visibility and per-point pixel footprints."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, FrameError
from .geometry import PointCloud

DEFAULT_DEPTH_TOLERANCE = 0.05


@dataclass(frozen=True)
class CameraFrame:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_to_world: np.ndarray
    frame_id: int = 0

    def __post_init__(self):
        m = np.asarray(self.cam_to_world, dtype=np.float64).reshape(4, 4)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("raster dimensions must be >= 1")
        rot = m[:3, :3]
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-4:
            raise ValueError("cam_to_world rotation block is not orthonormal")
        object.__setattr__(self, "cam_to_world", m)

    @property
    def world_to_cam(self):
        """Rigid inverse of ``cam_to_world`` as (rotation, translation)."""
        rot = self.cam_to_world[:3, :3].T
        return rot, -rot @ self.cam_to_world[:3, 3]

    @property
    def intrinsics(self):
        return np.array([self.fx, self.fy, self.cx, self.cy], dtype=np.float64)

    @property
    def center(self):
        return self.cam_to_world[:3, 3].copy()

    def to_json(self):
        return {
            "frame_id": int(self.frame_id),
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "width": int(self.width), "height": int(self.height),
            "cam_to_world": [float(x) for x in self.cam_to_world.reshape(-1)],
        }

    @classmethod
    def from_json(cls, obj):
        keys = ("frame_id", "fx", "fy", "cx", "cy", "width", "height", "cam_to_world")
        missing = [k for k in keys if k not in obj]
        if missing:
            raise ValueError(f"camera is missing keys {missing}")
        if len(obj["cam_to_world"]) != 16:
            raise ValueError("cam_to_world must hold 16 numbers")
        return cls(float(obj["fx"]), float(obj["fy"]), float(obj["cx"]), float(obj["cy"]),
                   int(obj["width"]), int(obj["height"]), np.array(obj["cam_to_world"], float),
                   int(obj["frame_id"]))


@dataclass(frozen=True)
class DepthRaster:
    """Row-major depths in meters, 0 = invalid."""

    values: np.ndarray  # (height, width)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("depth raster must be 2-D")
        if not np.all(np.isfinite(v)) or v.min(initial=0.0) < 0:
            raise ValueError("depth values must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class PixelFootprint:
    """In-frame points of one frame, ascending point id.

    ``u``/``v`` are integer pixels; ``u_exact``/``v_exact``/``z`` keep the
    continuous projection for back-projection.
    """

    frame_id: int
    width: int
    height: int
    point_ids: np.ndarray
    u: np.ndarray
    v: np.ndarray
    visible: np.ndarray
    u_exact: np.ndarray
    v_exact: np.ndarray
    z: np.ndarray

    def entries(self):
        return list(zip(self.point_ids.tolist(), self.u.tolist(), self.v.tolist(), self.visible.tolist()))


def project_point(p, cam: CameraFrame) -> Optional[tuple]:
    rot, trans = cam.world_to_cam
    x, y, z = rot @ np.asarray(p, dtype=np.float64) + trans
    if z <= 1e-6:
        return None
    return (cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy, float(z))


def back_project(u, v, z, cam: CameraFrame):
    """World position of pixel coordinate (u, v) at camera depth ``z``."""
    xc = (np.asarray(u, float) - cam.cx) / cam.fx * z
    yc = (np.asarray(v, float) - cam.cy) / cam.fy * z
    pc = np.stack([xc, yc, np.broadcast_to(z, np.shape(xc))], axis=-1)
    return pc @ cam.cam_to_world[:3, :3].T + cam.cam_to_world[:3, 3]


def pixel_of(u, v):
    """Nearest pixel, halves rounding up."""
    return int(math.floor(u + 0.5)), int(math.floor(v + 0.5))


def visibility_test(u, v, z, depth: DepthRaster, tol: float = DEFAULT_DEPTH_TOLERANCE) -> bool:
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    iu, iv = pixel_of(u, v)
    if not (0 <= iu < depth.width and 0 <= iv < depth.height):
        return False
    d = depth.values[iv, iu]
    return bool(d > 0 and abs(z - d) <= tol)


def _check_dims(cam, raster, what):
    if raster.shape != (cam.height, cam.width):
        raise DimensionMismatchError(
            f"frame {cam.frame_id}: {what} raster is {raster.shape[1]}x{raster.shape[0]}, "
            f"camera expects {cam.width}x{cam.height}")


def project_cloud(positions, cam: CameraFrame, depth: DepthRaster, tol: float):
    """Kernel call shared by :func:`footprint` and the affinity builder."""
    _check_dims(cam, depth.values, "depth")
    rot, trans = cam.world_to_cam
    return kernels.project_points(positions, np.ascontiguousarray(rot), trans, cam.intrinsics,
                                  cam.width, cam.height, depth.values, float(tol))


def footprint(cloud: PointCloud, partition, cam: CameraFrame, depth: DepthRaster,
              tol: float = DEFAULT_DEPTH_TOLERANCE) -> PixelFootprint:
    if partition is not None and len(partition) != len(cloud):
        raise DimensionMismatchError("partition length does not match the cloud")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    u, v, z, px, py, status = project_cloud(cloud.positions, cam, depth, tol)
    ids = np.flatnonzero(status > 0)
    return PixelFootprint(cam.frame_id, cam.width, cam.height, ids, px[ids], py[ids], status[ids] == 2,
                          u[ids], v[ids], z[ids])


# --- file formats ---------------------------------------------------------

def write_pgm16(path, values):
    """16-bit big-endian binary PGM (maxval 65535)."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError("PGM raster must be 2-D")
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 65535:
        raise ValueError("PGM samples must lie in [0, 65535]")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(arr.astype(">u2").tobytes())


def read_pgm16(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FrameError(f"{path}: cannot read ({exc.strerror})") from None
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FrameError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise FrameError(f"{path}: not a binary PGM (P5)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FrameError(f"{path}: malformed PGM header") from None
    if maxval != 65535:
        raise FrameError(f"{path}: expected maxval 65535, got {maxval}")
    raw = data[pos:pos + 2 * w * h]
    if len(raw) != 2 * w * h:
        raise FrameError(f"{path}: PGM raster truncated")
    return np.frombuffer(raw, dtype=">u2").reshape(h, w).astype(np.int64)


def depth_to_mm(depth: DepthRaster):
    return np.clip(np.rint(depth.values * 1000.0), 0, 65535).astype(np.int64)


def save_camera(path, cam: CameraFrame):
    with open(path, "w") as fh:
        json.dump(cam.to_json(), fh, indent=1)
        fh.write("\n")


def load_camera(path) -> CameraFrame:
    if not os.path.isfile(path):
        raise FrameError(f"{path}: missing camera file")
    try:
        with open(path) as fh:
            return CameraFrame.from_json(json.load(fh))
    except (ValueError, TypeError) as exc:
        raise FrameError(f"{path}: bad camera: {exc}") from None
