"""Time every kernel under the numba and numpy backends, plus the full pipeline.

    python benchmarks/bench_kernels.py [--points 100000] [--frames 20] [--repeat 3] [--no-pipeline]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from superseg.affinity import _bins
from superseg.geometry import NeighborIndex, estimate_normals
from superseg.kernels import _numpy
from superseg.primitives import PrimitiveConfig, build_primitive_graph, compute_primitives
from superseg.synth import generate_scene, pixel_rays, room8_spec

try:
    from superseg.kernels import _numba
except ImportError:
    _numba = None


def kernel_inputs(scene, rng):
    """Realistic arguments for each kernel, drawn from a generated scene."""
    cloud = scene.cloud
    nbrs = NeighborIndex(cloud.positions).query(16)
    hood = np.ascontiguousarray(np.sort(np.concatenate([np.arange(len(cloud))[:, None], nbrs], axis=1), axis=1))
    prims = compute_primitives(cloud, PrimitiveConfig())
    src, dst, w = build_primitive_graph(estimate_normals(cloud, 16), PrimitiveConfig())
    cam = scene.frames[0].camera
    rot, trans = cam.world_to_cam
    depth = scene.frames[0].depth.values
    ids, bins = _bins(scene.frames[0].masks)
    *_, px, py, status = _numpy.project_points(cloud.positions, np.ascontiguousarray(rot), trans,
                                                    cam.intrinsics, cam.width, cam.height, depth, 0.05)
    n_sp = prims.num_segments
    counts = rng.integers(0, 50, (n_sp, 8)).astype(np.float64) * (rng.random((n_sp, 1)) < 0.3)
    sizes = np.bincount(prims.labels).astype(np.float64)
    n_grow = min(n_sp, 300)
    hist = rng.integers(0, 20, (len(scene.frames), n_grow, 8)).astype(np.float64)
    hist *= rng.random((len(scene.frames), n_grow, 1)) < 0.3
    vis = np.minimum(hist.sum(axis=2), sizes[:n_grow])
    csum = rng.uniform(-2, 2, (n_grow, 3)) * sizes[:n_grow, None]
    bmin = np.array([o.min for o in scene.spec.objects], dtype=np.float64)
    bmax = np.array([o.max for o in scene.spec.objects], dtype=np.float64)
    return {
        "neighbor_covariances": (cloud.positions, hood),
        "felzenszwalb": (src, dst, w, len(cloud), 0.3, 50),
        "project_points": (cloud.positions, np.ascontiguousarray(rot), trans, cam.intrinsics,
                           cam.width, cam.height, depth, 0.05),
        "mask_histogram": (prims.labels, px, py, status, bins, n_sp, max(ids.size, 1)),
        "accumulate_frame_affinity": (counts, rng.random(n_sp), 1e-4, np.zeros((n_sp, n_sp)),
                                      np.zeros((n_sp, n_sp))),
        "region_grow": (hist, vis, sizes[:n_grow], csum, np.array([0.9, 0.8, 0.7, 0.6, 0.5]), 1.0, 1e-4),
        "raycast_boxes": (cam.center, pixel_rays(cam), bmin, bmax),
    }


def time_call(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(scene, repeat):
    inputs = kernel_inputs(scene, np.random.default_rng(0))
    rows = []
    for name, args in inputs.items():
        row = {"kernel": name, "numpy_s": time_call(getattr(_numpy, name), args, repeat)}
        if _numba is not None:
            fast = getattr(_numba, name)
            time_call(fast, args, 1)  # compile outside the timed runs
            row["numba_s"] = time_call(fast, args, repeat)
        rows.append(row)
    return rows


PIPELINE = """
import json, sys, time
from superseg import kernels
from superseg.pipeline import segment_scene
from superseg.synth import generate_scene, room8_spec
warm = generate_scene(room8_spec(0, points_per_m2=200, n_cameras=2, width=64, height=48))
segment_scene(warm.cloud, warm.frames, warm.boxes)
scene = generate_scene(room8_spec(0, points_per_m2=float(sys.argv[1]), n_cameras=int(sys.argv[2])))
t0 = time.perf_counter()
segment_scene(scene.cloud, scene.frames, scene.boxes, workers=0)
print(json.dumps({"backend": kernels.BACKEND, "points": len(scene.cloud), "seconds": time.perf_counter() - t0}))
"""


def bench_pipeline(density, frames):
    out = []
    for disabled in ("0", "1"):
        env = dict(os.environ, SUPERSEG_DISABLE_NUMBA=disabled)
        proc = subprocess.run([sys.executable, "-c", PIPELINE, str(density), str(frames)], env=env,
                              capture_output=True, text=True, check=True)
        out.append(json.loads(proc.stdout))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--points", type=int, default=100_000, help="approximate point count")
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--no-pipeline", action="store_true", help="time kernels only")
    args = ap.parse_args()

    density = 4200.0 * args.points / 100_000
    scene = generate_scene(room8_spec(0, points_per_m2=density, n_cameras=args.frames))
    print(f"scene: {len(scene.cloud)} points, {len(scene.frames)} frames")
    print(f"{'kernel':<28}{'numpy (s)':>12}{'numba (s)':>12}{'speedup':>10}")
    for row in bench_kernels(scene, args.repeat):
        fast = row.get("numba_s")
        extra = f"{fast:>12.4f}{row['numpy_s'] / fast:>9.1f}x" if fast else f"{'n/a':>12}"
        print(f"{row['kernel']:<28}{row['numpy_s']:>12.4f}{extra}")
    if not args.no_pipeline:
        for res in bench_pipeline(density, args.frames):
            print(f"pipeline [{res['backend']}]: {res['points']} points in {res['seconds']:.2f} s")


if __name__ == "__main__":
    main()
