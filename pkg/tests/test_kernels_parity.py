"""The compiled kernels and the numpy fallback must agree on every input."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sorted_edges
from superseg.kernels import _numpy as ref

fast = pytest.importorskip("superseg.kernels._numba")

SEEDS = st.integers(0, 2**32 - 1)


@settings(max_examples=25, deadline=None)
@given(seed=SEEDS, n=st.integers(1, 300), m=st.integers(1, 12))
def test_neighbor_covariances(seed, n, m):
    r = np.random.default_rng(seed)
    pos = r.normal(size=(n, 3)) * r.uniform(0.01, 100)
    nbrs = np.sort(r.integers(0, n, (n, m)), axis=1)
    np.testing.assert_allclose(fast.neighbor_covariances(pos, nbrs), ref.neighbor_covariances(pos, nbrs),
                               rtol=1e-10, atol=1e-12 * np.abs(pos).max() ** 2)


@settings(max_examples=40, deadline=None)
@given(seed=SEEDS, n=st.integers(1, 80), density=st.floats(0, 1), k=st.sampled_from([0.01, 0.3, 5.0]),
       min_size=st.integers(1, 6))
def test_felzenszwalb(seed, n, density, k, min_size):
    r = np.random.default_rng(seed)
    edges = sorted_edges(r, n, int(density * n * (n - 1) / 2), weight_levels=[0.0, 0.1, 0.2])
    a = np.array([e[0] for e in edges], dtype=np.int64)
    b = np.array([e[1] for e in edges], dtype=np.int64)
    w = np.array([e[2] for e in edges], dtype=np.float64)
    np.testing.assert_array_equal(fast.felzenszwalb(a, b, w, n, k, min_size),
                                  ref.felzenszwalb(a, b, w, n, k, min_size))


def random_camera(r):
    q, _ = np.linalg.qr(r.normal(size=(3, 3)))
    return q, r.normal(size=3), np.array([r.uniform(50, 500), r.uniform(50, 500), 40.0, 30.0])


@settings(max_examples=30, deadline=None)
@given(seed=SEEDS, n=st.integers(1, 500), tol=st.floats(1e-3, 0.5))
def test_project_points(seed, n, tol):
    r = np.random.default_rng(seed)
    rot, trans, intr = random_camera(r)
    pos = r.normal(size=(n, 3)) * 3
    depth = r.uniform(0, 5, (60, 80)) * (r.random((60, 80)) < 0.9)
    got = fast.project_points(pos, rot, trans, intr, 80, 60, depth, tol)
    want = ref.project_points(pos, rot, trans, intr, 80, 60, depth, tol)
    for g, w in zip(got, want):
        np.testing.assert_array_equal(g, w)


@settings(max_examples=30, deadline=None)
@given(seed=SEEDS, n=st.integers(0, 400), n_seg=st.integers(1, 10), n_bins=st.integers(1, 6))
def test_mask_histogram(seed, n, n_seg, n_bins):
    r = np.random.default_rng(seed)
    labels = r.integers(-1, n_seg, n)
    px, py = r.integers(0, 20, n), r.integers(0, 15, n)
    status = r.integers(0, 3, n).astype(np.int8)
    bins = r.integers(-1, n_bins, (15, 20))
    got = fast.mask_histogram(labels, px, py, status, bins, n_seg, n_bins)
    want = ref.mask_histogram(labels, px, py, status, bins, n_seg, n_bins)
    for g, w in zip(got, want):
        np.testing.assert_array_equal(g, w)


@settings(max_examples=30, deadline=None)
@given(seed=SEEDS, n=st.integers(1, 30), n_bins=st.integers(1, 6), min_gamma=st.sampled_from([0.0, 1e-4, 0.2]))
def test_accumulate_frame_affinity(seed, n, n_bins, min_gamma):
    r = np.random.default_rng(seed)
    counts = r.integers(0, 5, (n, n_bins)).astype(np.float64) * (r.random((n, 1)) < 0.8)
    vis = r.random(n)
    out = []
    for mod in (fast, ref):
        num, den = np.full((n, n), 0.25), np.full((n, n), 0.5)
        mod.accumulate_frame_affinity(counts, vis, min_gamma, num, den)
        out.append((num, den))
    np.testing.assert_allclose(out[0][0], out[1][0], rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(out[0][1], out[1][1])


@settings(max_examples=40, deadline=None)
@given(seed=SEEDS, n=st.integers(1, 25), frames=st.integers(1, 4), bins=st.integers(1, 4),
       floor=st.sampled_from([1.0, 0.3]))
def test_region_grow(seed, n, frames, bins, floor):
    r = np.random.default_rng(seed)
    sizes = r.integers(1, 30, n).astype(np.float64)
    hist = r.integers(0, 4, (frames, n, bins)).astype(np.float64) * (r.random((frames, n, 1)) < 0.7)
    vis = np.minimum(hist.sum(axis=2) + r.integers(0, 3, (frames, n)), sizes)
    csum = r.uniform(0, 2, (n, 3)) * sizes[:, None]
    sched = np.array([0.9, 0.8, 0.7, 0.6, 0.5])
    got = fast.region_grow(hist, vis, sizes, csum, sched, floor, 1e-4)
    want = ref.region_grow(hist, vis, sizes, csum, sched, floor, 1e-4)
    for g, w in zip(got[:5], want[:5]):
        np.testing.assert_array_equal(g, w)
    np.testing.assert_allclose(got[5], want[5], rtol=1e-12, atol=0)


@settings(max_examples=25, deadline=None)
@given(seed=SEEDS, n_obj=st.integers(1, 6), n_rays=st.integers(1, 300))
def test_raycast_boxes(seed, n_obj, n_rays):
    r = np.random.default_rng(seed)
    lo = r.uniform(-2, 1, (n_obj, 3))
    hi = lo + r.uniform(0.1, 1.5, (n_obj, 3))
    lo[0, 2] = hi[0, 2]  # one flat plane among the boxes
    origin = np.array([0.0, 0.0, 6.0])
    dirs = r.normal(size=(n_rays, 3))
    dirs[: n_rays // 4, 0] = 0.0  # axis-parallel slabs
    t_fast, h_fast = fast.raycast_boxes(origin, dirs, lo, hi)
    t_ref, h_ref = ref.raycast_boxes(origin, dirs, lo, hi)
    np.testing.assert_array_equal(h_fast, h_ref)
    np.testing.assert_allclose(t_fast, t_ref, rtol=1e-12, atol=0)


def test_env_var_selects_numpy_backend():
    code = "from superseg import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, SUPERSEG_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["SUPERSEG_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
