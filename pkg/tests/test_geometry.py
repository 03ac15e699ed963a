import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_knn
from superseg.geometry import NeighborIndex, PointCloud, canonical_orientation, estimate_normals, knn


def cloud_of(pos):
    pos = np.asarray(pos, float)
    return PointCloud(pos, np.full(pos.shape, 0.5))


class TestPointCloud:
    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="empty cloud"):
            cloud_of(np.zeros((0, 3)))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((3, 3)), np.zeros((2, 3)))

    def test_rejects_out_of_range_color(self):
        with pytest.raises(ValueError, match="color"):
            PointCloud(np.zeros((1, 3)), np.array([[0.0, 1.2, 0.0]]))

    def test_rejects_non_unit_normals(self):
        with pytest.raises(ValueError, match="unit"):
            PointCloud(np.zeros((1, 3)), np.zeros((1, 3)), np.array([[0.0, 0.0, 1.1]]))


class TestKnn:
    def test_collinear_examples(self):
        idx = NeighborIndex(np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]]))
        assert knn(idx, 0, 2) == [1, 2]
        assert knn(idx, 1, 1) == [0]

    def test_ties_broken_by_index(self):
        # point 0 at the centre of a unit square: four equidistant neighbours
        pos = np.array([[0.0, 0, 0], [1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0], [5, 5, 0]])
        idx = NeighborIndex(pos)
        assert knn(idx, 0, 3) == [1, 2, 3]
        assert knn(idx, 0, 5) == [1, 2, 3, 4, 5]

    def test_integer_grid_matches_brute_force(self):
        g = np.stack(np.meshgrid(np.arange(5), np.arange(5), np.arange(3)), -1).reshape(-1, 3).astype(float)
        idx = NeighborIndex(g)
        rows = idx.query(10)
        for q in range(len(g)):
            assert rows[q].tolist() == brute_knn(g, q, 10)

    def test_thousand_uniform_points_k16(self, rng):
        pos = rng.random((1000, 3))
        rows = NeighborIndex(pos).query(16)
        for q in range(1000):
            assert rows[q].tolist() == brute_knn(pos, q, 16)

    def test_out_of_range_query(self):
        idx = NeighborIndex(np.zeros((3, 3)) + np.arange(3)[:, None])
        with pytest.raises(IndexError):
            knn(idx, 3, 1)

    @pytest.mark.parametrize("k", [0, 3])
    def test_k_out_of_range(self, k):
        idx = NeighborIndex(np.arange(9, dtype=float).reshape(3, 3))
        with pytest.raises(ValueError):
            idx.query(k)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(2, 300), k=st.integers(1, 20), seed=st.integers(0, 2**32 - 1),
           quantize=st.booleans())
    def test_matches_exhaustive_search(self, n, k, seed, quantize):
        r = np.random.default_rng(seed)
        pos = r.random((n, 3))
        if quantize:  # coarse grid -> many exact distance ties
            pos = np.round(pos * 4) / 4
        k = min(k, n - 1)
        rows = NeighborIndex(pos).query(k)
        for q in range(n):
            assert rows[q].tolist() == brute_knn(pos, q, k)


class TestNormals:
    def test_plane_z0(self, rng):
        pos = np.column_stack([rng.random((100, 2)), np.zeros(100)])
        n = estimate_normals(cloud_of(pos), k=10).normals
        np.testing.assert_allclose(n, np.tile([0, 0, 1.0], (100, 1)), atol=1e-12)

    def test_plane_x5(self, rng):
        pos = np.column_stack([np.full(100, 5.0), rng.random((100, 2))])
        n = estimate_normals(cloud_of(pos), k=10).normals
        np.testing.assert_allclose(n, np.tile([1.0, 0, 0], (100, 1)), atol=1e-12)

    def test_sphere_normals_are_radial(self):
        # evenly spread samples; iid uniform draws leave lopsided 12-point neighbourhoods
        i = np.arange(200) + 0.5
        polar, azim = np.arccos(1 - 2 * i / 200), np.pi * (1 + 5 ** 0.5) * i
        pos = np.column_stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)])
        n = estimate_normals(cloud_of(pos), k=12).normals
        cos = np.abs(np.einsum("ij,ij->i", n, pos))
        assert np.all(cos >= np.cos(np.radians(10)))

    def test_matches_direct_pca(self, rng):
        pos = rng.random((120, 3)) * [1.0, 1.0, 0.1]
        n = estimate_normals(cloud_of(pos), k=8).normals
        for q in range(len(pos)):
            hood = pos[[q] + brute_knn(pos, q, 8)]
            _, vecs = np.linalg.eigh(np.cov(hood.T, bias=True))
            ref = canonical_orientation(vecs[:, :1].T)[0]
            np.testing.assert_allclose(n[q], ref, atol=1e-9)

    def test_coincident_neighbourhood_defaults_up(self):
        pos = np.vstack([np.zeros((5, 3)), [[1.0, 2, 3]]])
        n = estimate_normals(cloud_of(pos), k=3).normals
        np.testing.assert_array_equal(n[:5], np.tile([0, 0, 1.0], (5, 1)))

    def test_inputs_unchanged(self, rng):
        c = cloud_of(rng.random((50, 3)))
        pos = c.positions.copy()
        out = estimate_normals(c, k=5)
        np.testing.assert_array_equal(out.positions, pos)
        np.testing.assert_array_equal(out.colors, c.colors)
        assert c.normals is None

    @pytest.mark.parametrize("k", [2, 50])
    def test_bad_k(self, rng, k):
        with pytest.raises(ValueError):
            estimate_normals(cloud_of(rng.random((50, 3))), k=k)

    def test_canonical_orientation_tie_prefers_earlier_axis(self):
        v = np.array([[-0.6, 0.6, 0.0], [0.6, -0.6, 0.0], [0, 0, -1.0]])
        np.testing.assert_array_equal(canonical_orientation(v), [[0.6, -0.6, 0], [0.6, -0.6, 0], [0, 0, 1.0]])

    def test_bitwise_independent_of_neighbour_presentation_order(self, rng):
        pos = rng.random((300, 3))
        base = estimate_normals(cloud_of(pos), k=12).normals

        class Shuffled(NeighborIndex):
            def query(self, k, ids=None):
                rows = super().query(k, ids)
                return np.ascontiguousarray(np.random.default_rng(7).permuted(rows, axis=1))

        out = estimate_normals(cloud_of(pos), k=12, index=Shuffled(pos)).normals
        np.testing.assert_array_equal(out, base)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_rotation_equivariance(self, seed):
        r = np.random.default_rng(seed)
        # a gently curved patch keeps every neighbourhood well conditioned
        xy = r.uniform(-1, 1, (150, 2))
        pos = np.column_stack([xy, 0.2 * xy[:, 0] ** 2 + 0.1 * xy[:, 1]])
        q, _ = np.linalg.qr(r.normal(size=(3, 3)))
        base = estimate_normals(cloud_of(pos), k=10).normals
        rot = estimate_normals(cloud_of(pos @ q.T), k=10).normals
        expect = base @ q.T
        sign = np.sign(np.einsum("ij,ij->i", rot, expect))
        np.testing.assert_allclose(rot, expect * sign[:, None], atol=1e-5)
