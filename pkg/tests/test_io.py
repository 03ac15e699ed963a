import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superseg.affinity import Frame, MaskRaster, load_frames, save_frames
from superseg.config import PipelineConfig
from superseg.errors import ConfigError, DimensionMismatchError, FrameError, PlyFormatError
from superseg.evaluation import read_labels, write_labels
from superseg.merging import Box3D, load_boxes, save_boxes
from superseg.plyio import load_ply, save_ply
from superseg.projection import CameraFrame, DepthRaster, read_pgm16, write_pgm16

HEADER = "ply\nformat ascii 1.0\nelement vertex {n}\n{props}end_header\n"
XYZRGB = "property float x\nproperty float y\nproperty float z\n" \
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"


def write_text(path, text):
    path.write_text(text)
    return path


class TestPly:
    def test_ascii_single_vertex(self, tmp_path):
        p = write_text(tmp_path / "a.ply", HEADER.format(n=1, props=XYZRGB) + "0 0 0 255 0 0\n")
        cloud, labels = load_ply(p)
        assert len(cloud) == 1 and labels is None
        np.testing.assert_array_equal(cloud.colors, [[1.0, 0.0, 0.0]])

    def test_binary_zero_vertices_is_empty(self, tmp_path):
        p = tmp_path / "e.ply"
        p.write_bytes(HEADER.format(n=0, props=XYZRGB).replace("ascii", "binary_little_endian").encode())
        with pytest.raises(PlyFormatError, match="empty cloud"):
            load_ply(p)

    def test_missing_blue(self, tmp_path):
        props = XYZRGB.replace("property uchar blue\n", "")
        p = write_text(tmp_path / "b.ply", HEADER.format(n=1, props=props) + "0 0 0 1 2\n")
        with pytest.raises(PlyFormatError, match="missing color property"):
            load_ply(p)

    def test_missing_coordinate(self, tmp_path):
        props = XYZRGB.replace("property float z\n", "")
        p = write_text(tmp_path / "c.ply", HEADER.format(n=1, props=props) + "0 0 1 2 3\n")
        with pytest.raises(PlyFormatError, match="coordinate"):
            load_ply(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(PlyFormatError, match="no such file"):
            load_ply(tmp_path / "nope.ply")

    def test_malformed_header(self, tmp_path):
        p = write_text(tmp_path / "m.ply", "plx\nformat ascii 1.0\nend_header\n")
        with pytest.raises(PlyFormatError, match="malformed header"):
            load_ply(p)

    @pytest.mark.parametrize("binary", [True, False])
    def test_count_mismatch(self, tmp_path, binary):
        p = tmp_path / "short.ply"
        save_ply(p, np.zeros((3, 3)), np.zeros((3, 3)), binary=binary)
        data = p.read_bytes().replace(b"element vertex 3", b"element vertex 4")
        p.write_bytes(data)
        with pytest.raises(PlyFormatError, match="element count mismatch"):
            load_ply(p)

    def test_binary_reader_handles_extra_properties_and_doubles(self, tmp_path):
        header = ("ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\n"
                  "property double y\nproperty double z\nproperty float nx\nproperty uchar red\n"
                  "property uchar green\nproperty uchar blue\nproperty int label\nend_header\n")
        body = b"".join(struct.pack("<dddfBBBi", *row) for row in
                        [(1.5, 2.5, -3.25, 0.0, 0, 128, 255, 7), (0.1, 0.2, 0.3, 1.0, 10, 20, 30, -1)])
        p = tmp_path / "d.ply"
        p.write_bytes(header.encode() + body)
        cloud, labels = load_ply(p)
        np.testing.assert_array_equal(cloud.positions, [[1.5, 2.5, -3.25], [0.1, 0.2, 0.3]])
        np.testing.assert_array_equal(cloud.colors[0], [0, 128 / 255, 1])
        assert labels.tolist() == [7, -1]

    @settings(max_examples=20, deadline=None)
    @given(n=st.integers(1, 40), seed=st.integers(0, 2**32 - 1), binary=st.booleans(), with_labels=st.booleans())
    def test_round_trip(self, tmp_path_factory, n, seed, binary, with_labels):
        r = np.random.default_rng(seed)
        pos = r.normal(size=(n, 3)).astype(np.float32).astype(np.float64)
        col = r.integers(0, 256, (n, 3)) / 255.0
        lab = r.integers(-1, 5, n) if with_labels else None
        p = tmp_path_factory.mktemp("ply") / "x.ply"
        save_ply(p, pos, col, lab, binary=binary)
        cloud, labels = load_ply(p)
        np.testing.assert_array_equal(cloud.positions, pos)
        np.testing.assert_array_equal(cloud.colors, col)
        if with_labels:
            np.testing.assert_array_equal(labels, lab)
        else:
            assert labels is None


class TestPgm:
    def test_round_trip_and_big_endian(self, tmp_path):
        arr = np.array([[0, 1, 256], [65535, 4660, 7]])
        p = tmp_path / "r.pgm"
        write_pgm16(p, arr)
        raw = p.read_bytes()
        assert raw.startswith(b"P5\n3 2\n65535\n")
        assert raw[-4:-2] == b"\x12\x34"
        np.testing.assert_array_equal(read_pgm16(p), arr)

    def test_header_comments(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# made by hand\n2 1\n65535\n\x00\x01\x01\x00")
        np.testing.assert_array_equal(read_pgm16(p), [[1, 256]])

    @pytest.mark.parametrize("data,msg", [
        (b"P2\n1 1\n65535\n\x00\x00", "P5"),
        (b"P5\n1 1\n255\n\x00", "maxval"),
        (b"P5\n2 2\n65535\n\x00\x00", "truncated"),
    ])
    def test_rejects_bad_files(self, tmp_path, data, msg):
        p = tmp_path / "bad.pgm"
        p.write_bytes(data)
        with pytest.raises(FrameError, match=msg):
            read_pgm16(p)

    def test_rejects_out_of_range(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm16(tmp_path / "x.pgm", np.array([[70000]]))


def tiny_frame(fid=3, w=4, h=3):
    cam = CameraFrame(100.0, 110.0, 2.0, 1.5, w, h, np.eye(4), fid)
    depth = DepthRaster(np.arange(w * h, dtype=float).reshape(h, w) * 0.0015)
    masks = MaskRaster(np.arange(w * h).reshape(h, w) % 3)
    return Frame(cam, depth, masks)


class TestFrames:
    def test_round_trip(self, tmp_path):
        frames = [tiny_frame(3), tiny_frame(10)]
        save_frames(tmp_path / "f", frames)
        back = load_frames(tmp_path / "f")
        assert [f.frame_id for f in back] == [3, 10]
        for a, b in zip(frames, back):
            assert a.camera.to_json() == b.camera.to_json()
            assert np.abs(a.depth.values - b.depth.values).max() <= 0.0005 + 1e-12
            np.testing.assert_array_equal(a.masks.ids, b.masks.ids)

    def test_missing_directory_names_path(self, tmp_path):
        with pytest.raises(FrameError, match="nowhere"):
            load_frames(tmp_path / "nowhere")

    def test_missing_mask(self, tmp_path):
        save_frames(tmp_path, [tiny_frame(1)])
        (tmp_path / "1.mask.pgm").unlink()
        with pytest.raises(FrameError, match="1.mask.pgm"):
            load_frames(tmp_path)

    def test_dimension_mismatch(self, tmp_path):
        save_frames(tmp_path, [tiny_frame(1)])
        write_pgm16(tmp_path / "1.depth.pgm", np.zeros((5, 5), dtype=int))
        with pytest.raises(DimensionMismatchError):
            load_frames(tmp_path)

    def test_camera_must_be_orthonormal(self):
        bad = np.eye(4)
        bad[0, 0] = 1.1
        with pytest.raises(ValueError, match="orthonormal"):
            CameraFrame(1.0, 1.0, 0.0, 0.0, 2, 2, bad)


class TestBoxesAndLabels:
    def test_boxes_round_trip(self, tmp_path):
        boxes = [Box3D([0, 0, 0], [1, 2, 3]), Box3D([-1, -1, -1], [0.5, 0.5, 0.5])]
        save_boxes(tmp_path / "b.json", boxes)
        back = load_boxes(tmp_path / "b.json")
        for a, b in zip(boxes, back):
            np.testing.assert_array_equal(a.min_corner, b.min_corner)
            np.testing.assert_array_equal(a.max_corner, b.max_corner)

    def test_degenerate_box_rejected_at_load(self, tmp_path):
        (tmp_path / "b.json").write_text(json.dumps([{"min": [0, 0, 0], "max": [1, 0, 1]}]))
        with pytest.raises(ConfigError, match="zero volume"):
            load_boxes(tmp_path / "b.json")

    def test_labels_round_trip(self, tmp_path):
        lab = np.array([3, -1, 0, 12])
        write_labels(tmp_path / "l.txt", lab)
        assert (tmp_path / "l.txt").read_text() == "3\n-1\n0\n12\n"
        np.testing.assert_array_equal(read_labels(tmp_path / "l.txt"), lab)


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.w_n, cfg.w_c) == (0.96, 0.04)
        assert cfg.delta1_schedule == (0.9, 0.8, 0.7, 0.6, 0.5)
        assert cfg.delta2 == 0.75
        assert cfg.exclusion_after_claim and cfg.ascending_boxes

    def test_round_trip(self, tmp_path):
        cfg = PipelineConfig(w_n=0.5, w_c=0.5, delta1_schedule=[0.9, 0.7], exclusion_after_claim=False)
        cfg.dump(tmp_path / "c.json")
        back = PipelineConfig.load(tmp_path / "c.json")
        assert back == cfg
        back.dump(tmp_path / "d.json")
        assert (tmp_path / "c.json").read_text() == (tmp_path / "d.json").read_text()

    def test_unknown_key_rejected(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"w_n": 1.0, "wn": 1.0}))
        with pytest.raises(ConfigError, match="unknown config keys: wn"):
            PipelineConfig.load(tmp_path / "c.json")

    @pytest.mark.parametrize("bad", [
        {"w_n": -1.0}, {"w_n": 0.0, "w_c": 0.0}, {"fzs_k": 0.0}, {"delta2": 1.0},
        {"delta1_schedule": [0.5, 0.9]}, {"delta1_schedule": []}, {"knn_k": 2},
        {"depth_tolerance_m": 0.0}, {"distance_floor": 0.0}, {"confidence_proxy": "score"},
    ])
    def test_out_of_domain_rejected(self, bad):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict(bad)

    def test_invalid_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            PipelineConfig.load(tmp_path / "c.json")
