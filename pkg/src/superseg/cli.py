"""Command line entry point: segment, eval, synth, export, primitives."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .affinity import load_frames
from .config import PipelineConfig
from .errors import ConfigError, DimensionMismatchError, SupersegError
from .evaluation import evaluate, read_labels, write_labels
from .merging import load_boxes
from .plyio import load_ply, save_ply
from .primitives import compute_primitives


def instance_color(label: int):
    """Stable RGB in [0, 1] for an instance id; -1 is black."""
    if label < 0:
        return (0.0, 0.0, 0.0)
    b = hashlib.sha256(str(int(label)).encode()).digest()
    return tuple((48 + b[i] % 208) / 255.0 for i in range(3))


def paint(labels):
    labels = np.asarray(labels, dtype=np.int64)
    uniq, inv = np.unique(labels, return_inverse=True)
    table = np.array([instance_color(u) for u in uniq.tolist()]).reshape(-1, 3)
    return table[inv]


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    over = {}
    if args.wn is not None:
        over["w_n"] = args.wn
    if args.wc is not None:
        over["w_c"] = args.wc
    if over:
        try:
            cfg = replace(cfg, **over)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def _workers(n):
    if n <= 0:
        return os.cpu_count() or 1
    return n


def cmd_segment(args):
    from .pipeline import segment_scene

    cfg = _config(args)
    cloud, _ = load_ply(args.scene)
    frames = load_frames(args.frames)
    boxes = None if args.no_boxes or not args.boxes else load_boxes(args.boxes)
    os.makedirs(args.out, exist_ok=True)
    outputs = [os.path.join(args.out, n) for n in ("pred_labels.txt", "colored.ply", "manifest.json")]
    try:
        result = segment_scene(cloud, frames, boxes, cfg, workers=_workers(args.workers))
        labels = result.partition.labels
        write_labels(outputs[0], labels)
        save_ply(outputs[1], cloud.positions, paint(labels))
        manifest = result.manifest
        manifest["files"] = {
            "scene": {"path": os.path.abspath(args.scene), "sha256": file_digest(args.scene)},
            "frames": {n: file_digest(os.path.join(args.frames, n)) for n in sorted(os.listdir(args.frames))},
            "boxes": None if boxes is None else {"path": os.path.abspath(args.boxes),
                                                 "sha256": file_digest(args.boxes)},
        }
        manifest["workers"] = _workers(args.workers)
        with open(outputs[2], "w") as fh:
            json.dump(manifest, fh, indent=1)
            fh.write("\n")
    except BaseException:
        for p in outputs:
            if os.path.exists(p):
                os.remove(p)
        raise
    print(f"{result.partition.num_segments} instances from {result.primitives.num_segments} primitives "
          f"-> {args.out}", file=sys.stderr)
    return 0


def cmd_eval(args):
    pred = read_labels(args.pred)
    gt = read_labels(args.gt)
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"{args.pred} has {pred.size} labels, {args.gt} has {gt.size}")
    print(json.dumps(evaluate(pred, gt).to_dict(), indent=1))
    return 0


def cmd_synth(args):
    from .synth import SceneSpec, export_scene, generate_scene, room8_spec, shelf_spec, stacked_boxes_spec

    if args.spec:
        try:
            with open(args.spec) as fh:
                spec = SceneSpec.from_json(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"{args.spec}: {exc.strerror}") from None
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{args.spec}: bad scene spec: {exc}") from None
        if args.seed is not None:
            spec.seed = args.seed
    else:
        seed = args.seed or 0
        presets = {"room-8": room8_spec, "stacked": stacked_boxes_spec, "shelf": shelf_spec}
        spec = presets[args.preset](seed)
    if args.part_split is not None:
        spec.mask_corruption.part_split_prob = args.part_split
    export_scene(generate_scene(spec), args.out)
    return 0


def cmd_export(args):
    cloud, _ = load_ply(args.scene)
    labels = read_labels(args.labels)
    if labels.size != len(cloud):
        raise DimensionMismatchError(f"{args.labels} has {labels.size} labels, {args.scene} has {len(cloud)} points")
    save_ply(args.out, cloud.positions, paint(labels))
    return 0


def cmd_primitives(args):
    cfg = _config(args)
    cloud, _ = load_ply(args.scene)
    part = compute_primitives(cloud, cfg.primitive(), knn_k=cfg.knn_k)
    write_labels(args.out, part.labels)
    print(f"{part.num_segments} primitives -> {args.out}", file=sys.stderr)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="superseg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def tunables(sp):
        sp.add_argument("--config", help="JSON file with PipelineConfig keys")
        sp.add_argument("--wn", type=float, help="normal weight of the primitive edge weights")
        sp.add_argument("--wc", type=float, help="color weight of the primitive edge weights")

    s = sub.add_parser("segment", help="run the full pipeline on a scene")
    s.add_argument("--scene", required=True, help="PLY point cloud")
    s.add_argument("--frames", required=True, help="directory of <id>.json/.depth.pgm/.mask.pgm")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--boxes", help="JSON list of axis-aligned boxes")
    g.add_argument("--no-boxes", action="store_true", help="skip box refinement")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1, help="frame-processing threads (0 = all cores)")
    tunables(s)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("eval", help="score predicted labels against ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="SceneSpec JSON file")
    src.add_argument("--preset", choices=["room-8", "stacked", "shelf"])
    s.add_argument("--seed", type=int)
    s.add_argument("--part-split", type=float, help="override mask part_split_prob")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("export", help="paint a scene by instance labels")
    s.add_argument("--scene", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("primitives", help="write superpoint labels only")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    tunables(s)
    s.set_defaults(func=cmd_primitives)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SupersegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
