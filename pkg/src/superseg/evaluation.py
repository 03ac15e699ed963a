"""Class-agnostic instance segmentation scoring (AP25, AP50, mAP over 0.50:0.05:0.95)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAP_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
PROTOCOL = ("greedy matching in descending confidence order (ties: larger instance, then lower first "
            "point id); each prediction takes the unmatched ground truth of highest IoU if IoU >= threshold "
            "(ties: lower first point id); "
            "all-point interpolated AP; ground-truth points labeled -1 removed from every set")


@dataclass
class EvalReport:
    map: float
    ap50: float
    ap25: float
    per_threshold: list
    matches: list = field(default_factory=list)
    confidence_proxy: str = "point_count"
    protocol: str = PROTOCOL

    def to_dict(self):
        return {
            "map": self.map, "ap50": self.ap50, "ap25": self.ap25,
            "per_threshold": [[t, ap] for t, ap in self.per_threshold],
            "matches": self.matches,
            "confidence_proxy": self.confidence_proxy,
            "protocol": self.protocol,
        }


def iou(pred, gt) -> float:
    pred, gt = set(pred), set(gt)
    if not pred or not gt:
        raise ValueError("IoU needs two non-empty sets")
    inter = len(pred & gt)
    return inter / (len(pred) + len(gt) - inter)


def _rank(preds):
    """Prediction order: confidence desc, size desc, first point id asc."""
    keys = [(-float(conf), -len(pts), min(pts)) for pts, conf in preds]
    return sorted(range(len(preds)), key=lambda i: keys[i])


def _iou_matrix(preds, gts):
    """Dense IoU between prediction and gt point sets, computed via a label join."""
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    if sum(len(g) for g in gts) != len(set().union(*gts)):
        # overlapping ground truth: no label join possible
        return np.array([[len(p & g) / len(p | g) for g in gts] for p, _ in preds])
    n = 1 + max(max(max(p) for p, _ in preds), max(max(g) for g in gts))
    gt_of = np.full(n, -1, dtype=np.int64)
    for j, g in enumerate(gts):
        gt_of[np.fromiter(g, dtype=np.int64)] = j
    inter = np.zeros((len(preds), len(gts)))
    for i, (p, _) in enumerate(preds):
        hit = gt_of[np.fromiter(p, dtype=np.int64)]
        hit = hit[hit >= 0]
        inter[i] = np.bincount(hit, minlength=len(gts))
    psize = np.array([len(p) for p, _ in preds], dtype=np.float64)
    gsize = np.array([len(g) for g in gts], dtype=np.float64)
    return inter / (psize[:, None] + gsize[None, :] - inter)


def _ap_from_matrix(ious, order, n_gt, threshold):
    if n_gt == 0:
        return 1.0 if not order else 0.0
    if not order:
        return 0.0
    matched = np.zeros(n_gt, dtype=bool)
    tp = np.zeros(len(order))
    for r, i in enumerate(order):
        cand = np.where(matched, -1.0, ious[i])
        j = int(np.argmax(cand))
        if cand[j] >= threshold:
            matched[j] = True
            tp[r] = 1.0
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, len(order) + 1)
    recall = ctp / n_gt
    # all-point interpolation: running max of precision from the right
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * envelope))


def average_precision(preds, gts, iou_threshold: float) -> float:
    """AP of ``preds`` (list of ``(point_ids, confidence)``) against ``gts`` (list of point id sets)."""
    if not 0 < iou_threshold < 1:
        raise ValueError("iou_threshold must lie in (0, 1)")
    preds = [(set(p), c) for p, c in preds if len(p)]
    gts = [set(g) for g in gts if len(g)]
    return _ap_from_matrix(_iou_matrix(preds, gts), _rank(preds), len(gts), iou_threshold)


def _instances(labels, keep):
    ids = labels[keep]
    pts = np.flatnonzero(keep)
    ok = ids >= 0
    ids, pts = ids[ok], pts[ok]
    order = np.argsort(ids, kind="stable")
    ids, pts = ids[order], pts[order]
    uniq, start = np.unique(ids, return_index=True)
    groups = np.split(pts, start[1:]) if uniq.size else []
    return uniq.tolist(), [set(g.tolist()) for g in groups]


def evaluate(pred, gt, thresholds=MAP_THRESHOLDS) -> EvalReport:
    """Score a predicted partition against ground truth; prediction confidence is its point count."""
    p = np.asarray(getattr(pred, "labels", pred), dtype=np.int64)
    g = np.asarray(getattr(gt, "labels", gt), dtype=np.int64)
    if p.shape != g.shape:
        raise ValueError(f"label arrays differ in length: {p.size} vs {g.size}")
    keep = g >= 0
    pred_ids, pred_sets = _instances(p, keep)
    gt_ids, gt_sets = _instances(g, keep)
    # IoU ties go to the gt instance whose first point comes first, never to the smaller id
    by_first = sorted(range(len(gt_sets)), key=lambda j: min(gt_sets[j]))
    gt_ids, gt_sets = [gt_ids[j] for j in by_first], [gt_sets[j] for j in by_first]
    preds = [(s, len(s)) for s in pred_sets]
    ious = _iou_matrix(preds, gt_sets)
    order = _rank(preds)

    per = [(t, _ap_from_matrix(ious, order, len(gt_sets), t)) for t in thresholds]
    ap50 = _ap_from_matrix(ious, order, len(gt_sets), 0.5)
    ap25 = _ap_from_matrix(ious, order, len(gt_sets), 0.25)
    matches = []
    for i in order:
        best = int(np.argmax(ious[i])) if gt_sets else -1
        matches.append({
            "pred": int(pred_ids[i]), "size": len(pred_sets[i]),
            "best_iou": float(ious[i, best]) if best >= 0 else 0.0,
            "gt": int(gt_ids[best]) if best >= 0 else None,
        })
    return EvalReport(float(np.mean([ap for _, ap in per])), ap50, ap25, per, matches)


def read_labels(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        vals = [line.strip() for line in fh]
    if vals and vals[-1] == "":
        vals.pop()
    try:
        return np.array([int(v) for v in vals], dtype=np.int64)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_labels(path, labels):
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(f"{v}\n" for v in labels.tolist()))
