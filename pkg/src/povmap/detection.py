"""Detection scoring: IoU, greedy matching, interpolated AP, mAP and confusion."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .annotations import PARENT_CLASSES
from .errors import InputError
from .formats import Detection

N_CLASSES = len(PARENT_CLASSES)
BACKGROUND = N_CLASSES
RECALL_GRID = np.arange(101) / 100
IOU_THRESHOLDS = tuple((50 + 5 * i) / 100 for i in range(10))


def iou(a, b) -> float:
    return float(kernels.iou_matrix([a], [b])[0, 0])


def _by_image(items):
    out = {}
    for idx, item in enumerate(items):
        out.setdefault(item.image_id, []).append(idx)
    return out


def _ranked(dets):
    # stable: confidence ties keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match_detections(dets, gts, iou_threshold, backend=None):
    """Greedy same-class matching in descending-confidence order.

    ``dets`` and ``gts`` should already be restricted to one class. Returns
    the ranked detection indices and a parallel boolean array of TP flags.
    """
    order = _ranked(dets)
    gt_images = _by_image(gts)
    det_images = _by_image(dets)
    ious = {}
    for image_id, gidx in gt_images.items():
        didx = det_images.get(image_id)
        if didx:
            mat = kernels.iou_matrix([dets[i].box for i in didx], [gts[g].box for g in gidx],
                                     backend=backend)
            for row, d in enumerate(didx):
                ious[d] = mat[row]
    used = {image_id: np.zeros(len(g), dtype=bool) for image_id, g in gt_images.items()}
    tp = np.zeros(len(order), dtype=bool)
    for rank, d in enumerate(order):
        row = ious.get(d)
        if row is None:
            continue
        taken = used[dets[d].image_id]
        cand = np.where(taken | (row < iou_threshold), -1.0, row)
        best = int(np.argmax(cand))
        if cand[best] >= 0:
            taken[best] = True
            tp[rank] = True
    return order, tp


def interpolated_ap(recall, precision) -> float:
    """101-point AP: mean over r in {0, .01, ..., 1} of max precision at recall >= r."""
    recall = np.asarray(recall, dtype=float)
    precision = np.asarray(precision, dtype=float)
    if recall.size == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    sampled = np.where(idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0)
    return float(sampled.mean())


@dataclass
class APResult:
    ap: Optional[float]  # None when the class has no ground truth
    recall: np.ndarray
    precision: np.ndarray
    n_gt: int

    @property
    def pr_points(self):
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def match_and_ap(dets, gts, class_index, iou_threshold, backend=None) -> APResult:
    dets = [d for d in dets if d.class_index == class_index]
    gts = [g for g in gts if g.class_index == class_index]
    if not gts:
        return APResult(None, np.zeros(0), np.zeros(0), 0)
    _, tp = match_detections(dets, gts, iou_threshold, backend=backend)
    ctp = np.cumsum(tp)
    recall = ctp / len(gts)
    precision = ctp / np.arange(1, len(tp) + 1)
    return APResult(interpolated_ap(recall, precision), recall, precision, len(gts))


def per_class_ap(dets, gts, classes=range(N_CLASSES), thresholds=IOU_THRESHOLDS,
                 backend=None):
    """``{class: [AP at each threshold] or None}``."""
    out = {}
    for c in classes:
        results = [match_and_ap(dets, gts, c, t, backend=backend).ap for t in thresholds]
        out[c] = None if results[0] is None else results
    return out


def map_scores(dets, gts, classes=range(N_CLASSES), backend=None):
    """``(mAP@0.5, mAP@0.5:0.95)`` over classes that have ground truth."""
    table = per_class_ap(dets, gts, classes, backend=backend)
    defined = [v for v in table.values() if v is not None]
    if not defined:
        raise InputError("no class has ground truth; mAP is undefined")
    map50 = float(np.mean([v[0] for v in defined]))
    map5095 = float(np.mean([np.mean(v) for v in defined]))
    return map50, map5095


def confusion_matrix(dets, gts, iou_threshold=0.5, conf_threshold=0.25, n_classes=N_CLASSES,
                     backend=None):
    """(n_classes + 1) square count matrix; rows are ground truth, columns predictions.

    The last row and column stand for background. Matching is class-agnostic
    and one-to-one, taking pairs in descending IoU order.
    """
    bg = n_classes
    mat = np.zeros((n_classes + 1, n_classes + 1), dtype=np.int64)
    dets = [d for d in dets if d.confidence >= conf_threshold]
    det_images = _by_image(dets)
    gt_images = _by_image(gts)
    for image_id in sorted(set(det_images) | set(gt_images)):
        gidx = gt_images.get(image_id, [])
        didx = det_images.get(image_id, [])
        g_done = np.zeros(len(gidx), dtype=bool)
        d_done = np.zeros(len(didx), dtype=bool)
        if gidx and didx:
            ious = kernels.iou_matrix([gts[g].box for g in gidx], [dets[d].box for d in didx],
                                      backend=backend)
            gi, di = np.nonzero(ious >= iou_threshold)
            order = np.lexsort((di, gi, -ious[gi, di]))
            for a, b in zip(gi[order], di[order]):
                if g_done[a] or d_done[b]:
                    continue
                g_done[a] = d_done[b] = True
                mat[gts[gidx[a]].class_index, dets[didx[b]].class_index] += 1
        for a in np.flatnonzero(~g_done):
            mat[gts[gidx[a]].class_index, bg] += 1
        for b in np.flatnonzero(~d_done):
            mat[bg, dets[didx[b]].class_index] += 1
    return mat


@dataclass
class EvalReport:
    ap: dict            # class -> list of AP per IoU threshold, or None
    map50: float
    map5095: float
    pr_points: dict     # class -> list of (recall, precision) at IoU 0.5
    confusion: np.ndarray
    n_gt: dict = field(default_factory=dict)

    def summary_lines(self):
        lines = [f"map50={self.map50:.6f}", f"map5095={self.map5095:.6f}"]
        for c, aps in self.ap.items():
            val = "undefined" if aps is None else f"{aps[0]:.6f}"
            lines.append(f"ap50.{c}={val}")
        return lines


def evaluate(dets, gts, iou_threshold=0.5, conf_threshold=0.25, backend=None) -> EvalReport:
    for d in list(dets) + list(gts):
        if not 0 <= d.class_index < N_CLASSES:
            raise InputError(f"class index {d.class_index} outside 0..{N_CLASSES - 1}")
    ap, pr, n_gt = {}, {}, {}
    for c in range(N_CLASSES):
        results = [match_and_ap(dets, gts, c, t, backend=backend) for t in IOU_THRESHOLDS]
        ap[c] = None if results[0].ap is None else [r.ap for r in results]
        pr[c] = results[0].pr_points
        n_gt[c] = results[0].n_gt
    defined = [v for v in ap.values() if v is not None]
    if not defined:
        raise InputError("no class has ground truth; mAP is undefined")
    return EvalReport(
        ap,
        float(np.mean([v[0] for v in defined])),
        float(np.mean([np.mean(v) for v in defined])),
        pr,
        confusion_matrix(dets, gts, iou_threshold, conf_threshold, backend=backend),
        n_gt,
    )


__all__ = ["Detection", "iou", "match_and_ap", "map_scores", "confusion_matrix", "evaluate",
           "interpolated_ap", "EvalReport"]
