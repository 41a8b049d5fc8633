"""Object-detection evaluation: matching, precision/recall/F1, AP and mAP,
confusion matrices and TP/FP/FN error profiles.

Matching is greedy: predictions in descending confidence each claim the
not-yet-matched ground truth with the highest IoU above the threshold.
The same matcher serves precision/recall/AP (class-constrained) and the
confusion matrix (class-relaxed), toggled by one flag. AP uses 101-point
interpolation throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import Detection, GroundTruthBox, iou

RANGE_IOUS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
BACKGROUND = -1

_RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class GtMatchResult:
    matches: tuple[tuple[int, int], ...]
    unmatched_preds: tuple[int, ...]
    unmatched_gts: tuple[int, ...]


def match_to_gt(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_thresh: float,
    *,
    class_constrained: bool = True,
) -> GtMatchResult:
    """One-to-one greedy matching of predictions to ground truth.

    Predictions are processed in descending confidence (ties keep input
    order); each claims the unmatched ground truth with the highest
    IoU >= iou_thresh, restricted to its own class unless
    ``class_constrained`` is off. Equal-IoU ties go to the lower gt index.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    gt_taken = [False] * len(gts)
    matches: list[tuple[int, int]] = []
    unmatched_preds: list[int] = []
    for pred_idx in order:
        pred = preds[pred_idx]
        best_iou = 0.0
        best_gt = -1
        for gt_idx, gt in enumerate(gts):
            if gt_taken[gt_idx]:
                continue
            if class_constrained and gt.class_id != pred.class_id:
                continue
            overlap = iou(pred.box, gt.box)
            if overlap >= iou_thresh and overlap > best_iou:
                best_iou = overlap
                best_gt = gt_idx
        if best_gt >= 0:
            gt_taken[best_gt] = True
            matches.append((pred_idx, best_gt))
        else:
            unmatched_preds.append(pred_idx)
    unmatched_gts = tuple(i for i, taken in enumerate(gt_taken) if not taken)
    return GtMatchResult(tuple(matches), tuple(unmatched_preds), unmatched_gts)


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def n_gt(self) -> int:
        return self.tp + self.fn


@dataclass
class ErrorProfile:
    """Dataset-level TP/FP/FN counts, per class and in total."""

    per_class: dict[int, ClassCounts] = field(default_factory=dict)

    def counts(self, class_id: int) -> ClassCounts:
        return self.per_class.setdefault(class_id, ClassCounts())

    @property
    def tp(self) -> int:
        return sum(c.tp for c in self.per_class.values())

    @property
    def fp(self) -> int:
        return sum(c.fp for c in self.per_class.values())

    @property
    def fn(self) -> int:
        return sum(c.fn for c in self.per_class.values())


def error_profile(
    frames: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox]]],
    iou_thresh: float = 0.5,
) -> ErrorProfile:
    """TP/FP/FN per class over (predictions, ground truth) frame pairs."""
    profile = ErrorProfile()
    for preds, gts in frames:
        result = match_to_gt(preds, gts, iou_thresh)
        for pred_idx, _ in result.matches:
            profile.counts(preds[pred_idx].class_id).tp += 1
        for pred_idx in result.unmatched_preds:
            profile.counts(preds[pred_idx].class_id).fp += 1
        for gt_idx in result.unmatched_gts:
            profile.counts(gts[gt_idx].class_id).fn += 1
    return profile


@dataclass(frozen=True)
class Prf:
    precision: float
    recall: float
    f1: float
    degenerate_precision: bool = False
    degenerate_recall: bool = False


def aggregate_from_counts(tp: int, fp: int, fn: int) -> Prf:
    """Micro precision/recall/F1 from pooled counts; 0 with a flag on empty denominators."""
    degenerate_p = tp + fp == 0
    degenerate_r = tp + fn == 0
    precision = 0.0 if degenerate_p else tp / (tp + fp)
    recall = 0.0 if degenerate_r else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Prf(precision, recall, f1, degenerate_p, degenerate_r)


def average_precision(
    scored_flags: Sequence[tuple[float, bool]], n_gt: int
) -> float | None:
    """AP by 101-point interpolation over a (confidence, is-true-positive) list.

    Detections are ranked by descending confidence with false positives ahead
    of true positives at equal confidence, which makes the result a function
    of the multiset alone (image order cannot change it). Returns None when
    the class has no ground truth, signalling exclusion from mAP.
    """
    if n_gt == 0:
        return None
    if not scored_flags:
        return 0.0
    ranked = sorted(scored_flags, key=lambda sf: (-sf[0], sf[1]))
    flags = np.array([f for _, f in ranked], dtype=bool)
    tp_cum = np.cumsum(flags)
    recall = tp_cum / n_gt
    precision = tp_cum / np.arange(1, len(flags) + 1)
    # Precision envelope: best precision achievable at each recall or beyond.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    indices = np.searchsorted(recall, _RECALL_POINTS, side="left")
    sampled = np.where(indices < len(flags), envelope[np.minimum(indices, len(flags) - 1)], 0.0)
    return float(sampled.mean())


@dataclass(frozen=True)
class ClassEval:
    ap50: float | None
    ap_range: float | None
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    n_gt: int


@dataclass(frozen=True)
class EvalReport:
    """Per-class and aggregate evaluation numbers for one detection source."""

    per_class: Mapping[int, ClassEval]
    map50: float
    map_range: float
    micro: Prf
    macro_f1: float
    confusion: np.ndarray  # (K+1)^2, row = gt class, col = predicted class
    class_order: tuple[int, ...]
    range_ious: tuple[float, ...] = RANGE_IOUS

    @property
    def tp(self) -> int:
        return sum(c.tp for c in self.per_class.values())

    @property
    def fp(self) -> int:
        return sum(c.fp for c in self.per_class.values())

    @property
    def fn(self) -> int:
        return sum(c.fn for c in self.per_class.values())

    def as_dict(self) -> dict:
        return {
            "per_class": {
                str(cid): {
                    "ap50": c.ap50,
                    "ap_range": c.ap_range,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "tp": c.tp,
                    "fp": c.fp,
                    "fn": c.fn,
                    "n_gt": c.n_gt,
                }
                for cid, c in sorted(self.per_class.items())
            },
            "map50": self.map50,
            "map_range": self.map_range,
            "micro_precision": self.micro.precision,
            "micro_recall": self.micro.recall,
            "micro_f1": self.micro.f1,
            "macro_f1": self.macro_f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "confusion": self.confusion.tolist(),
            "class_order": list(self.class_order),
        }


def map_range(
    frames: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox]]],
    class_order: Sequence[int],
    iou_set: Sequence[float] = RANGE_IOUS,
) -> float:
    """Mean over IoU thresholds of the mean-over-classes AP.

    Classes without ground truth are excluded at every threshold, so this
    equals the mean of per-class threshold-averaged APs.
    """
    if not iou_set:
        raise ValueError("iou_set must be non-empty")
    n_gt = {c: 0 for c in class_order}
    for _, gts in frames:
        for gt in gts:
            n_gt[gt.class_id] += 1
    scored = [c for c in class_order if n_gt[c] > 0]
    if not scored:
        return 0.0
    per_threshold = []
    for thresh in iou_set:
        flags: dict[int, list[tuple[float, bool]]] = {c: [] for c in scored}
        for preds, gts in frames:
            matched = {p for p, _ in match_to_gt(preds, gts, thresh).matches}
            for idx, pred in enumerate(preds):
                if pred.class_id in flags:
                    flags[pred.class_id].append((pred.confidence, idx in matched))
        aps = [average_precision(flags[c], n_gt[c]) for c in scored]
        per_threshold.append(float(np.mean(aps)))
    return float(np.mean(per_threshold))


def confusion_matrix(
    frames: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox]]],
    class_order: Sequence[int],
    iou_thresh: float = 0.5,
    normalize: bool = False,
    class_constrained: bool = False,
) -> np.ndarray:
    """(K+1)x(K+1) confusion matrix; the last row/column is background.

    By default uses class-relaxed best-IoU matching so cross-class confusions
    show up off-diagonal; with ``class_constrained`` it shares the matcher
    the precision/recall counts use, and its marginals reproduce them.
    Unmatched predictions land in the background row; missed ground truth
    lands in the background column. Row-normalized on request (all-zero rows
    stay zero).
    """
    index = {class_id: i for i, class_id in enumerate(class_order)}
    k = len(class_order)
    matrix = np.zeros((k + 1, k + 1), dtype=float)
    for preds, gts in frames:
        result = match_to_gt(preds, gts, iou_thresh, class_constrained=class_constrained)
        for pred_idx, gt_idx in result.matches:
            matrix[index[gts[gt_idx].class_id], index[preds[pred_idx].class_id]] += 1
        for pred_idx in result.unmatched_preds:
            matrix[k, index[preds[pred_idx].class_id]] += 1
        for gt_idx in result.unmatched_gts:
            matrix[index[gts[gt_idx].class_id], k] += 1
    if normalize:
        row_sums = matrix.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            matrix = np.where(row_sums > 0, matrix / row_sums, 0.0)
    return matrix


def evaluate_detections(
    frames: Sequence[tuple[Sequence[Detection], Sequence[GroundTruthBox]]],
    class_order: Sequence[int],
    primary_iou: float = 0.5,
    range_ious: Sequence[float] = RANGE_IOUS,
) -> EvalReport:
    """Full evaluation of one prediction source against ground truth.

    ``frames`` pairs each image's predictions with its ground truth; images
    with no boxes at all still count. Classes without any ground truth are
    excluded from mAP and macro-F1 (their ap fields are None).
    """
    class_order = tuple(class_order)
    n_gt = {c: 0 for c in class_order}
    for _, gts in frames:
        for gt in gts:
            n_gt[gt.class_id] += 1

    # (confidence, is_tp) per class per IoU threshold, pooled over the dataset.
    thresholds = tuple(dict.fromkeys((primary_iou, *range_ious)))
    flags: dict[float, dict[int, list[tuple[float, bool]]]] = {
        t: {c: [] for c in class_order} for t in thresholds
    }
    profile = ErrorProfile()
    for c in class_order:
        profile.counts(c)
    for preds, gts in frames:
        for thresh in thresholds:
            result = match_to_gt(preds, gts, thresh)
            matched_preds = {p for p, _ in result.matches}
            for pred_idx, pred in enumerate(preds):
                flags[thresh][pred.class_id].append(
                    (pred.confidence, pred_idx in matched_preds)
                )
            if thresh == primary_iou:
                for pred_idx, _ in result.matches:
                    profile.counts(preds[pred_idx].class_id).tp += 1
                for pred_idx in result.unmatched_preds:
                    profile.counts(preds[pred_idx].class_id).fp += 1
                for gt_idx in result.unmatched_gts:
                    profile.counts(gts[gt_idx].class_id).fn += 1

    per_class: dict[int, ClassEval] = {}
    for c in class_order:
        counts = profile.counts(c)
        prf = aggregate_from_counts(counts.tp, counts.fp, counts.fn)
        ap50 = average_precision(flags[primary_iou][c], n_gt[c])
        if n_gt[c] == 0:
            ap_range = None
        else:
            aps = [average_precision(flags[t][c], n_gt[c]) for t in range_ious]
            ap_range = float(np.mean([a for a in aps if a is not None]))
        per_class[c] = ClassEval(
            ap50, ap_range, prf.precision, prf.recall, prf.f1,
            counts.tp, counts.fp, counts.fn, n_gt[c],
        )

    scored = [c for c in class_order if n_gt[c] > 0]
    map50 = float(np.mean([per_class[c].ap50 for c in scored])) if scored else 0.0
    map_range = float(np.mean([per_class[c].ap_range for c in scored])) if scored else 0.0
    micro = aggregate_from_counts(profile.tp, profile.fp, profile.fn)
    macro_f1 = float(np.mean([per_class[c].f1 for c in scored])) if scored else 0.0
    confusion = confusion_matrix(frames, class_order, primary_iou)
    return EvalReport(
        per_class=per_class,
        map50=map50,
        map_range=map_range,
        micro=micro,
        macro_f1=macro_f1,
        confusion=confusion,
        class_order=class_order,
        range_ious=tuple(range_ious),
    )
