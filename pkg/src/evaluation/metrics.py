"""
Detection metrics: IoU, greedy matching, all-point AP, mAP, precision and recall
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.constants import IOU_THRESH
from src.detector.decode import box_iou

logger = logging.getLogger(__name__)


def iou(a, b) -> float:
    """Intersection over union of two boxes with cx, cy, w, h; 0 for a zero-area box"""
    return box_iou(a, b)


def match_flags(dets: Sequence, gts: Sequence, iou_thresh: float = IOU_THRESH) -> List[bool]:
    """
    Greedy matching in the given detection order

    Each detection takes the unmatched ground truth of its class with the
    highest IoU, provided IoU >= iou_thresh.

    Returns:
        True (true positive) or False per detection
    """
    taken = [False] * len(gts)
    flags = []
    for det in dets:
        best, best_iou = -1, iou_thresh
        for index, gt in enumerate(gts):
            if taken[index] or gt.class_id != det.class_id:
                continue
            overlap = iou(det, gt)
            if overlap >= best_iou:
                best, best_iou = index, overlap
        if best >= 0:
            taken[best] = True
        flags.append(best >= 0)
    return flags


def match_detections(dets: Sequence, gts: Sequence,
                     iou_thresh: float = IOU_THRESH) -> Tuple[int, int, int]:
    """(true positives, false positives, false negatives); dets sorted by confidence"""
    flags = match_flags(dets, gts, iou_thresh)
    tp = sum(flags)
    return tp, len(flags) - tp, len(gts) - tp


def average_precision(flags: Sequence[bool], n_ground_truth: int) -> Optional[float]:
    """
    All-point interpolated area under the precision-recall curve

    Args:
        flags: TP/FP per detection, sorted by confidence descending
        n_ground_truth: Ground truths of the class

    Returns:
        AP, or None when the class has no ground truth
    """
    if n_ground_truth == 0:
        return None
    if len(flags) == 0:
        return 0.0
    hits = np.asarray(flags, dtype=np.float64)
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    recall = np.concatenate([[0.0], tp / n_ground_truth, [1.0]])
    precision = np.concatenate([[0.0], tp / (tp + fp), [0.0]])
    # Precision envelope
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    changes = np.nonzero(recall[1:] != recall[:-1])[0]
    return float(np.sum((recall[changes + 1] - recall[changes]) * precision[changes + 1]))


@dataclass(frozen=True)
class MetricsReport:
    """
    Dataset-level detection quality

    per_class_ap holds None for classes without ground truth; map averages the rest.
    """
    map: float
    recall: float
    precision: float
    per_class_ap: Tuple[Optional[float], ...]
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0

    def as_row(self) -> Dict[str, float]:
        return {"mAP": self.map, "recall": self.recall, "precision": self.precision}


def evaluate_detections(predictions: Sequence[Sequence], ground_truths: Sequence[Sequence],
                        n_classes: int, iou_thresh: float = IOU_THRESH,
                        thresholded: Optional[Sequence[Sequence]] = None) -> MetricsReport:
    """
    Aggregate per-image detections into a MetricsReport

    Args:
        predictions: Per image, detections scored for AP (low confidence cut)
        ground_truths: Per image, labels
        n_classes: Number of classes
        iou_thresh: Match IoU
        thresholded: Per image, detections at the operating confidence for
            precision and recall; defaults to predictions

    Returns:
        MetricsReport
    """
    if len(predictions) != len(ground_truths):
        raise ValueError(f"{len(predictions)} prediction sets for {len(ground_truths)} images")
    thresholded = predictions if thresholded is None else thresholded

    scored: Dict[int, List[Tuple[float, bool]]] = {c: [] for c in range(n_classes)}
    n_gt = np.zeros(n_classes, dtype=int)
    for dets, gts in zip(predictions, ground_truths):
        for gt in gts:
            n_gt[gt.class_id] += 1
        ordered = sorted(dets, key=lambda d: -d.confidence)
        for det, hit in zip(ordered, match_flags(ordered, gts, iou_thresh)):
            if 0 <= det.class_id < n_classes:
                scored[det.class_id].append((det.confidence, hit))

    per_class = []
    for class_id in range(n_classes):
        entries = sorted(scored[class_id], key=lambda item: -item[0])
        per_class.append(average_precision([hit for _, hit in entries], int(n_gt[class_id])))
    present = [ap for ap in per_class if ap is not None]
    mean_ap = float(np.mean(present)) if present else 0.0

    tp = fp = fn = 0
    for dets, gts in zip(thresholded, ground_truths):
        ordered = sorted(dets, key=lambda d: -d.confidence)
        t, f, n = match_detections(ordered, gts, iou_thresh)
        tp, fp, fn = tp + t, fp + f, fn + n
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return MetricsReport(mean_ap, recall, precision, tuple(per_class), tp, fp, fn)
