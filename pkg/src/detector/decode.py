"""
Grid decoding and non-maximum suppression
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.special import expit

from src.core.errors import DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawGrid:
    """
    Raw per-cell predictions, S x S x (5 + n_classes)

    Channel order: objectness logit, tx, ty, tw, th, class logits.
    Row 0 of the grid is the top of the image (highest frequency).
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[0] != values.shape[1] or values.shape[2] < 6:
            raise DimensionError(f"raw grid must be S x S x (5 + C), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DimensionError("raw grid contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def grid_s(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[2] - 5

    @property
    def objectness(self) -> np.ndarray:
        """C_hat per cell"""
        return expit(self.values[..., 0])


@dataclass(frozen=True)
class DetectionBox:
    """
    A decoded detection in the time-frequency frame

    cx runs along time, cy along frequency (0 = DC, 1 = Nyquist).
    """
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float

    def extent(self):
        """(x0, x1, y0, y1)"""
        return (self.cx - self.w / 2, self.cx + self.w / 2,
                self.cy - self.h / 2, self.cy + self.h / 2)


def box_iou(a, b) -> float:
    """Intersection over union of two (cx, cy, w, h) boxes; 0 if either has no area"""
    if a.w <= 0 or a.h <= 0 or b.w <= 0 or b.h <= 0:
        return 0.0
    iw = min(a.cx + a.w / 2, b.cx + b.w / 2) - max(a.cx - a.w / 2, b.cx - b.w / 2)
    ih = min(a.cy + a.h / 2, b.cy + b.h / 2) - max(a.cy - a.h / 2, b.cy - b.h / 2)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return float(inter / (a.w * a.h + b.w * b.h - inter))


def nms(boxes: List[DetectionBox], iou_thresh: float) -> List[DetectionBox]:
    """
    Greedy per-class suppression

    A box is dropped when it overlaps a higher-confidence box of its class
    with IoU > iou_thresh. Output is sorted by confidence, highest first.
    """
    ordered = sorted(boxes, key=lambda box: -box.confidence)
    kept: List[DetectionBox] = []
    for box in ordered:
        if all(k.class_id != box.class_id or box_iou(k, box) <= iou_thresh for k in kept):
            kept.append(box)
    return kept


def decode(raw: RawGrid, conf_thresh: float, nms_iou: float) -> List[DetectionBox]:
    """
    Turn a raw grid into detections

    Cell (i, j) maps to cx = (j + sig(tx)) / S, cy = 1 - (i + sig(ty)) / S,
    w = sig(tw), h = sig(th); cells with C_hat >= conf_thresh are kept and
    passed through per-class NMS.

    Args:
        raw: Single-image predictions
        conf_thresh: Objectness cut in [0, 1]
        nms_iou: Suppression IoU in [0, 1]

    Returns:
        Detections sorted by confidence
    """
    if not 0.0 <= conf_thresh <= 1.0 or not 0.0 <= nms_iou <= 1.0:
        raise ValueError("thresholds must lie in [0, 1]")
    size = raw.grid_s
    confidence = raw.objectness
    rows, cols = np.nonzero(confidence >= conf_thresh)
    if rows.size == 0:
        return []

    cells = raw.values[rows, cols]
    offsets = expit(cells[:, 1:5])
    classes = np.argmax(cells[:, 5:], axis=1)
    boxes = [
        DetectionBox(
            class_id=int(classes[n]),
            cx=float((cols[n] + offsets[n, 0]) / size),
            cy=float(1.0 - (rows[n] + offsets[n, 1]) / size),
            w=float(offsets[n, 2]),
            h=float(offsets[n, 3]),
            confidence=float(confidence[rows[n], cols[n]]),
        )
        for n in range(rows.size)
    ]
    kept = nms(boxes, nms_iou)
    logger.debug("Decoded %d candidates, %d after NMS", len(boxes), len(kept))
    return kept
