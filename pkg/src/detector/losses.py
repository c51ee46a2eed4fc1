"""
Detector objectives with analytic gradients w.r.t. the raw grid
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.core.constants import (
    LAMBDA_NOOBJ, LAMBDA_BOX, LAMBDA_CLS, ATTACK_LAMBDA, PROB_CLAMP,
)
from src.core.errors import DimensionError

logger = logging.getLogger(__name__)


@dataclass
class LossResult:
    """Scalar loss, its gradient w.r.t. the raw predictions, and the per-term breakdown"""
    value: float
    grad: np.ndarray
    terms: Dict[str, float] = field(default_factory=dict)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) without overflow"""
    return np.logaddexp(0.0, x)


def bce_with_logits(target, logit) -> np.ndarray:
    """BCE(target, sigmoid(logit)) in log-sum-exp form"""
    logit = np.asarray(logit, dtype=np.float64)
    return softplus(logit) - np.asarray(target, dtype=np.float64) * logit


def bce_prob(target, prob) -> np.ndarray:
    """BCE on probabilities, clamped to [1e-7, 1 - 1e-7]"""
    p = np.clip(np.asarray(prob, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = np.asarray(target, dtype=np.float64)
    return -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))


def _values(raw) -> np.ndarray:
    return np.asarray(getattr(raw, "values", raw), dtype=np.float64)


def cell_of(cx: float, cy: float, grid_s: int) -> Tuple[int, int]:
    """Grid cell (row, col) holding a frequency-frame centre; row 0 is the top"""
    row = min(int(np.floor((1.0 - cy) * grid_s)), grid_s - 1)
    col = min(int(np.floor(cx * grid_s)), grid_s - 1)
    return max(row, 0), max(col, 0)


def assign_labels(labels: Sequence, grid_s: int, n_classes: int) -> Dict[Tuple[int, int], object]:
    """
    Centre-cell assignment

    Each label goes to the cell containing its centre; when two centres share
    a cell the first label keeps it.
    """
    assigned = {}
    for label in labels:
        if not 0 <= label.class_id < n_classes:
            raise ValueError(f"label class {label.class_id} outside [0, {n_classes})")
        if not (0.0 <= label.cx <= 1.0 and 0.0 <= label.cy <= 1.0):
            raise ValueError(f"label centre ({label.cx}, {label.cy}) outside the unit square")
        cell = cell_of(label.cx, label.cy, grid_s)
        if cell in assigned:
            logger.debug("Cell %s already holds a label; dropping class %d", cell, label.class_id)
            continue
        assigned[cell] = label
    return assigned


def training_loss(raw, labels: Sequence, lambda_noobj: float = LAMBDA_NOOBJ,
                  lambda_box: float = LAMBDA_BOX, lambda_cls: float = LAMBDA_CLS) -> LossResult:
    """
    Grid detection loss

    Sum over assigned cells of BCE(1, C) + lambda_box * squared error of the
    sigmoid box offsets + lambda_cls * per-class BCE, plus lambda_noobj * BCE(0, C)
    over the remaining cells.

    Args:
        raw: RawGrid or S x S x (5 + C) array
        labels: Ground-truth labels in the frequency frame

    Returns:
        LossResult with grad shaped like raw
    """
    values = _values(raw)
    grid_s, n_classes = values.shape[0], values.shape[2] - 5
    assigned = assign_labels(labels, grid_s, n_classes)

    obj_logit = values[..., 0]
    mask = np.zeros((grid_s, grid_s), dtype=bool)
    for row, col in assigned:
        mask[row, col] = True

    grad = np.zeros_like(values)
    c_hat = expit(obj_logit)

    obj = float(np.sum(softplus(-obj_logit[mask])))
    noobj = float(np.sum(softplus(obj_logit[~mask])))
    grad[..., 0] = np.where(mask, c_hat - 1.0, lambda_noobj * c_hat)

    box = 0.0
    cls = 0.0
    for (row, col), label in assigned.items():
        target = np.array([
            label.cx * grid_s - col,
            (1.0 - label.cy) * grid_s - row,
            label.w,
            label.h,
        ])
        sig = expit(values[row, col, 1:5])
        diff = sig - target
        box += float(np.sum(diff ** 2))
        grad[row, col, 1:5] = lambda_box * 2.0 * diff * sig * (1.0 - sig)

        onehot = np.zeros(n_classes)
        onehot[label.class_id] = 1.0
        class_logit = values[row, col, 5:]
        cls += float(np.sum(bce_with_logits(onehot, class_logit)))
        grad[row, col, 5:] = lambda_cls * (expit(class_logit) - onehot)

    terms = {"obj": obj, "noobj": lambda_noobj * noobj, "box": lambda_box * box, "cls": lambda_cls * cls}
    return LossResult(float(sum(terms.values())), grad, terms)


def attack_loss(raw, target_set: Optional[Iterable] = None,
                lam: float = ATTACK_LAMBDA) -> LossResult:
    """
    Vanishing-attack objective

    L = sum over cells in O of BCE(1, C) + lam * sum over the rest of BCE(0, C).
    With an empty target set only the second term survives, so descending L
    pushes every objectness score towards 0.

    Args:
        raw: RawGrid or S x S x (5 + C) array
        target_set: Boxes (anything with cx, cy) or (row, col) cells; None means empty
        lam: Weight of the no-object term

    Returns:
        LossResult with grad shaped like raw (non-zero only in the objectness channel)
    """
    values = _values(raw)
    if values.ndim != 3:
        raise DimensionError(f"raw grid must be 3-D, got {values.shape}")
    grid_s = values.shape[0]
    mask = np.zeros((grid_s, grid_s), dtype=bool)
    for target in target_set or ():
        if hasattr(target, "cx"):
            row, col = cell_of(target.cx, target.cy, grid_s)
        else:
            row, col = target
        mask[row, col] = True

    logit = values[..., 0]
    c_hat = expit(logit)
    obj = float(np.sum(softplus(-logit[mask])))
    noobj = float(np.sum(softplus(logit[~mask])))

    grad = np.zeros_like(values)
    grad[..., 0] = np.where(mask, c_hat - 1.0, lam * c_hat)
    return LossResult(obj + lam * noobj, grad, {"obj": obj, "noobj": lam * noobj})
