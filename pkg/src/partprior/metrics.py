"""Per-class IoU and mIoU (background included)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .labelmap import CLASS_NAMES, NUM_LABELS


@dataclass(frozen=True)
class Metrics:
    iou: tuple  # per class; None when the class is absent from both pred and gt
    miou: float

    def to_json(self) -> dict:
        return {
            "miou": self.miou,
            "iou": {name: v for name, v in zip(CLASS_NAMES, self.iou)},
        }


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, num_labels: int = NUM_LABELS) -> np.ndarray:
    """``cm[g, p]`` counts pixels with ground truth ``g`` predicted as ``p``."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    if gt.size and (gt.max() >= num_labels or pred.max() >= num_labels):
        raise ValueError(f"labels must lie in 0..{num_labels - 1}")
    idx = gt.astype(np.int64).ravel() * num_labels + pred.astype(np.int64).ravel()
    return np.bincount(idx, minlength=num_labels ** 2).reshape(num_labels, num_labels)


def metrics_from_confusion(cm: np.ndarray) -> Metrics:
    inter = np.diag(cm).astype(float)
    union = cm.sum(0) + cm.sum(1) - np.diag(cm)
    iou = tuple(float(i / u) if u > 0 else None for i, u in zip(inter, union))
    present = [v for v in iou if v is not None]
    return Metrics(iou, float(np.mean(present)) if present else float("nan"))


def evaluate_miou(pred, gt, num_labels: int = NUM_LABELS) -> Metrics:
    """IoU over one label grid or a list of them (counts pooled over the list)."""
    if isinstance(pred, (list, tuple)):
        if len(pred) != len(gt):
            raise ShapeMismatch(f"{len(pred)} predictions for {len(gt)} ground truths")
        cm = np.zeros((num_labels, num_labels), dtype=np.int64)
        for p, g in zip(pred, gt):
            cm += confusion_matrix(p, g, num_labels)
    else:
        cm = confusion_matrix(pred, gt, num_labels)
    return metrics_from_confusion(cm)
