from __future__ import annotations

import numpy as np

from nfskit.errors import InvalidArgumentError


def confusion_matrix(gt, pred, num_classes: int) -> np.ndarray:
    """``K x K`` counts, rows ground truth, columns prediction."""
    gt = np.asarray(gt, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if gt.shape != pred.shape:
        raise InvalidArgumentError(f"{gt.size} ground-truth labels vs {pred.size} predictions")
    for name, a in (("ground truth", gt), ("prediction", pred)):
        if a.size and (a.min() < 0 or a.max() >= num_classes):
            raise InvalidArgumentError(f"{name} label outside [0, {num_classes})")
    flat = np.bincount(gt * num_classes + pred, minlength=num_classes * num_classes)
    return flat.reshape(num_classes, num_classes)


def iou_from_confusion(cm: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-class IoU and their mean; classes absent from both sides are NaN and skipped."""
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1) - tp
    iou = np.full(cm.shape[0], np.nan)
    present = denom > 0
    iou[present] = tp[present] / denom[present]
    mean = float(iou[present].mean()) if present.any() else float("nan")
    return iou, mean


def miou(gt, pred, num_classes: int) -> tuple[np.ndarray, float]:
    return iou_from_confusion(confusion_matrix(gt, pred, num_classes))


def rmiou(out_domain_miou: float, in_domain_miou: float) -> float:
    """Out-of-domain mIoU as a percentage of the in-domain test mIoU."""
    if not in_domain_miou > 0:
        raise InvalidArgumentError("in-domain mIoU must be positive")
    return 100.0 * (out_domain_miou / in_domain_miou)
