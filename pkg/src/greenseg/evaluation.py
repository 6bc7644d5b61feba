"""Segmentation metrics, fold aggregation and report/visualization output."""

from __future__ import annotations

import dataclasses
import json
from typing import Optional, Sequence

import numpy as np

from .core_io import CLASS_INDEX, CLASS_NAMES, NUM_CLASSES, PointCloud
from .errors import ArgumentError, EmptyInputError

# RGB palette for the 13 classes, in class order.
PALETTE = np.array(
    [
        [0, 255, 0],  # ceiling
        [0, 0, 255],  # floor
        [0, 255, 255],  # wall
        [255, 255, 0],  # beam
        [255, 0, 255],  # column
        [100, 100, 255],  # window
        [200, 200, 100],  # door
        [170, 120, 200],  # table
        [255, 0, 0],  # chair
        [200, 100, 100],  # sofa
        [10, 200, 100],  # bookcase
        [200, 200, 200],  # board
        [50, 50, 50],  # clutter
    ],
    dtype=np.uint8,
)

ABSENT_POLICIES = ("skip", "zero")


def confusion_matrix(n_classes: int = NUM_CLASSES):
    return np.zeros((n_classes, n_classes), dtype=np.int64)


def accumulate(cm, truth, pred):
    """Add one batch of (truth, prediction) pairs; rows are ground truth."""
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if truth.shape != pred.shape:
        raise ArgumentError(f"{truth.size} truth labels but {pred.size} predictions")
    k = cm.shape[0]
    if truth.size and (min(truth.min(), pred.min()) < 0 or max(truth.max(), pred.max()) >= k):
        raise ArgumentError(f"labels must lie in 0..{k - 1}")
    return cm + np.bincount(truth * k + pred, minlength=k * k).reshape(k, k)


def compute_iou(cm, absent: str = "skip"):
    """Per-class IoU, mIoU and OA from a confusion matrix.

    ``absent`` decides how classes with an empty union (never in truth nor
    prediction) enter the mean: ``"skip"`` leaves them out, ``"zero"`` counts
    them as 0. Either way their per-class entry is 0.
    """
    if absent not in ABSENT_POLICIES:
        raise ArgumentError(f"absent policy must be one of {ABSENT_POLICIES}")
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total <= 0:
        raise EmptyInputError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    union = cm.sum(axis=0) + cm.sum(axis=1) - np.diag(cm)
    iou = np.where(union > 0, tp / np.where(union > 0, union, 1), 0.0)
    if absent == "skip":
        miou = float(iou[union > 0].mean())
    else:
        miou = float(iou.mean())
    oa = float(tp.sum() / total)
    return iou, miou, oa


@dataclasses.dataclass
class EvalReport:
    per_class_iou: np.ndarray
    miou: float
    oa: float
    fold: Optional[int] = None
    point_count: int = 0
    confusion: Optional[np.ndarray] = None

    @classmethod
    def from_confusion(cls, cm, fold=None, absent="skip"):
        iou, miou, oa = compute_iou(cm, absent)
        return cls(iou, miou, oa, fold, int(np.asarray(cm).sum()), np.asarray(cm))

    def to_dict(self):
        return {
            "fold": self.fold,
            "point_count": self.point_count,
            "miou": self.miou,
            "oa": self.oa,
            "per_class_iou": {name: float(v) for name, v in zip(CLASS_NAMES, self.per_class_iou)},
            "confusion": None if self.confusion is None else self.confusion.tolist(),
        }


def evaluate(truth, pred, fold=None, absent="skip") -> EvalReport:
    return EvalReport.from_confusion(accumulate(confusion_matrix(), truth, pred), fold, absent)


def aggregate_folds(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean over folds of per-class IoU, mIoU and OA (the last column of a fold table)."""
    reports = list(reports)
    if not reports:
        raise EmptyInputError("no fold reports")
    # sort so that float summation order does not depend on input order
    reports = sorted(reports, key=lambda r: (r.fold is None, r.fold or 0))
    iou = np.mean([r.per_class_iou for r in reports], axis=0)
    cms = [r.confusion for r in reports if r.confusion is not None]
    return EvalReport(
        per_class_iou=iou,
        miou=float(np.mean([r.miou for r in reports])),
        oa=float(np.mean([r.oa for r in reports])),
        fold=None,
        point_count=sum(r.point_count for r in reports),
        confusion=sum(cms) if len(cms) == len(reports) else None,
    )


def format_fold_table(reports: Sequence[EvalReport], mean: Optional[EvalReport] = None) -> str:
    """Class-by-fold table in percent, one decimal, with an optional mean column."""
    cols = [(str(r.fold) if r.fold is not None else "-", r) for r in reports]
    if mean is not None:
        cols.append(("mean", mean))
    head = f"{'':<10}" + "".join(f"{c:>8}" for c, _ in cols)
    lines = [head]
    for k, name in enumerate(CLASS_NAMES):
        lines.append(f"{name:<10}" + "".join(f"{100 * r.per_class_iou[k]:>8.1f}" for _, r in cols))
    lines.append(f"{'mIoU':<10}" + "".join(f"{100 * r.miou:>8.1f}" for _, r in cols))
    lines.append(f"{'OA':<10}" + "".join(f"{100 * r.oa:>8.1f}" for _, r in cols))
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, text_path=None, json_path=None, folds=None):
    if text_path is not None:
        table = format_fold_table(folds or [report], report if folds else None)
        with open(text_path, "w") as fh:
            fh.write(table)
    if json_path is not None:
        payload = report.to_dict()
        if folds:
            payload["folds"] = [r.to_dict() for r in folds]
        with open(json_path, "w") as fh:
            json.dump(payload, fh, indent=2)


def export_colored_cloud(cloud: PointCloud, pred_labels, path, drop_classes=()):
    """ASCII ``x y z r g b label`` file colored by predicted class.

    Returns the number of points written.
    """
    pred = np.asarray(pred_labels, dtype=np.int64).reshape(-1)
    if pred.size != len(cloud):
        raise ArgumentError(f"{len(cloud)} points but {pred.size} labels")
    drop = []
    for c in drop_classes:
        if isinstance(c, str):
            if c not in CLASS_INDEX:
                raise ArgumentError(f"unknown class name {c!r}")
            c = CLASS_INDEX[c]
        drop.append(int(c))
    keep = ~np.isin(pred, drop)
    pos = cloud.positions[keep]
    lab = pred[keep]
    rgb = PALETTE[lab]
    with open(path, "w") as fh:
        for p, c, l in zip(pos.tolist(), rgb.tolist(), lab.tolist()):
            fh.write(f"{p[0]!r} {p[1]!r} {p[2]!r} {c[0]} {c[1]} {c[2]} {l}\n")
    return int(keep.sum())
