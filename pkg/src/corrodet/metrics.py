"""Confusion counting, rate metrics, ROC curves and AUC.

Positive = corroded = 1. Degenerate denominators yield value 0 with the
corresponding defined-flag cleared, so metric sweeps on sparse sets never
divide by zero.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import errors


@dataclass(frozen=True)
class ConfusionCounts:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self):
        return self.tn + self.fp + self.fn + self.tp


@dataclass(frozen=True)
class RateMetrics:
    tpr: float
    fpr: float
    ppv: float
    f1: float
    tpr_defined: bool = True
    fpr_defined: bool = True
    ppv_defined: bool = True
    f1_defined: bool = True


@dataclass
class RocCurve:
    points: list  # ordered (fpr, tpr)
    auc: float


def confusion(preds, labels) -> ConfusionCounts:
    preds = [int(p) for p in preds]
    labels = [int(y) for y in labels]
    if len(preds) != len(labels) or not preds:
        raise errors.LengthMismatch(f"{len(preds)} preds vs {len(labels)} labels")
    tn = fp = fn = tp = 0
    for p, y in zip(preds, labels):
        if y == 1:
            tp += p
            fn += 1 - p
        else:
            fp += p
            tn += 1 - p
    return ConfusionCounts(tn=tn, fp=fp, fn=fn, tp=tp)


def _ratio(num, den):
    if den == 0:
        return 0.0, False
    return num / den, True


def rates(cc: ConfusionCounts) -> RateMetrics:
    """TPR = TP/(TP+FN); FPR = FP/(FP+TN); PPV = TP/(TP+FP);
    F1 = 2*PPV*TPR/(PPV+TPR)."""
    tpr, tpr_ok = _ratio(cc.tp, cc.tp + cc.fn)
    fpr, fpr_ok = _ratio(cc.fp, cc.fp + cc.tn)
    ppv, ppv_ok = _ratio(cc.tp, cc.tp + cc.fp)
    if tpr_ok and ppv_ok and (ppv + tpr) > 0:
        f1, f1_ok = 2.0 * ppv * tpr / (ppv + tpr), True
    else:
        f1, f1_ok = 0.0, False
    return RateMetrics(
        tpr=tpr, fpr=fpr, ppv=ppv, f1=f1,
        tpr_defined=tpr_ok, fpr_defined=fpr_ok, ppv_defined=ppv_ok, f1_defined=f1_ok,
    )


def roc(scores, labels) -> RocCurve:
    """Threshold sweep over unique scores (descending, ties grouped); AUC by
    the trapezoid rule."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray([int(y) for y in labels])
    if len(scores) != len(labels):
        raise errors.LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise errors.SingleClass("ROC needs at least one positive and one negative")

    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        tp += int((y[i:j] == 1).sum())
        fp += int((y[i:j] == 0).sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=points, auc=float(auc))


def save_roc_csv(curve: RocCurve, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for x, yv in curve.points:
            writer.writerow([f"{x:.10g}", f"{yv:.10g}"])


def report_text(cc: ConfusionCounts, rm: RateMetrics, title="metrics"):
    """Aligned-column text block in the TN/FP/FN/TP + rates layout."""
    lines = [title, "-" * len(title)]
    for name, value in (("TN", cc.tn), ("FP", cc.fp), ("FN", cc.fn), ("TP", cc.tp)):
        lines.append(f"{name:<4}{value:>10d}")
    for name, value, ok in (
        ("TPR", rm.tpr, rm.tpr_defined),
        ("FPR", rm.fpr, rm.fpr_defined),
        ("PPV", rm.ppv, rm.ppv_defined),
        ("F1", rm.f1, rm.f1_defined),
    ):
        lines.append(f"{name:<4}{value:>10.4f}" + ("" if ok else "  (undefined)"))
    return "\n".join(lines) + "\n"
