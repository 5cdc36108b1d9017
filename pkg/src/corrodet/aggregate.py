"""Count-threshold image classifier, validation threshold tuning and the
areal-percent estimate.

An image is predicted corroded iff its count of corroded-predicted tiles
strictly exceeds the threshold c; the "at least one tile" rule is c = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import errors, metrics


@dataclass
class TilePredictions:
    image_id: str
    probs: np.ndarray  # row-major per-tile corrosion probability
    verdicts: np.ndarray | None = None  # binary, defaults to prob >= 0.5

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1 or len(self.probs) < 1:
            raise errors.EmptyPrediction(f"image {self.image_id} has no tiles")
        if np.any((self.probs < 0) | (self.probs > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.verdicts is None:
            self.verdicts = (self.probs >= 0.5).astype(np.int64)
        else:
            self.verdicts = np.asarray(self.verdicts, dtype=np.int64)
            if self.verdicts.shape != self.probs.shape:
                raise ValueError("verdicts and probs must have equal length")


@dataclass
class AggregationRule:
    c: int = 0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("threshold c must be >= 0")


@dataclass
class ImagePrediction:
    image_id: str
    corroded_count: int
    n_tiles: int
    c: int
    verdict: int
    areal_percent: float


def classify_image(preds: TilePredictions, rule: AggregationRule) -> ImagePrediction:
    count = int(preds.verdicts.sum())
    n = len(preds.verdicts)
    return ImagePrediction(
        image_id=preds.image_id,
        corroded_count=count,
        n_tiles=n,
        c=rule.c,
        verdict=1 if count > rule.c else 0,
        areal_percent=100.0 * count / n,
    )


def areal_percent(preds: TilePredictions) -> float:
    """100 * corroded-tile count / total tiles."""
    return 100.0 * float(preds.verdicts.sum()) / len(preds.verdicts)


def tune_threshold(
    val_preds: list[TilePredictions],
    val_labels,
    metric: str = "f1",
    c_range: tuple | None = None,
):
    """Sweep integer c, score image verdicts on the validation set, return
    (c_hat, curve). Ties pick the smallest maximizing c.

    curve is a list of (c, metric_value); undefined metric values (degenerate
    denominators) score 0.
    """
    val_labels = [int(v) for v in val_labels]
    if not val_preds or len(val_preds) != len(val_labels):
        raise errors.EmptyValidation("validation predictions/labels empty or misaligned")
    if metric not in ("f1", "accuracy"):
        raise ValueError(f"unknown metric {metric!r}")
    counts = [int(p.verdicts.sum()) for p in val_preds]
    if c_range is None:
        c_range = (0, max(len(p.verdicts) for p in val_preds))
    c_lo, c_hi = int(c_range[0]), int(c_range[1])

    curve = []
    best_c, best_m = c_lo, -np.inf
    for c in range(c_lo, c_hi + 1):
        verdicts = [1 if cnt > c else 0 for cnt in counts]
        cc = metrics.confusion(verdicts, val_labels)
        if metric == "f1":
            rm = metrics.rates(cc)
            value = rm.f1 if rm.f1_defined else 0.0
        else:
            value = (cc.tp + cc.tn) / (cc.tp + cc.tn + cc.fp + cc.fn)
        curve.append((c, value))
        if value > best_m:
            best_m, best_c = value, c
    return best_c, curve
