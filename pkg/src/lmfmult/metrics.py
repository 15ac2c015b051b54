"""Sentiment and emotion metrics.

Sentiment: 7-class accuracy after clamping to [-3, 3] and rounding, binary
accuracy and F1 over samples whose true label is non-zero, mean absolute
error, Pearson correlation. Emotions: per-emotion accuracy and binary F1 from
four 2-way logit pairs.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import EMOTIONS
from .errors import LengthMismatch

METRICS_SCHEMA_VERSION = 1


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def binary_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    """F1 of the positive class; 0 when there are no positives on either side."""
    pred, truth = np.asarray(pred, bool), np.asarray(truth, bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def sentiment_metrics(preds, labels) -> dict:
    p = _as_array(preds).reshape(-1)
    y = _as_array(labels).reshape(-1)
    if p.shape != y.shape:
        raise LengthMismatch(f"{p.size} predictions vs {y.size} labels")
    if p.size == 0:
        raise LengthMismatch("no samples")
    acc7 = float(np.mean(np.rint(np.clip(p, -3, 3)) == np.rint(np.clip(y, -3, 3))))

    nz = y != 0
    if nz.any():
        pos_pred, pos_true = p[nz] > 0, y[nz] > 0
        acc2 = float(np.mean(pos_pred == pos_true))
        f1 = binary_f1(pos_pred, pos_true)
    else:
        acc2, f1 = 0.0, 0.0

    mae = float(np.mean(np.abs(p - y)))
    degenerate = p.size < 2 or np.std(p) == 0 or np.std(y) == 0
    corr = 0.0 if degenerate else float(np.clip(np.corrcoef(p, y)[0, 1], -1.0, 1.0))
    return {
        "acc7": acc7,
        "acc2": acc2,
        "f1": f1,
        "mae": mae,
        "corr": corr,
        "corr_degenerate": bool(degenerate),
        "acc2_support": int(nz.sum()),
    }


def emotion_metrics(logits, labels) -> dict:
    z = _as_array(logits)
    y = _as_array(labels)
    if z.ndim != 2 or z.shape[1] != 2 * len(EMOTIONS):
        raise LengthMismatch(f"expected (n, 8) logits, got {z.shape}")
    if y.shape != (z.shape[0], len(EMOTIONS)):
        raise LengthMismatch(f"expected ({z.shape[0]}, 4) labels, got {y.shape}")
    pred = z.reshape(-1, len(EMOTIONS), 2).argmax(axis=-1) == 1
    truth = y > 0.5
    out = {}
    for i, emo in enumerate(EMOTIONS):
        out[emo] = {
            "acc": float(np.mean(pred[:, i] == truth[:, i])),
            "f1": binary_f1(pred[:, i], truth[:, i]),
        }
    return out


@dataclass
class MetricsReport:
    task: str
    loss: float | None = None
    sentiment: dict | None = None
    emotions: dict | None = None
    epoch_seconds_mean: float | None = None
    epoch_seconds_std: float | None = None
    param_count: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = METRICS_SCHEMA_VERSION
        return d
