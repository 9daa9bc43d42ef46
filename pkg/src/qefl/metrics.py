"""Evaluation (accuracy, macro-F1, cross-entropy), loss trend diagnostic and CSV export."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .nn import Architecture, predict_logits

CSV_HEADER = ("round", "accuracy", "macro_f1", "mean_loss", "epsilon_total")


@dataclass
class Evaluation:
    accuracy: float
    macro_f1: float
    mean_loss: float
    confusion: np.ndarray  # rows = true class, cols = predicted


@dataclass
class RoundMetrics:
    round: int
    accuracy: float
    macro_f1: float
    mean_loss: float
    epsilon_total: float
    train_loss: float = float("nan")


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    return np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def macro_f1(confusion: np.ndarray) -> float:
    """Unweighted mean of per-class F1; a class with no true and no predicted instances scores 0."""
    cm = np.asarray(confusion)
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(axis=0) + cm.sum(axis=1)  # = 2TP + FP + FN
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())


def _mean_ce(logits, y) -> float:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(lse - shifted[np.arange(len(y)), y]))


def evaluate(arch: Architecture, params, dataset) -> Evaluation:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits = predict_logits(arch, params, dataset.X)
    pred = np.argmax(logits, axis=1)
    cm = confusion_matrix(dataset.y, pred, arch.output_dim)
    return Evaluation(
        accuracy=float(np.trace(cm) / cm.sum()),
        macro_f1=macro_f1(cm),
        mean_loss=_mean_ce(logits, dataset.y),
        confusion=cm,
    )


@dataclass
class TrendResult:
    applicable: bool
    passed: bool
    first_violation: int | None  # 1-based round index
    moving_average: np.ndarray


def trend_check(losses, window: int, slack: float) -> TrendResult:
    """Moving average of ``losses`` over ``window`` rounds may never rise by more than ``slack``.

    The first average is available at round ``window``; each later round is
    compared against the one before it.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    losses = np.asarray(losses, dtype=np.float64)
    if len(losses) < window:
        return TrendResult(False, False, None, np.empty(0))
    ma = np.convolve(losses, np.ones(window) / window, mode="valid")
    rises = np.diff(ma)
    bad = np.flatnonzero(rises > slack)
    if bad.size:
        # ma[i] ends at round i + window; rises[j] lands at round j + window + 1
        return TrendResult(True, False, int(bad[0] + window + 1), ma)
    return TrendResult(True, True, None, ma)


def export_csv(history) -> str:
    if not history:
        raise ValueError("history is empty")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for m in history:
        w.writerow([m.round, repr(float(m.accuracy)), repr(float(m.macro_f1)),
                    repr(float(m.mean_loss)), repr(float(m.epsilon_total))])
    return buf.getvalue()


def read_csv(text: str) -> list[RoundMetrics]:
    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"unexpected header {rows[0]}")
    return [RoundMetrics(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in rows[1:]]


def progress_line(m: RoundMetrics) -> str:
    return f"round={m.round} acc={m.accuracy:.6f} loss={m.mean_loss:.6f}"
