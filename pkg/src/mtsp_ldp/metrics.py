"""Error metrics and ROC analysis for query answers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _pair(estimates, truths) -> tuple[np.ndarray, np.ndarray]:
    est = np.asarray(estimates, dtype=float).ravel()
    tru = np.asarray(truths, dtype=float).ravel()
    if est.shape != tru.shape:
        raise ValueError(f"{est.size} estimates vs {tru.size} ground truths")
    if est.size == 0:
        raise ValueError("no query answers to score")
    return est, tru


def mae(estimates, truths) -> float:
    est, tru = _pair(estimates, truths)
    return float(np.mean(np.abs(est - tru)))


def mre(estimates, truths) -> tuple[float, int]:
    """Mean relative error over non-zero truths, plus how many zero truths were skipped."""
    est, tru = _pair(estimates, truths)
    nz = tru != 0
    zeros = int((~nz).sum())
    if not nz.any():
        return float("nan"), zeros
    return float(np.mean(np.abs(est[nz] - tru[nz]) / np.abs(tru[nz]))), zeros


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, TPR) from sweeping a threshold down through the sorted scores.

    Tied scores move together, so the curve has one point per distinct score
    plus the (0, 0) origin.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape or s.size == 0:
        raise ValueError("scores and labels must be equal-length and non-empty")
    pos, neg = int(y.sum()), int((~y).sum())
    if pos == 0 or neg == 0:
        raise ValueError("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_run = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_run]
    fp = np.cumsum(~y)[last_of_run]
    return np.r_[0.0, fp / neg], np.r_[0.0, tp / pos]


def auc(fpr, tpr) -> float:
    return float(np.trapezoid(tpr, fpr))


@dataclass
class MetricReport:
    mae: float | None = None
    mre: float | None = None
    mre_zero_truths: int = 0
    n_queries: int = 0
    fpr: list[float] = field(default_factory=list)
    tpr: list[float] = field(default_factory=list)
    auc: float | None = None
    timing: list[float] = field(default_factory=list)

    def row(self) -> dict:
        return {"mae": self.mae, "mre": self.mre, "mre_zero_truths": self.mre_zero_truths,
                "n_queries": self.n_queries, "auc": self.auc}


def compute_metrics(estimates, ground_truths, kind: str) -> MetricReport:
    """``kind`` is ``mae``, ``mre`` or ``roc`` (ground truths are then 0/1 labels)."""
    if kind == "mae":
        est, _ = _pair(estimates, ground_truths)
        return MetricReport(mae=mae(estimates, ground_truths), n_queries=est.size)
    if kind == "mre":
        value, zeros = mre(estimates, ground_truths)
        return MetricReport(mre=value, mre_zero_truths=zeros, n_queries=len(np.ravel(estimates)))
    if kind == "roc":
        fpr, tpr = roc_curve(estimates, ground_truths)
        return MetricReport(fpr=fpr.tolist(), tpr=tpr.tolist(), auc=auc(fpr, tpr), n_queries=len(fpr) - 1)
    raise ValueError(f"unknown metric kind {kind!r}")
