"""Threshold-free detection metrics: ROC curve, AUROC, FPR@TPR.

Conventions, fixed toolkit-wide: the positive class is ID and scores are
oriented so that higher means more in-distribution. AUROC is therefore
P(s_ID > s_OOD) + 0.5 * P(s_ID = s_OOD), computed as a rank statistic in
O(N log N) with ties getting half credit. The ROC curve is reported with
trapezoidal area, but the rank statistic is the authoritative AUROC.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import BadTarget, EmptyInput


def _validate_scores(id_scores, ood_scores) -> tuple[np.ndarray, np.ndarray]:
    id_s = np.asarray(id_scores, dtype=np.float64).reshape(-1)
    ood_s = np.asarray(ood_scores, dtype=np.float64).reshape(-1)
    if id_s.size == 0 or ood_s.size == 0:
        raise EmptyInput("need at least one ID and one OOD score")
    if not (np.all(np.isfinite(id_s)) and np.all(np.isfinite(ood_s))):
        raise EmptyInput("scores must be finite")
    return id_s, ood_s


def auroc(id_scores, ood_scores) -> float:
    """Probability a random ID sample outscores a random OOD sample.

    Mann-Whitney form: the ID rank sum (average ranks over the pooled
    sample, so tied pairs contribute exactly 1/2) minus its minimum.
    """
    id_s, ood_s = _validate_scores(id_scores, ood_scores)
    n_id, n_ood = id_s.size, ood_s.size
    ranks = rankdata(np.concatenate([id_s, ood_s]), method="average")
    u = ranks[:n_id].sum() - n_id * (n_id + 1) / 2.0
    return float(u / (n_id * n_ood))


def _tpr_threshold(id_s: np.ndarray, tpr_target: float) -> float:
    """Largest threshold keeping at least a tpr_target fraction of ID.

    The kept-count m is the smallest integer with m / n_id >= tpr_target,
    resolved by direct comparison rather than float ceil so that e.g.
    0.95 * 20 == 19 lands on m = 19 exactly.
    """
    n_id = id_s.size
    m = int(np.ceil(tpr_target * n_id))
    m = min(max(m, 1), n_id)
    while m > 1 and (m - 1) / n_id >= tpr_target:
        m -= 1
    while m < n_id and m / n_id < tpr_target:
        m += 1
    return float(np.sort(id_s)[::-1][m - 1])


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.95) -> float:
    """Fraction of OOD scoring at or above the TPR-target threshold."""
    if not (0.0 < tpr_target <= 1.0):
        raise BadTarget(f"tpr_target must be in (0, 1], got {tpr_target}")
    id_s, ood_s = _validate_scores(id_scores, ood_scores)
    tau = _tpr_threshold(id_s, tpr_target)
    return float(np.count_nonzero(ood_s >= tau) / ood_s.size)


@dataclass(frozen=True)
class RocCurve:
    """Sweep over all distinct score values, thresholds descending.

    Both rate arrays are nondecreasing and start/end at (0,0)/(1,1); the
    leading threshold is +inf (nothing accepted).
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        return float(np.trapezoid(self.tpr, self.fpr))


def roc_curve(id_scores, ood_scores) -> RocCurve:
    id_s, ood_s = _validate_scores(id_scores, ood_scores)
    taus = np.unique(np.concatenate([id_s, ood_s]))[::-1]
    # inclusive (>=) acceptance at each threshold, matching fpr_at_tpr;
    # |{s >= t}| via searchsorted on the ascending sort, O((N+U) log N)
    id_sorted = np.sort(id_s)
    ood_sorted = np.sort(ood_s)
    tpr = (id_s.size - np.searchsorted(id_sorted, taus, side="left")) / id_s.size
    fpr = (ood_s.size - np.searchsorted(ood_sorted, taus, side="left")) / ood_s.size
    thresholds = np.concatenate([[np.inf], taus])
    return RocCurve(
        thresholds,
        np.concatenate([[0.0], tpr]),
        np.concatenate([[0.0], fpr]),
    )


@dataclass(frozen=True)
class DetectionReport:
    """Evaluation of one method on one (ID set, OOD set) pair."""

    method: str
    auroc: float
    fpr_at_95: float
    n_id: int
    n_ood: int
    curve: RocCurve = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "auroc": self.auroc,
            "fpr_at_95": self.fpr_at_95,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "curve": {
                "thresholds": [
                    "inf" if np.isinf(t) else float(t) for t in self.curve.thresholds
                ],
                "tpr": [float(v) for v in self.curve.tpr],
                "fpr": [float(v) for v in self.curve.fpr],
            },
        }


def evaluate(method: str, id_scores, ood_scores, tpr_target: float = 0.95) -> DetectionReport:
    """Bundle AUROC, FPR@target and the ROC sweep into one report."""
    id_s, ood_s = _validate_scores(id_scores, ood_scores)
    return DetectionReport(
        method=method,
        auroc=auroc(id_s, ood_s),
        fpr_at_95=fpr_at_tpr(id_s, ood_s, tpr_target),
        n_id=id_s.size,
        n_ood=ood_s.size,
        curve=roc_curve(id_s, ood_s),
    )
