"""Verification metrics over labeled score sets: ROC, EER, minDCF, AUC.

Acceptance convention everywhere: a trial is accepted when its score is
greater than or equal to the threshold.  Thresholds are placed at every
distinct score plus one sentinel above the maximum, so the curve always
covers both the (far=0) and (far=1) operating regions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricsError


@dataclass(frozen=True)
class ScoreSet:
    """Labeled trial scores for one (model, protocol) cell."""

    scores: np.ndarray
    labels: np.ndarray  # True = target, False = nontarget
    model_id: str = ""
    protocol: str = ""
    trial_index: np.ndarray | None = None

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=bool)
        if scores.shape != labels.shape or scores.ndim != 1:
            raise MetricsError("scores and labels must be matching 1-D arrays")
        if not np.all(np.isfinite(scores)):
            raise MetricsError("scores must be finite")
        if scores.size and (scores.min() < -1.0 - 1e-9 or scores.max() > 1.0 + 1e-9):
            raise MetricsError("scores must lie in the cosine range [-1, 1]")
        if not labels.any() or labels.all():
            raise MetricsError("score set needs at least one target and one nontarget")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)
        if self.trial_index is not None:
            object.__setattr__(self, "trial_index", np.asarray(self.trial_index, dtype=np.int64))

    @property
    def target_scores(self) -> np.ndarray:
        return self.scores[self.labels]

    @property
    def nontarget_scores(self) -> np.ndarray:
        return self.scores[~self.labels]

    @property
    def n_target(self) -> int:
        return int(self.labels.sum())

    @property
    def n_nontarget(self) -> int:
        return int((~self.labels).sum())


@dataclass(frozen=True)
class DcfParams:
    """Prior and costs for the detection cost function."""

    p_target: float = 0.01
    c_miss: float = 1.0
    c_fa: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.p_target < 1.0):
            raise MetricsError(f"p_target must be in (0, 1), got {self.p_target}")
        if self.c_miss <= 0 or self.c_fa <= 0:
            raise MetricsError("costs must be positive")


@dataclass(frozen=True)
class RocCurve:
    """Operating points sorted by descending threshold.

    thresholds[0] is +inf (accept nothing: far=0, frr=1); the final point
    accepts everything (far=1, frr=0).
    """

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray


def roc(scores: ScoreSet) -> RocCurve:
    """ROC with thresholds at every distinct score (descending) plus +inf."""
    tar = np.sort(scores.target_scores)
    non = np.sort(scores.nontarget_scores)
    uniq = np.unique(scores.scores)[::-1]  # descending
    thresholds = np.concatenate(([np.inf], uniq))
    # far(t) = fraction of nontargets with score >= t (accept rule)
    far = (len(non) - np.searchsorted(non, thresholds, side="left")) / len(non)
    # frr(t) = fraction of targets with score < t
    frr = np.searchsorted(tar, thresholds, side="left") / len(tar)
    return RocCurve(thresholds=thresholds, far=far, frr=frr)


def _crossing(curve: RocCurve) -> tuple[int, float]:
    """Index and interpolation weight of the far/frr crossing.

    Returns (i, u): the crossing lies between points i-1 and i at fraction u;
    u == 0 with d == 0 marks an exact crossing at point i.
    """
    d = curve.far - curve.frr  # monotone non-decreasing
    idx = int(np.argmax(d >= 0.0))
    if d[idx] == 0.0:
        return idx, 0.0
    u = -d[idx - 1] / (d[idx] - d[idx - 1])
    return idx, u


def eer(scores: ScoreSet) -> float:
    """Equal error rate by linear interpolation between adjacent ROC points."""
    curve = roc(scores)
    idx, u = _crossing(curve)
    if u == 0.0:
        return float(curve.far[idx])
    lo, hi = idx - 1, idx
    far_x = curve.far[lo] + (curve.far[hi] - curve.far[lo]) * u
    frr_x = curve.frr[lo] + (curve.frr[hi] - curve.frr[lo]) * u
    return float((far_x + frr_x) / 2.0)  # equal at the crossing; average absorbs fp noise


def eer_threshold(scores: ScoreSet) -> float:
    """Score threshold at the EER operating point.

    At an exact crossing the operating region is the half-open threshold
    interval down to the next distinct score; its midpoint is returned so
    separated score sets get a threshold centered between the clusters.
    """
    curve = roc(scores)
    idx, u = _crossing(curve)
    ts = curve.thresholds
    if u == 0.0:
        if idx + 1 < len(ts):
            return float((ts[idx] + ts[idx + 1]) / 2.0)
        return float(ts[idx])
    lo = ts[idx - 1]
    if not np.isfinite(lo):  # crossing inside the sentinel segment
        lo = ts[idx] + 1.0
    return float(lo + (ts[idx] - lo) * u)


def min_dcf_detail(scores: ScoreSet, params: DcfParams = DcfParams()) -> dict:
    """Normalized minimum detection cost plus the raw cost and threshold."""
    curve = roc(scores)
    costs = params.c_miss * params.p_target * curve.frr + params.c_fa * (1.0 - params.p_target) * curve.far
    idx = int(np.argmin(costs))
    normalizer = min(params.c_miss * params.p_target, params.c_fa * (1.0 - params.p_target))
    raw = float(costs[idx])
    normalized = raw / normalizer
    return {
        "min_dcf": float(np.clip(normalized, 0.0, 1.0)),
        "min_dcf_raw": normalized,
        "min_cost": raw,
        "threshold": float(curve.thresholds[idx]),
    }


def min_dcf(scores: ScoreSet, params: DcfParams = DcfParams()) -> float:
    return min_dcf_detail(scores, params)["min_dcf"]


def auc(scores: ScoreSet) -> float:
    """P(random target outscores random nontarget), ties counting half."""
    all_scores = scores.scores
    uniq, inverse, counts = np.unique(all_scores, return_inverse=True, return_counts=True)
    below = np.concatenate(([0], np.cumsum(counts)))[:-1]
    avg_rank = below + (counts + 1) / 2.0  # 1-based midrank
    ranks = avg_rank[inverse]
    t = scores.n_target
    n = scores.n_nontarget
    u_stat = ranks[scores.labels].sum() - t * (t + 1) / 2.0
    return float(u_stat / (t * n))


def roc_trapezoid_auc(curve: RocCurve) -> float:
    """Area under the (FAR, 1-FRR) curve by the trapezoid rule."""
    x = curve.far
    y = 1.0 - curve.frr
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))
