"""ROC construction and the working-point summaries used everywhere.

The empirical ROC is built from score order with ties collapsed to single
operating points; (0, 0) is prepended. Between operating points the curve
is linearly interpolated, which is the exact frontier once randomised
thresholding between neighbouring cuts is allowed. In particular a
degenerate scorer with all-equal scores yields the diagonal, so its
background rejection at 95% signal efficiency is 1 - 0.95 = 0.05.

Class 1 is the signal throughout: true positive rate is the fraction of
class-1 samples above threshold, false positive rate the fraction of
class 0.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError


def roc_curve(labels, scores):
    """Operating points (fpr, tpr), tie-collapsed, starting at (0, 0)."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise InputError("labels and scores must be matching 1D arrays")
    if not np.isin(labels, (0, 1)).all():
        raise InputError("labels must be 0 or 1")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise InputError("need both classes to build a ROC")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(labels[order] == 1)
    fp = np.cumsum(labels[order] == 0)
    # keep only the last entry of each tied score block
    last = np.r_[np.diff(sorted_scores) != 0, True]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    return fpr, tpr


def _interp_increasing(xs, ys, target: float) -> float:
    """y at target on the polyline, picking the first point at exact hits."""
    idx = int(np.searchsorted(xs, target, side="left"))
    if idx >= len(xs):
        return float(ys[-1])
    if xs[idx] == target:
        return float(ys[idx])
    x0, x1 = xs[idx - 1], xs[idx]
    y0, y1 = ys[idx - 1], ys[idx]
    return float(y0 + (target - x0) / (x1 - x0) * (y1 - y0))


def rejection_at(labels, scores, signal_eff: float = 0.95) -> float:
    """Background rejection 1 - fpr at the given signal efficiency.

    At a fixed tpr the best achievable point is the smallest fpr, so exact
    hits resolve to the left end of flat segments.
    """
    if not 0.0 < signal_eff <= 1.0:
        raise InputError(f"signal efficiency must be in (0, 1], "
                         f"got {signal_eff}")
    fpr, tpr = roc_curve(labels, scores)
    return 1.0 - _interp_increasing(tpr, fpr, signal_eff)


def tpr_at_fpr(labels, scores, fpr_targets):
    """Interpolated signal efficiency at each background efficiency.

    At a fixed fpr the best achievable point is the largest tpr, so exact
    hits resolve to the right end of vertical segments.
    """
    fpr, tpr = roc_curve(labels, scores)
    out = []
    for target in np.atleast_1d(np.asarray(fpr_targets, dtype=float)):
        if not 0.0 <= target <= 1.0:
            raise InputError(f"fpr target must be in [0, 1], got {target}")
        # last operating point at or below the target; ties resolve to the
        # best (largest) tpr sharing that fpr
        idx = int(np.searchsorted(fpr, target, side="right")) - 1
        if idx >= len(fpr) - 1:
            out.append(float(tpr[-1]))
        elif fpr[idx] == target:
            out.append(float(tpr[idx]))
        else:
            x0, x1 = fpr[idx], fpr[idx + 1]
            y0, y1 = tpr[idx], tpr[idx + 1]
            out.append(float(y0 + (target - x0) / (x1 - x0) * (y1 - y0)))
    return np.array(out)


def auc(labels, scores) -> float:
    fpr, tpr = roc_curve(labels, scores)
    return float(np.trapezoid(tpr, fpr))


def aggregate(values):
    """Mean and sample standard deviation; a single value has spread 0."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InputError("nothing to aggregate")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std
