"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (finite
differences, O(n^2) scans, exhaustive enumeration) and never imports the
code paths it checks.
"""

from __future__ import annotations

import itertools

import numpy as np


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-4, coords=None) -> np.ndarray:
    """Central finite differences of scalar f w.r.t. x.

    coords: optional iterable of flat indices to probe (full grad if None).
    Entries not probed are returned as NaN so callers compare only probed
    coordinates.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.full(x.size, np.nan)
    flat = x.reshape(-1)
    indices = range(x.size) if coords is None else coords
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max relative error over probed (non-NaN) coordinates."""
    mask = ~np.isnan(numeric)
    a = np.asarray(analytic)[mask]
    n = np.asarray(numeric)[mask]
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


# ---------------------------------------------------------------------------
# boxes


def iou_reference(a, b) -> float:
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0.0, ix2 - ix1), max(0.0, iy2 - iy1)
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def nms_reference(boxes: list[tuple[float, float, float, float]], scores: list[float],
                  iou_threshold: float, score_threshold: float) -> list[int]:
    """O(n^2) greedy NMS returning kept original indices (ties by index)."""
    alive = [i for i, s in enumerate(scores) if s >= score_threshold]
    kept: list[int] = []
    while alive:
        best = min(alive, key=lambda i: (-scores[i], i))
        kept.append(best)
        alive = [i for i in alive if i != best and iou_reference(boxes[i], boxes[best]) <= iou_threshold]
    return kept


# ---------------------------------------------------------------------------
# ranking metrics


def ap_reference(scores, truth) -> float:
    """All-points interpolated AP via explicit O(n^2) prefix scan."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    y = [int(truth[i]) for i in order]
    npos = sum(y)
    if npos == 0:
        raise ValueError("AP undefined without positives")
    precisions, recalls = [], []
    for k in range(1, len(y) + 1):
        tp = sum(y[:k])
        precisions.append(tp / k)
        recalls.append(tp / npos)
    # monotonize precision from the right
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap, prev_r = 0.0, 0.0
    for p, r in zip(precisions, recalls):
        ap += (r - prev_r) * p
        prev_r = r
    return ap


def auc_reference(scores, truth) -> float:
    """ROC-AUC by all-pairs counting with 0.5 credit for ties."""
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    if not pos or not neg:
        raise ValueError("AUC needs both classes")
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def accuracy_reference(pred_labels, true_labels) -> float:
    return sum(int(p == t) for p, t in zip(pred_labels, true_labels)) / len(true_labels)


def balanced_accuracy_reference(pred_labels, true_labels, n_classes) -> float:
    recalls = []
    for c in range(n_classes):
        idx = [i for i, t in enumerate(true_labels) if t == c]
        if not idx:
            continue
        recalls.append(sum(int(pred_labels[i] == c) for i in idx) / len(idx))
    return sum(recalls) / len(recalls)


# ---------------------------------------------------------------------------
# subsampling


def waterfill_continuous(avail: dict, targets: dict, budget: int) -> dict:
    """Continuous water-filling optimum by bisection on the fill level."""
    total_avail = sum(avail.values())
    goal = min(budget, total_avail)
    if goal == 0:
        return {k: 0.0 for k in avail}

    def allocated(level: float) -> float:
        return sum(min(avail[k], targets.get(k, 0.0) * level) for k in avail)

    lo, hi = 0.0, 1.0
    while allocated(hi) < goal - 1e-9:
        hi *= 2.0
        if hi > 1e15:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if allocated(mid) < goal:
            lo = mid
        else:
            hi = mid
    level = 0.5 * (lo + hi)
    alloc = {k: min(avail[k], targets.get(k, 0.0) * level) for k in avail}
    # sources with zero target can only receive leftover when others are capped
    short = goal - sum(alloc.values())
    if short > 1e-6:
        uncapped = [k for k in avail if alloc[k] < avail[k]]
        room = sum(avail[k] - alloc[k] for k in uncapped)
        for k in uncapped:
            alloc[k] += short * (avail[k] - alloc[k]) / room
    return alloc


def subsample_exhaustive(avail: dict, targets: dict, budget: int) -> dict:
    """Best integer allocation by brute force (small instances only).

    Minimizes L1 distance to the continuous water-filling optimum; ties
    broken lexicographically by source id for determinism.
    """
    keys = sorted(avail)
    cont = waterfill_continuous(avail, targets, budget)
    goal = min(budget, sum(avail.values()))
    best, best_cost = None, float("inf")
    ranges = [range(avail[k] + 1) for k in keys]
    for combo in itertools.product(*ranges):
        if sum(combo) != goal:
            continue
        cost = sum(abs(c - cont[k]) for c, k in zip(combo, keys))
        if cost < best_cost - 1e-12:
            best, best_cost = combo, cost
    return dict(zip(keys, best))


def threshold_scan_reference(curve, min_precision):
    """Exhaustive scan over PR-curve points for the recall-max threshold."""
    feasible = [pt for pt in curve if pt[1] >= min_precision]
    if feasible:
        best = max(feasible, key=lambda pt: (pt[2], pt[1]))
        return best[0], False
    best = max(curve, key=lambda pt: (pt[1], pt[2]))
    return best[0], True
