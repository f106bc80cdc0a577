"""Evaluation metrics: accuracy, balanced accuracy, AP/mAP, ROC-AUC, PR curves.

AP uses the all-points interpolation (precision monotonized from the right)
of the PASCAL/AVA style protocol. Classes without positives have undefined
AP and are excluded from means with an explicit flag rather than silently
producing NaN. All ranking metrics are invariant under strictly monotone
transforms of the scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation


@dataclass
class PredictionRecord:
    sample_id: str
    scores: np.ndarray  # length C
    truth: int | np.ndarray  # class index or binary vector


@dataclass
class MetricReport:
    task: str  # single_label | multi_label
    n_samples: int
    per_class: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    excluded_classes: list[int] = field(default_factory=list)

    def to_lines(self) -> list[str]:
        import json

        lines = [json.dumps({"type": "class", **c}, separators=(",", ":")) for c in self.per_class]
        lines.append(json.dumps({"type": "aggregate", "task": self.task,
                                 "n_samples": self.n_samples,
                                 **{k: v for k, v in self.aggregates.items()},
                                 "excluded_classes": self.excluded_classes},
                                separators=(",", ":")))
        return lines


def _argmax_lowest_tie(scores: np.ndarray) -> int:
    return int(np.argmax(scores))  # numpy argmax already returns the lowest index on ties


def accuracy(records: list[PredictionRecord]) -> float:
    """Top-1 accuracy with argmax ties resolved to the lowest class index."""
    if not records:
        raise ContractViolation("accuracy of an empty record set is undefined")
    hits = sum(int(_argmax_lowest_tie(np.asarray(r.scores)) == int(r.truth)) for r in records)
    return hits / len(records)


def balanced_accuracy(records: list[PredictionRecord]) -> float:
    """Mean per-class recall; zero-support classes are excluded."""
    if not records:
        raise ContractViolation("balanced accuracy of an empty record set is undefined")
    n_classes = len(np.asarray(records[0].scores))
    support = np.zeros(n_classes, dtype=np.int64)
    correct = np.zeros(n_classes, dtype=np.int64)
    for r in records:
        t = int(r.truth)
        support[t] += 1
        if _argmax_lowest_tie(np.asarray(r.scores)) == t:
            correct[t] += 1
    present = support > 0
    return float(np.mean(correct[present] / support[present]))


def average_precision(scores, truth) -> float:
    """All-points interpolated AP; ties sorted by original index."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truth, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise ContractViolation("scores/truth must be equal-length 1D")
    npos = int(y.sum())
    if npos == 0:
        raise ContractViolation("AP undefined without positive samples")
    order = np.lexsort((np.arange(len(s)), -s))
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    ranks = np.arange(1, len(s) + 1)
    precision = tp / ranks
    recall = tp / npos
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def map_report(records: list[PredictionRecord], class_names: list[str] | None = None) -> MetricReport:
    """Per-class AP plus mAP (unweighted) and support-weighted mAP."""
    if not records:
        raise ContractViolation("mAP of an empty record set is undefined")
    scores = np.stack([np.asarray(r.scores, dtype=np.float64) for r in records])
    truth = np.stack([np.asarray(r.truth, dtype=np.int64) for r in records])
    if truth.shape != scores.shape:
        raise ContractViolation("multi-label truth must match score matrix shape")
    n, c = scores.shape
    names = class_names or [f"class_{j}" for j in range(c)]

    per_class, aps, supports, excluded = [], [], [], []
    for j in range(c):
        support = int(truth[:, j].sum())
        if support == 0:
            excluded.append(j)
            per_class.append({"class": names[j], "ap": None, "support": 0, "excluded": True})
            continue
        ap = average_precision(scores[:, j], truth[:, j])
        per_class.append({"class": names[j], "ap": ap, "support": support, "excluded": False})
        aps.append(ap)
        supports.append(support)

    aps_arr = np.asarray(aps)
    sup_arr = np.asarray(supports, dtype=np.float64)
    aggregates = {
        "map": float(aps_arr.mean()) if len(aps) else None,
        "map_weighted": float((aps_arr * sup_arr).sum() / sup_arr.sum()) if len(aps) else None,
    }
    return MetricReport(task="multi_label", n_samples=n, per_class=per_class,
                        aggregates=aggregates, excluded_classes=excluded)


def accuracy_report(records: list[PredictionRecord], class_names: list[str] | None = None) -> MetricReport:
    """Acc / B-Acc report for single-label records."""
    n_classes = len(np.asarray(records[0].scores))
    names = class_names or [f"class_{j}" for j in range(n_classes)]
    support = np.zeros(n_classes, dtype=np.int64)
    correct = np.zeros(n_classes, dtype=np.int64)
    for r in records:
        t = int(r.truth)
        support[t] += 1
        if _argmax_lowest_tie(np.asarray(r.scores)) == t:
            correct[t] += 1
    per_class = []
    excluded = []
    for j in range(n_classes):
        if support[j] == 0:
            excluded.append(j)
            per_class.append({"class": names[j], "recall": None, "support": 0, "excluded": True})
        else:
            per_class.append({"class": names[j], "recall": float(correct[j] / support[j]),
                              "support": int(support[j]), "excluded": False})
    return MetricReport(
        task="single_label", n_samples=len(records), per_class=per_class,
        aggregates={"acc": accuracy(records), "balanced_acc": balanced_accuracy(records)},
        excluded_classes=excluded)


def roc_auc(scores, truth) -> float:
    """AUC via the rank statistic (Mann-Whitney U), ties midranked."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truth, dtype=np.int64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractViolation("ROC-AUC needs both classes present")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    sorted_scores = s[order]
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_curve(scores, truth) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) at every distinct score threshold.

    A sample is predicted positive when its score >= threshold, so recall
    decreases (weakly) as the threshold rises.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(truth, dtype=np.int64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ContractViolation("PR curve needs both classes present")
    points = []
    for t in sorted(set(s.tolist())):
        pred = s >= t
        tp = int((pred & (y == 1)).sum())
        fp = int((pred & (y == 0)).sum())
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / n_pos
        points.append((float(t), precision, recall))
    return points
