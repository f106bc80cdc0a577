"""Cross-validation folds and label-efficiency subset construction.

Both operate at sequence granularity when asked: a video sequence is never
split between train and test, and label-efficiency subsets always contain
whole sequences so temporal leakage cannot flatter the small-data numbers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .rng import make_rng, stream_id

log = logging.getLogger(__name__)


def _group_by_sequence(samples) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        seq = getattr(s, "sequence_id", None)
        if seq is None:
            raise ContractViolation("samples need sequence ids for sequence-level operations")
        groups.setdefault(seq, []).append(i)
    return groups


def kfold_splits(samples: list, k: int = 5, by_sequence: bool = False,
                 seed: int = 0) -> list[tuple[list, list]]:
    """Partition into k folds; returns (train, test) pairs covering all data."""
    if by_sequence:
        groups = _group_by_sequence(samples)
        units = sorted(groups)
    else:
        units = list(range(len(samples)))
    if k > len(units):
        raise ContractViolation(f"k={k} exceeds the {len(units)} available groups")
    rng = make_rng(seed, stream_id("kfold"))
    order = rng.permutation(len(units))

    fold_members: list[list[int]] = [[] for _ in range(k)]
    for pos, unit_idx in enumerate(order):
        unit = units[unit_idx]
        members = groups[unit] if by_sequence else [unit]
        fold_members[pos % k].extend(members)

    splits = []
    for f in range(k):
        test_idx = sorted(fold_members[f])
        test_set = set(test_idx)
        train_idx = [i for i in range(len(samples)) if i not in test_set]
        splits.append(([samples[i] for i in train_idx], [samples[i] for i in test_idx]))
    return splits


@dataclass
class SubsetDraw:
    fraction: float
    repeat: int
    samples: list
    sequences: list[str]
    achieved_fraction: float
    deviation_flagged: bool = False


def label_efficiency_subsets(train_set: list, fractions=(0.5, 0.25, 0.1),
                             n_repeats: int = 3, seed: int = 0) -> list[SubsetDraw]:
    """Whole-sequence subsets hitting each target labeled fraction.

    Sequences are accumulated in a seeded random order for as long as adding
    the next one moves the achieved fraction closer to the target. Fraction
    1.0 returns the full set for every repeat.
    """
    groups = _group_by_sequence(train_set)
    seq_ids = sorted(groups)
    total = len(train_set)
    draws: list[SubsetDraw] = []
    for fraction in fractions:
        if not 0 < fraction <= 1:
            raise ContractViolation("fractions must lie in (0, 1]")
        for repeat in range(n_repeats):
            if fraction == 1.0:
                draws.append(SubsetDraw(fraction, repeat, list(train_set), seq_ids,
                                        achieved_fraction=1.0))
                continue
            rng = make_rng(seed, stream_id("label-efficiency", fraction, repeat))
            order = rng.permutation(len(seq_ids))
            target = fraction * total
            chosen: list[str] = []
            count = 0
            for idx in order:
                seq = seq_ids[idx]
                nxt = count + len(groups[seq])
                if abs(nxt - target) <= abs(count - target):
                    chosen.append(seq)
                    count = nxt
                else:
                    break
            flagged = False
            if not chosen:  # target smaller than every single sequence
                seq = seq_ids[order[0]]
                chosen = [seq]
                count = len(groups[seq])
                flagged = True
                log.warning("fraction %.3f below smallest sequence; taking one sequence anyway", fraction)
            members = sorted(i for seq in chosen for i in groups[seq])
            draws.append(SubsetDraw(fraction, repeat, [train_set[i] for i in members],
                                    sorted(chosen), achieved_fraction=count / total,
                                    deviation_flagged=flagged))
    return draws


def mean_and_ci95(values) -> tuple[float, float, float]:
    """Mean with a normal-approximation 95% interval over repeat draws."""
    arr = np.asarray(list(values), dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, mean, mean
    half = 1.96 * float(arr.std(ddof=1)) / np.sqrt(arr.size)
    return mean, mean - half, mean + half
