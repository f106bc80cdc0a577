"""k-fold and label-efficiency subsetting."""

import numpy as np
import pytest

from privi.errors import ContractViolation
from privi.splits import kfold_splits, label_efficiency_subsets, mean_and_ci95
from privi.training import MiniclipSample


def sample(i, seq):
    return MiniclipSample(features=np.zeros((2, 4)), label=0, sequence_id=seq)


def make_samples(n_sequences, per_seq):
    return [sample(i, f"seq{s}") for s in range(n_sequences) for i in range(per_seq)]


def test_ten_samples_five_folds_of_two():
    samples = make_samples(10, 1)
    splits = kfold_splits(samples, k=5, seed=1)
    assert len(splits) == 5
    for train, test in splits:
        assert len(test) == 2
        assert len(train) == 8


def test_folds_partition_dataset():
    samples = make_samples(7, 3)
    splits = kfold_splits(samples, k=5, seed=2)
    all_test = [id(s) for _, test in splits for s in test]
    assert len(all_test) == len(samples)
    assert len(set(all_test)) == len(samples)
    for train, test in splits:
        assert set(map(id, train)).isdisjoint(set(map(id, test)))


def test_by_sequence_never_splits_a_sequence():
    samples = make_samples(3, 4)
    splits = kfold_splits(samples, k=3, by_sequence=True, seed=3)
    for train, test in splits:
        train_seqs = {s.sequence_id for s in train}
        test_seqs = {s.sequence_id for s in test}
        assert train_seqs.isdisjoint(test_seqs)


def test_k_larger_than_groups_rejected():
    samples = make_samples(2, 5)
    with pytest.raises(ContractViolation):
        kfold_splits(samples, k=3, by_sequence=True)


def test_fraction_one_returns_full_set():
    samples = make_samples(4, 2)
    draws = label_efficiency_subsets(samples, fractions=(1.0,), n_repeats=3, seed=4)
    assert len(draws) == 3
    for d in draws:
        assert len(d.samples) == len(samples)
        assert d.achieved_fraction == 1.0


def test_four_equal_sequences_half_gives_two():
    samples = make_samples(4, 5)
    draws = label_efficiency_subsets(samples, fractions=(0.5,), n_repeats=3, seed=5)
    for d in draws:
        assert len(d.sequences) == 2
        assert len(d.samples) == 10


def test_subsets_contain_whole_sequences_only():
    samples = make_samples(10, 3)
    draws = label_efficiency_subsets(samples, fractions=(0.5, 0.25, 0.1), n_repeats=3, seed=6)
    by_seq = {}
    for s in samples:
        by_seq.setdefault(s.sequence_id, []).append(s)
    for d in draws:
        seqs = {s.sequence_id for s in d.samples}
        for seq in seqs:
            assert sum(1 for s in d.samples if s.sequence_id == seq) == len(by_seq[seq])


def test_panaf_scale_ten_percent_is_forty_sequences():
    # 400 equal-size sequences at 10% -> 40 +- 1 across repeats
    samples = make_samples(400, 2)
    draws = label_efficiency_subsets(samples, fractions=(0.1,), n_repeats=3, seed=7)
    for d in draws:
        assert abs(len(d.sequences) - 40) <= 1


def test_fraction_below_smallest_sequence_flags():
    samples = make_samples(2, 50)
    draws = label_efficiency_subsets(samples, fractions=(0.01,), n_repeats=1, seed=8)
    assert draws[0].deviation_flagged
    assert len(draws[0].sequences) == 1


def test_repeats_are_independent_draws():
    samples = make_samples(30, 2)
    draws = label_efficiency_subsets(samples, fractions=(0.5,), n_repeats=3, seed=9)
    seq_sets = [tuple(d.sequences) for d in draws]
    assert len(set(seq_sets)) > 1


def test_mean_and_ci95():
    mean, lo, hi = mean_and_ci95([0.8, 0.9, 1.0])
    assert mean == pytest.approx(0.9)
    assert lo < mean < hi
    half = 1.96 * np.std([0.8, 0.9, 1.0], ddof=1) / np.sqrt(3)
    assert hi - mean == pytest.approx(half)
