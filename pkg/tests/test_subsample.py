"""Water-filling subsampler vs continuous optimum and exhaustive solver."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privi.chunking import chunk_timeline
from privi.cuts import CutList
from privi.errors import ContractViolation
from privi.rng import make_rng
from privi.subsample import subsample, subsample_counts

from oracles import subsample_exhaustive, waterfill_continuous


def test_symmetric_split():
    alloc, dev = subsample_counts({"A": 100, "B": 100}, {"A": 0.5, "B": 0.5}, 100)
    assert alloc == {"A": 50, "B": 50}
    assert not dev


def test_cap_and_redistribute():
    alloc, _ = subsample_counts({"A": 10, "B": 1000}, {"A": 0.5, "B": 0.5}, 100)
    assert alloc == {"A": 10, "B": 90}


def test_zero_budget():
    alloc, _ = subsample_counts({"A": 10, "B": 20}, {"A": 0.5, "B": 0.5}, 0)
    assert alloc == {"A": 0, "B": 0}


def test_budget_above_available_returns_all_with_warning():
    alloc, dev = subsample_counts({"A": 5, "B": 7}, {"A": 0.5, "B": 0.5}, 100)
    assert alloc == {"A": 5, "B": 7}
    assert dev


def test_targets_must_sum_below_one():
    with pytest.raises(ContractViolation):
        subsample_counts({"A": 5}, {"A": 0.7, "B": 0.7}, 3)


def test_matches_exhaustive_small_instances():
    rng = make_rng(31)
    for _ in range(40):
        n_sources = int(rng.integers(2, 5))
        names = [chr(65 + i) for i in range(n_sources)]
        avail = {s: int(rng.integers(0, 9)) for s in names}
        raw = rng.random(n_sources)
        raw = raw / raw.sum() * float(rng.uniform(0.5, 1.0))
        targets = dict(zip(names, raw.tolist()))
        budget = int(rng.integers(0, sum(avail.values()) + 3))
        alloc, _ = subsample_counts(avail, targets, budget)
        best = subsample_exhaustive(avail, targets, budget)
        assert sum(alloc.values()) == sum(best.values())
        for s in names:
            assert abs(alloc[s] - best[s]) <= 1, (avail, targets, budget, alloc, best)


def test_within_one_of_continuous_on_random_instances():
    rng = make_rng(32)
    for _ in range(500):
        n_sources = int(rng.integers(1, 7))
        names = [f"s{i}" for i in range(n_sources)]
        avail = {s: int(rng.integers(0, 500)) for s in names}
        raw = rng.random(n_sources)
        raw = raw / raw.sum() * float(rng.uniform(0.3, 1.0))
        targets = dict(zip(names, raw.tolist()))
        budget = int(rng.integers(0, 700))
        alloc, _ = subsample_counts(avail, targets, budget)
        cont = waterfill_continuous(avail, targets, budget)
        goal = min(budget, sum(avail.values()))
        assert sum(alloc.values()) == goal
        for s in names:
            assert alloc[s] <= avail[s]
            assert abs(alloc[s] - cont[s]) <= 1.0 + 1e-6, (avail, targets, budget, alloc, cont)


@settings(max_examples=80, deadline=None)
@given(st.dictionaries(st.sampled_from(["a", "b", "c", "d"]),
                       st.integers(0, 200), min_size=1),
       st.integers(0, 300), st.integers(1, 100))
def test_never_exceeds_budget_or_availability(avail, budget, tshare):
    targets = {s: tshare / (100.0 * len(avail)) for s in avail}
    alloc, _ = subsample_counts(avail, targets, budget)
    assert sum(alloc.values()) <= max(budget, sum(avail.values()))
    assert sum(alloc.values()) == min(budget, sum(avail.values()))
    for s, a in alloc.items():
        assert 0 <= a <= avail[s]


def _snippets(source_id, n):
    cuts = CutList(video_ref=f"{source_id}-vid", cut_frames=[], fps=25.0)
    return chunk_timeline(3.0 + 2.0 * (n - 1), cuts, source_id, stride_s=2.0)[:n]


def test_subsample_marks_reason_and_is_deterministic():
    snips = _snippets("A", 10) + _snippets("B", 10)
    out1 = subsample(snips, {"A": 0.5, "B": 0.5}, 10, seed=7)
    out2 = subsample(snips, {"A": 0.5, "B": 0.5}, 10, seed=7)
    assert [s.snippet_id for s in out1 if s.kept] == [s.snippet_id for s in out2 if s.kept]
    kept = [s for s in out1 if s.kept]
    dropped = [s for s in out1 if not s.kept]
    assert len(kept) == 10
    assert all(s.discard_reason == "subsampled_out" for s in dropped)
    assert len(kept) + len(dropped) == len(snips)
