"""Snippet-level pipeline operations: detection filter, species, relevance."""

import numpy as np
import pytest

from privi.boxes import DetectionBox
from privi.chunking import chunk_timeline
from privi.cuts import CutList
from privi.errors import ProviderError
from privi.frames import Keyframe
from privi.manifest import EmbeddingStore, Snippet, SourceDataset
from privi.pipeline import (
    apply_relevance,
    assign_species,
    embed_keyframes,
    filter_by_detection,
    label_species,
    mark_cut_overlaps,
)
from privi.providers import DetectorProvider, EmbeddingProvider


def make_snippets(n=5, source="src"):
    cuts = CutList(video_ref="vid", cut_frames=[], fps=25.0)
    return chunk_timeline(3.0 + 2.0 * (n - 1), cuts, source, stride_s=2.0)


def keyframe_for(s):
    return Keyframe(image=np.zeros((10, 10, 3), np.uint8), video_ref=s.video_ref,
                    time_s=s.keyframe_time_s, meta={})


class StubDetector(DetectorProvider):
    def __init__(self, boxes_fn):
        self.boxes_fn = boxes_fn

    def detect(self, keyframe, prompt):
        return self.boxes_fn(keyframe)


def test_empty_detector_discards_everything():
    snips = make_snippets(4)
    out, pending = filter_by_detection(snips, StubDetector(lambda kf: []), keyframe_for)
    assert pending == []
    assert all(not s.kept and s.discard_reason == "no_detection" for s in out)
    assert len(out) == len(snips)


def test_single_box_per_frame_keeps_all():
    snips = make_snippets(4)
    det = StubDetector(lambda kf: [DetectionBox(1, 1, 5, 5, 0.9, "primate")])
    out, _ = filter_by_detection(snips, det, keyframe_for)
    assert all(s.kept and len(s.boxes) == 1 for s in out)


def test_three_overlapping_boxes_yield_one_survivor():
    snips = make_snippets(2)

    def boxes(kf):
        return [DetectionBox(0, 0, 10, 10, 0.9),
                DetectionBox(1, 1, 10, 10, 0.8),
                DetectionBox(0, 0, 9, 9, 0.7)]

    out, _ = filter_by_detection(snips, StubDetector(boxes), keyframe_for,
                                 iou_threshold=0.5)
    assert all(len(s.boxes) == 1 and s.boxes[0].score == 0.9 for s in out)


def test_provider_failure_leaves_snippet_pending():
    snips = make_snippets(3)
    calls = {"n": 0}

    def flaky(kf):
        calls["n"] += 1
        if calls["n"] == 2:
            raise ProviderError("boom")
        return [DetectionBox(1, 1, 5, 5, 0.9)]

    out, pending = filter_by_detection(snips, StubDetector(flaky), keyframe_for, workers=1)
    assert len(pending) == 1
    pending_snips = [s for s in out if s.snippet_id in pending]
    assert all(s.kept and s.boxes == [] for s in pending_snips)


def test_worker_pool_results_deterministic():
    snips = make_snippets(20)
    det = StubDetector(lambda kf: [DetectionBox(1, 1, 5, 5, 0.9, "primate")])
    out1, _ = filter_by_detection(snips, det, keyframe_for, workers=4)
    out2, _ = filter_by_detection(snips, det, keyframe_for, workers=1)
    assert [s.snippet_id for s in out1] == [s.snippet_id for s in out2]


def box(label, score=0.9):
    return DetectionBox(1, 1, 5, 5, score, label)


def snippet_with_boxes(boxes):
    return Snippet(snippet_id="x", source_id="s", video_ref="v", start_s=0,
                   end_s=3, keyframe_time_s=1.5, boxes=boxes)


def test_species_single_species_source():
    src = SourceDataset(id="s", setting="captive", species=("chimpanzee",))
    assert assign_species(snippet_with_boxes([box("bird")]), src) == "chimpanzee"


def test_species_multi_species_top_box_match():
    src = SourceDataset(id="s", setting="wild", species=("baboon", "vervet"))
    s = snippet_with_boxes([box("vervet", 0.5), box("baboon", 0.9)])
    assert assign_species(s, src) == "baboon"


def test_species_detector_disagrees_with_metadata():
    src = SourceDataset(id="s", setting="wild", species=("baboon",
                                                         "vervet"))
    assert assign_species(snippet_with_boxes([box("bird")]), src) is None


def test_species_rule_table():
    # exhaustive over (source list size, top label in list)
    for species_list, top, expected in [
        (("chimpanzee",), "anything", "chimpanzee"),
        (("a", "b"), "a", "a"),
        (("a", "b"), "c", None),
        ((), "a", None),
    ]:
        src = SourceDataset(id="s", setting="wild", species=species_list)
        assert assign_species(snippet_with_boxes([box(top)]), src) == expected


def test_label_species_skips_boxless():
    src = SourceDataset(id="src", setting="wild", species=("macaque",))
    snips = [snippet_with_boxes([box("macaque")])]
    out = label_species(snips, [src])
    assert out[0].species is None  # source_id mismatch ("s" vs "src")
    snips[0].source_id = "src"
    out = label_species(snips, [src])
    assert out[0].species == "macaque"


class StubEmbedder(EmbeddingProvider):
    dim = 4

    def embed(self, keyframe):
        return np.full(4, keyframe.time_s, dtype=np.float32)


def test_embed_then_relevance_roundtrip():
    snips = make_snippets(4)
    store = EmbeddingStore(dim=4)
    out, pending = embed_keyframes(snips, StubEmbedder(), keyframe_for, store)
    assert pending == []
    assert all(s.embedding_ref.startswith("embeddings.pvem:") for s in out)
    assert len(store) == 4

    from privi.relevance import RelevanceModel
    from privi.layers import MlpParams
    from privi.rng import make_rng

    params = MlpParams.create(4, 8, 1, make_rng(0))
    model = RelevanceModel(input_dim=4, hidden_dim=8, params=params, threshold=2.0)
    scored = apply_relevance(out, store, model)
    assert all(s.relevance_score is not None for s in scored)
    assert all(not s.kept and s.discard_reason == "irrelevant" for s in scored)


def test_mark_cut_overlaps():
    snips = make_snippets(4)  # starts 0,2,4,6 with len 3
    cuts = {"vid": CutList(video_ref="vid", cut_frames=[75], fps=25.0)}  # cut at 3 s
    out = mark_cut_overlaps(snips, cuts)
    # [2,5] contains 3.0 strictly; [0,3] touches it but does not span
    reasons = {s.snippet_id: s.discard_reason for s in out}
    spans = {s.snippet_id: (s.start_s, s.end_s) for s in out}
    for sid, (a, b) in spans.items():
        if a < 3.0 < b:
            assert reasons[sid] == "cut_overlap"
        else:
            assert reasons[sid] is None
