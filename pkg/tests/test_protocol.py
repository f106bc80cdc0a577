"""Ensemble/views protocol and dense-track miniclip sampling."""

import numpy as np
import pytest

from privi.classifier import AttentiveClassifier, ClassifierConfig
from privi.errors import ContractViolation
from privi.protocol import (
    average_probabilities,
    evaluate_protocol,
    make_views,
    sample_tracked_miniclip,
    uniform_frame_indices,
    view_crop,
)
from privi.providers import FeatureProvider, SyntheticFeatureProvider, TokenFeatures
from privi.rng import make_rng


class FixedFeatureProvider(FeatureProvider):
    """Ignores the view id: every view returns identical features."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.dim = tokens.shape[1]

    def features(self, miniclip_ref, crop=None, view=0):
        return TokenFeatures(tokens=self.tokens, miniclip_ref=miniclip_ref)


def test_identical_heads_and_views_equal_single_forward():
    cfg = ClassifierConfig(input_dim=16, model_dim=8, layers=1, heads=2, n_classes=3, seed=7)
    heads = [AttentiveClassifier(cfg) for _ in range(5)]  # same seed -> identical weights
    rng = make_rng(80)
    tokens = rng.normal(size=(6, 16))
    provider = FixedFeatureProvider(tokens)
    avg = evaluate_protocol(heads, provider, "clip:0", n_views=3)
    single = heads[0].predict_proba(tokens)
    np.testing.assert_allclose(avg, single, atol=1e-12)


def test_averaging_preserves_simplex():
    cfg = ClassifierConfig(input_dim=16, model_dim=8, layers=1, heads=2, n_classes=4)
    heads = [AttentiveClassifier(ClassifierConfig(**{**cfg.__dict__, "seed": s})) for s in range(3)]
    provider = SyntheticFeatureProvider(seed=4, dim=16, n_tokens=5, n_classes=4)
    avg = evaluate_protocol(heads, provider, "m:2", n_views=3)
    assert avg.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(avg >= 0)


def test_mismatched_configs_rejected():
    a = AttentiveClassifier(ClassifierConfig(input_dim=16, model_dim=8, layers=1, heads=2, n_classes=3))
    b = AttentiveClassifier(ClassifierConfig(input_dim=16, model_dim=8, layers=2, heads=2, n_classes=3))
    provider = SyntheticFeatureProvider(seed=4, dim=16, n_tokens=5, n_classes=3)
    with pytest.raises(ContractViolation):
        evaluate_protocol([a, b], provider, "m:0")


def test_hand_built_two_by_two_average():
    vecs = [np.array([0.2, 0.8]), np.array([0.6, 0.4]),
            np.array([0.0, 1.0]), np.array([0.4, 0.6])]
    np.testing.assert_allclose(average_probabilities(vecs), [0.3, 0.7])


def test_make_views_deterministic_geometry():
    views = make_views(3)
    assert [v.view_id for v in views] == [0, 1, 2]
    assert views[0].scale == 1.0 and views[1].scale == views[2].scale == 0.875
    center = view_crop(views[0], 224, 224)
    assert center == (0.0, 0.0, 224.0, 224.0)
    tl = view_crop(views[1], 224, 224)
    assert tl[:2] == (0.0, 0.0) and tl[2] == pytest.approx(196.0)
    br = view_crop(views[2], 224, 224)
    assert br[2:] == (224.0, 224.0) and br[0] == pytest.approx(28.0)


def test_uniform_indices_rule():
    # floor(k*64/16 + 64/32) = 4k + 2
    idx = uniform_frame_indices(0, 64, 16)
    assert idx == [4 * k + 2 for k in range(16)]
    assert len(idx) == 16
    assert idx == sorted(idx)
    assert all(0 <= i < 64 for i in idx)


def test_miniclip_window_clamped_at_video_start():
    spec = sample_tracked_miniclip(track_start=0, track_end=500, frame_j=0,
                                   box=(10, 10, 50, 50), frame_width=100, frame_height=100)
    assert min(spec.frame_indices) >= 0
    assert max(spec.frame_indices) <= 63
    assert spec.frame_indices == tuple(4 * k + 2 for k in range(16))


def test_miniclip_window_clamped_at_video_end():
    spec = sample_tracked_miniclip(track_start=0, track_end=100, frame_j=99,
                                   box=(10, 10, 50, 50), frame_width=100, frame_height=100)
    assert max(spec.frame_indices) < 100
    assert min(spec.frame_indices) >= 36  # window [36, 100)


def test_miniclip_short_track_shrinks_window():
    spec = sample_tracked_miniclip(track_start=0, track_end=32, frame_j=10,
                                   box=(0, 0, 10, 10), frame_width=50, frame_height=50)
    assert len(spec.frame_indices) == 16
    assert all(0 <= i < 32 for i in spec.frame_indices)


def test_miniclip_padding_zero_equals_box():
    box = (10.0, 20.0, 60.0, 70.0)
    spec = sample_tracked_miniclip(0, 200, 100, box, 100, 100, padding=0.0)
    assert spec.crop == box


def test_miniclip_padding_expands_and_clamps():
    box = (10.0, 20.0, 60.0, 70.0)
    spec = sample_tracked_miniclip(0, 200, 100, box, 100, 100, padding=0.5)
    x1, y1, x2, y2 = spec.crop
    assert (x1, y1) == (0.0, 0.0)  # 10 - 25 and 20 - 25 clamp to 0
    assert x2 == pytest.approx(85.0) and y2 == pytest.approx(95.0)


def test_miniclip_contract_errors():
    with pytest.raises(ContractViolation):
        sample_tracked_miniclip(0, 0, 0, (0, 0, 1, 1), 10, 10)
    with pytest.raises(ContractViolation):
        sample_tracked_miniclip(0, 10, 12, (0, 0, 1, 1), 10, 10)
    with pytest.raises(ContractViolation):
        sample_tracked_miniclip(0, 10, 5, (5, 5, 5, 9), 10, 10)
