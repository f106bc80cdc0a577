"""Evaluation protocol: multi-view crops, ensemble averaging, miniclip sampling.

Test-time predictions average the probability vectors of several trained
heads over several deterministic views of each sample (center crop plus two
corner crops at 87.5% scale, with a small temporal jitter). Views only
matter for real feature providers; synthetic providers fold the view id
into their noise stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import AttentiveClassifier
from .errors import ContractViolation
from .providers import FeatureProvider

VIEW_SCALE = 0.875
TEMPORAL_JITTER_FRAMES = 2


@dataclass(frozen=True)
class ViewSpec:
    view_id: int
    crop_origin: str  # center | top_left | bottom_right
    scale: float
    frame_offset: int


def make_views(n_views: int = 3) -> list[ViewSpec]:
    base = [
        ViewSpec(0, "center", 1.0, 0),
        ViewSpec(1, "top_left", VIEW_SCALE, -TEMPORAL_JITTER_FRAMES),
        ViewSpec(2, "bottom_right", VIEW_SCALE, TEMPORAL_JITTER_FRAMES),
    ]
    if not 1 <= n_views <= len(base):
        raise ContractViolation(f"supported view counts are 1..{len(base)}")
    return base[:n_views]


def view_crop(spec: ViewSpec, width: int, height: int) -> tuple[float, float, float, float]:
    """Pixel rect of a view inside a width x height sample."""
    w, h = width * spec.scale, height * spec.scale
    if spec.crop_origin == "center":
        x1, y1 = (width - w) / 2.0, (height - h) / 2.0
    elif spec.crop_origin == "top_left":
        x1, y1 = 0.0, 0.0
    elif spec.crop_origin == "bottom_right":
        x1, y1 = width - w, height - h
    else:
        raise ContractViolation(f"unknown crop origin {spec.crop_origin!r}")
    return (x1, y1, x1 + w, y1 + h)


def evaluate_protocol(classifiers: list[AttentiveClassifier], provider: FeatureProvider,
                      miniclip_ref: str, n_views: int = 3) -> np.ndarray:
    """Average the per-(head, view) probability vectors for one sample."""
    if not classifiers:
        raise ContractViolation("need at least one classifier")

    def arch(cfg):  # ensemble members differ only in their seed
        return {k: v for k, v in cfg.__dict__.items() if k != "seed"}

    first = arch(classifiers[0].config)
    for clf in classifiers[1:]:
        if arch(clf.config) != first:
            raise ContractViolation("ensemble members must share a config")
    probs = []
    for spec in make_views(n_views):
        feats = provider.features(miniclip_ref, view=spec.view_id)
        for clf in classifiers:
            probs.append(clf.predict_proba(feats))
    return np.mean(np.stack(probs), axis=0)


def average_probabilities(prob_vectors: list[np.ndarray]) -> np.ndarray:
    """Element-wise mean; the simplex is convex, so softmax outputs stay valid."""
    if not prob_vectors:
        raise ContractViolation("nothing to average")
    return np.mean(np.stack([np.asarray(p, dtype=np.float64) for p in prob_vectors]), axis=0)


# ---------------------------------------------------------------------------
# dense-track miniclip sampling


@dataclass(frozen=True)
class MiniclipCropSpec:
    frame_indices: tuple[int, ...]  # absolute frame numbers within the track
    crop: tuple[float, float, float, float]


def uniform_frame_indices(window_start: int, clip_len: int, out_frames: int) -> list[int]:
    """out_frames indices spread uniformly over [window_start, +clip_len).

    Rule fixed as floor(k * clip_len / out_frames + clip_len / (2 * out_frames)):
    sample at the center of each of out_frames equal bins.
    """
    step = clip_len / out_frames
    return [window_start + int(np.floor(k * step + step / 2.0)) for k in range(out_frames)]


def sample_tracked_miniclip(track_start: int, track_end: int, frame_j: int,
                            box: tuple[float, float, float, float],
                            frame_width: int, frame_height: int,
                            clip_len: int = 64, out_frames: int = 16,
                            padding: float = 0.0) -> MiniclipCropSpec:
    """Miniclip around one annotated frame of a tracked animal.

    Temporal: a clip_len window centered on frame_j, shifted (not shrunk)
    to stay inside [track_start, track_end); out_frames indices sampled
    uniformly. Spatial: the animal's box grown by `padding` (fraction of
    box size per side) and clamped to the frame.
    """
    if track_end - track_start < 1:
        raise ContractViolation("empty track")
    if not track_start <= frame_j < track_end:
        raise ContractViolation(f"frame {frame_j} outside track [{track_start}, {track_end})")
    span = min(clip_len, track_end - track_start)
    start = frame_j - span // 2
    start = max(track_start, min(start, track_end - span))
    indices = uniform_frame_indices(start, span, out_frames)

    x1, y1, x2, y2 = box
    if not (x1 < x2 and y1 < y2):
        raise ContractViolation("degenerate box")
    pw, ph = (x2 - x1) * padding, (y2 - y1) * padding
    crop = (max(0.0, x1 - pw), max(0.0, y1 - ph),
            min(float(frame_width), x2 + pw), min(float(frame_height), y2 + ph))
    return MiniclipCropSpec(frame_indices=tuple(indices), crop=crop)
