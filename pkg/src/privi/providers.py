"""Pretrained-model providers: frame embedder, zero-shot detector, and the
frozen video feature encoder.

The real models run behind an inference server (see http_client); the
synthetic providers here are deterministic stand-ins driven by keyframe
metadata, used for tests and the fixture corpus. All providers must be
deterministic: the same input always yields the same output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import DetectionBox
from .errors import ContractViolation
from .frames import Keyframe
from .rng import make_rng, stream_id


def tokenize_layout(frames: int, height: int, width: int, tubelet: int, patch: int) -> int:
    """Token count of a non-overlapping tubelet/patch tokenization."""
    for name, total, step in (("frames", frames, tubelet), ("height", height, patch), ("width", width, patch)):
        if total % step != 0:
            raise ContractViolation(f"{name}={total} not divisible by its patch step {step}")
    return (frames // tubelet) * (height // patch) * (width // patch)


@dataclass(frozen=True)
class TokenLayout:
    frames: int = 16
    height: int = 224
    width: int = 224
    tubelet: int = 2
    patch: int = 16

    @property
    def n_tokens(self) -> int:
        return tokenize_layout(self.frames, self.height, self.width, self.tubelet, self.patch)


@dataclass
class TokenFeatures:
    """Frozen-encoder patch tokens for one miniclip, with provenance."""

    tokens: np.ndarray  # (N, D)
    provider_id: str = ""
    miniclip_ref: str = ""
    crop: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2:
            raise ContractViolation(f"token features must be (N, D), got {self.tokens.shape}")
        if not np.all(np.isfinite(self.tokens)):
            raise ContractViolation("token features must be finite")

    @property
    def n(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]


class EmbeddingProvider:
    """Maps a keyframe to a fixed-dim float32 embedding."""

    dim: int

    def embed(self, keyframe: Keyframe) -> np.ndarray:
        raise NotImplementedError


class DetectorProvider:
    """Zero-shot detector prompted for a target class."""

    def detect(self, keyframe: Keyframe, prompt: str) -> list[DetectionBox]:
        raise NotImplementedError


class FeatureProvider:
    """Frozen video encoder producing patch-token features for a miniclip."""

    layout: TokenLayout
    dim: int

    def features(self, miniclip_ref: str, crop=None, view: int = 0) -> TokenFeatures:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# synthetic providers


class SyntheticEmbedder(EmbeddingProvider):
    """Embedding = centroid for the label planted in frame metadata + noise.

    The noise stream is derived from (seed, video_ref, time), so the same
    frame always embeds identically.
    """

    def __init__(self, seed: int, dim: int, class_centroids: dict[str, np.ndarray],
                 noise_sigma: float = 1.0, meta_key: str = "embed_class"):
        if not class_centroids:
            raise ContractViolation("need at least one centroid")
        self.seed = seed
        self.dim = int(dim)
        self.meta_key = meta_key
        self.noise_sigma = float(noise_sigma)
        self.centroids = {}
        for label, c in class_centroids.items():
            c = np.asarray(c, dtype=np.float64)
            if c.shape != (self.dim,):
                raise ContractViolation(f"centroid for {label!r} has dim {c.shape}, expected ({self.dim},)")
            self.centroids[label] = c

    def embed(self, keyframe: Keyframe) -> np.ndarray:
        label = keyframe.meta.get(self.meta_key)
        if label not in self.centroids:
            raise ContractViolation(f"frame metadata lacks a known {self.meta_key!r} (got {label!r})")
        rng = make_rng(self.seed, stream_id("embed", keyframe.video_ref, f"{keyframe.time_s:.6f}"))
        noise = rng.normal(0.0, self.noise_sigma, size=self.dim) if self.noise_sigma > 0 else 0.0
        return (self.centroids[label] + noise).astype(np.float32)


class SyntheticDetector(DetectorProvider):
    """Detector stand-in: boxes come from frame metadata.

    meta["boxes"] may hold explicit (x1, y1, x2, y2, score, label) tuples;
    otherwise meta["has_primate"] drives a single deterministic box with a
    small seeded position wobble.
    """

    def __init__(self, seed: int = 0, default_label: str = "primate"):
        self.seed = seed
        self.default_label = default_label

    def detect(self, keyframe: Keyframe, prompt: str) -> list[DetectionBox]:
        if "boxes" in keyframe.meta:
            return [DetectionBox(*b) for b in keyframe.meta["boxes"]]
        if not keyframe.meta.get("has_primate", False):
            return []
        h, w = keyframe.height, keyframe.width
        rng = make_rng(self.seed, stream_id("detect", keyframe.video_ref, f"{keyframe.time_s:.6f}"))
        cx = w * (0.5 + float(rng.uniform(-0.1, 0.1)))
        cy = h * (0.5 + float(rng.uniform(-0.1, 0.1)))
        bw, bh = w * 0.3, h * 0.4
        score = float(np.round(rng.uniform(0.6, 0.95), 4))
        return [DetectionBox(max(0.0, cx - bw / 2), max(0.0, cy - bh / 2),
                             min(float(w), cx + bw / 2), min(float(h), cy + bh / 2),
                             score, self.default_label)]


class SyntheticFeatureProvider(FeatureProvider):
    """Token features with a class-dependent mean token plus seeded noise.

    miniclip_ref encodes the class as "...:<class_index>"; views and crops
    perturb the noise stream only, keeping the class signal intact.
    """

    def __init__(self, seed: int, dim: int, n_tokens: int, n_classes: int,
                 signal: float = 1.0, noise_sigma: float = 1.0,
                 layout: TokenLayout | None = None):
        self.seed = seed
        self.dim = int(dim)
        self.n_tokens = int(n_tokens)
        self.layout = layout or TokenLayout()
        base_rng = make_rng(seed, stream_id("feature-centroids"))
        self.class_means = base_rng.normal(0.0, signal, size=(n_classes, self.dim))
        self.noise_sigma = float(noise_sigma)

    @staticmethod
    def class_of(miniclip_ref: str) -> int:
        return int(miniclip_ref.rsplit(":", 1)[1])

    def features(self, miniclip_ref: str, crop=None, view: int = 0) -> TokenFeatures:
        cls = self.class_of(miniclip_ref)
        rng = make_rng(self.seed, stream_id("feature", miniclip_ref, view, str(crop)))
        tokens = self.class_means[cls][None, :] + rng.normal(0.0, self.noise_sigma,
                                                             size=(self.n_tokens, self.dim))
        return TokenFeatures(tokens=tokens, provider_id="synthetic",
                             miniclip_ref=miniclip_ref, crop=crop)
