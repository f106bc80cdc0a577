"""Attentive classifier over frozen patch-token features.

Architecture: LayerNorm over the raw token dim D, a linear down-projection
to D', one learned class token per class concatenated in front of the
projected patch tokens, a stack of pre-norm self-attention blocks at width
D', and a per-class scalar head reading class j's probability from the
transformed class token at position j. Softmax couples the C head outputs
for single-label tasks; multi-label tasks use independent sigmoids.

No positional embeddings are added, so patch-token order cannot influence
the output (checked by test). Patch-token outputs after the block stack are
discarded; only class-token positions are read.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .errors import ContractViolation
from .layers import AttentionBlockParams, layer_norm, linear, self_attention_block
from .losses import _sigmoid
from .providers import TokenFeatures
from .rng import make_rng, stream_id
from .tensor import Tensor

CHECKPOINT_MAGIC = b"PVHD"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ClassifierConfig:
    input_dim: int = 1024          # D, frozen-encoder token width
    model_dim: int = 64            # D', width after down-projection
    layers: int = 3
    heads: int = 8
    mlp_ratio: int = 4
    n_classes: int = 2
    task: str = "single_label"     # single_label | multi_label
    loss: str = "ce"               # ce | bce | eql
    epochs: int = 40
    batch_size: int = 64
    base_lr: float = 1e-3
    warmup_fraction: float = 0.1
    final_lr_fraction: float = 0.0
    eql_rarity_threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ContractViolation("need at least 2 classes")
        if self.layers < 1:
            raise ContractViolation("need at least 1 block")
        if self.model_dim > self.input_dim:
            raise ContractViolation("down-projection cannot widen the tokens")
        if self.model_dim % self.heads != 0:
            raise ContractViolation("model_dim must be divisible by heads")
        if self.task not in ("single_label", "multi_label"):
            raise ContractViolation(f"unknown task {self.task!r}")
        if self.loss not in ("ce", "bce", "eql"):
            raise ContractViolation(f"unknown loss {self.loss!r}")


def parameter_count(config: ClassifierConfig) -> int:
    """Closed-form parameter count.

    2*D (input LN) + D'*D + D' (projection) + per-block total * layers
    + C*D' (class tokens) + C*(D'+1) (heads), where one block holds two
    affine LayerNorms, q/k/v/out projections with bias, and the 2-layer MLP
    at mlp_ratio expansion.
    """
    d, dp, c = config.input_dim, config.model_dim, config.n_classes
    hidden = config.mlp_ratio * dp
    block = 2 * (2 * dp) + 4 * (dp * dp + dp) + (dp * hidden + hidden) + (hidden * dp + dp)
    return 2 * d + (dp * d + dp) + config.layers * block + c * dp + c * (dp + 1)


class AttentiveClassifier:
    def __init__(self, config: ClassifierConfig):
        self.config = config
        rng = make_rng(config.seed, stream_id("classifier-init"))
        d, dp, c = config.input_dim, config.model_dim, config.n_classes

        self.input_ln_g = Tensor(np.ones(d), requires_grad=True)
        self.input_ln_b = Tensor(np.zeros(d), requires_grad=True)
        self.proj_w = Tensor(rng.normal(0.0, 0.02, size=(d, dp)), requires_grad=True)
        self.proj_b = Tensor(np.zeros(dp), requires_grad=True)
        self.class_tokens = Tensor(rng.normal(0.0, 0.02, size=(c, dp)), requires_grad=True)
        self.blocks = [AttentionBlockParams.create(dp, config.heads, rng, config.mlp_ratio)
                       for _ in range(config.layers)]
        self.head_w = Tensor(rng.normal(0.0, 0.02, size=(c, dp)), requires_grad=True)
        self.head_b = Tensor(np.zeros(c), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        params = [self.input_ln_g, self.input_ln_b, self.proj_w, self.proj_b, self.class_tokens]
        for blk in self.blocks:
            params.extend(blk.parameters())
        params.extend([self.head_w, self.head_b])
        return params

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def _check_features(self, tokens: np.ndarray) -> None:
        if tokens.ndim not in (2, 3) or tokens.shape[-1] != self.config.input_dim:
            raise ContractViolation(
                f"features must be (N, {self.config.input_dim}) or batched, got {tokens.shape}")

    def logits(self, tokens: np.ndarray) -> Tensor:
        """Per-class raw scores for (N, D) or (B, N, D) frozen features."""
        self._check_features(tokens)
        squeeze = tokens.ndim == 2
        if squeeze:
            tokens = tokens[None]
        b = tokens.shape[0]
        c = self.config.n_classes

        x = Tensor(tokens)  # frozen: requires_grad stays False
        x = layer_norm(x, self.input_ln_g, self.input_ln_b)
        x = linear(x, self.proj_w, self.proj_b)  # (B, N, D')
        cls = T.broadcast_to(T.reshape(self.class_tokens, (1, c, self.config.model_dim)),
                             (b, c, self.config.model_dim))
        x = T.concat([cls, x], axis=1)
        for blk in self.blocks:
            x = self_attention_block(x, blk)
        cls_out = T.take(x, (slice(None), slice(0, c)))  # (B, C, D')
        scores = T.tsum(T.mul(cls_out, T.broadcast_to(
            T.reshape(self.head_w, (1, c, self.config.model_dim)), cls_out.shape)), axis=-1)
        scores = scores + self.head_b
        if squeeze:
            scores = T.reshape(scores, (c,))
        return scores

    def predict_proba(self, features: TokenFeatures | np.ndarray) -> np.ndarray:
        """Probabilities: softmax across classes or element-wise sigmoid."""
        tokens = features.tokens if isinstance(features, TokenFeatures) else np.asarray(features)
        z = self.logits(tokens).data
        if self.config.task == "single_label":
            e = np.exp(z - z.max(axis=-1, keepdims=True))
            return e / e.sum(axis=-1, keepdims=True)
        return _sigmoid(z)

    # -- checkpoint io ------------------------------------------------------
    def save(self, path) -> None:
        header = json.dumps(asdict(self.config), sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
            fh.write(header)
            for p in self.parameters():
                fh.write(p.data.astype("<f4").tobytes())

    def dumps(self) -> bytes:
        buf = io.BytesIO()
        header = json.dumps(asdict(self.config), sort_keys=True).encode("utf-8")
        buf.write(CHECKPOINT_MAGIC)
        buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        buf.write(header)
        for p in self.parameters():
            buf.write(p.data.astype("<f4").tobytes())
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "AttentiveClassifier":
        with open(path, "rb") as fh:
            return cls._read(fh)

    @classmethod
    def loads(cls, blob: bytes) -> "AttentiveClassifier":
        return cls._read(io.BytesIO(blob))

    @classmethod
    def _read(cls, fh) -> "AttentiveClassifier":
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ContractViolation(f"bad checkpoint magic {magic!r}")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ContractViolation(f"unsupported checkpoint version {version}")
        config = ClassifierConfig(**json.loads(fh.read(header_len).decode("utf-8")))
        model = cls(config)
        for p in model.parameters():
            raw = fh.read(p.size * 4)
            if len(raw) != p.size * 4:
                raise ContractViolation("truncated checkpoint")
            p.data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(p.shape)
        return model

    def state_copy(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, state: list[np.ndarray]) -> None:
        for p, arr in zip(self.parameters(), state):
            p.data = arr.copy()
