"""Neural layers used by the attentive classifier and the SSL sandbox.

Blocks are pre-norm residual transformer blocks: x + MHSA(LN(x)) followed by
x + MLP(LN(x)) with a 4x hidden expansion and GELU. Softmax attention runs
over all tokens (no masking, no positional embeddings added here). With all
weights zero a block is the identity map, which the tests assert.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractViolation
from .tensor import Tensor


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b for x (..., M), w (M, K), b (K,)."""
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ContractViolation(f"linear shapes do not conform: x{x.shape} w{w.shape} b{b.shape}")
    return T.matmul(x, w) + b


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    return T.layer_norm(x, gamma, beta, eps)


def _init_weight(rng: np.random.Generator, shape, std: float = 0.02) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


@dataclass
class AttentionBlockParams:
    """Parameters of one pre-norm self-attention block at width dim."""

    dim: int
    heads: int
    ln1_g: Tensor
    ln1_b: Tensor
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    mlp_ratio: int = 4

    @classmethod
    def create(cls, dim: int, heads: int, rng: np.random.Generator, mlp_ratio: int = 4, zero_init: bool = False) -> "AttentionBlockParams":
        if dim % heads != 0:
            raise ContractViolation(f"dim {dim} not divisible by head count {heads}")
        hidden = mlp_ratio * dim
        w = (lambda shape: _zeros(shape)) if zero_init else (lambda shape: _init_weight(rng, shape))
        return cls(
            dim=dim,
            heads=heads,
            ln1_g=_ones(dim),
            ln1_b=_zeros(dim),
            wq=w((dim, dim)),
            bq=_zeros(dim),
            wk=w((dim, dim)),
            bk=_zeros(dim),
            wv=w((dim, dim)),
            bv=_zeros(dim),
            wo=w((dim, dim)),
            bo=_zeros(dim),
            ln2_g=_ones(dim),
            ln2_b=_zeros(dim),
            w1=w((dim, hidden)),
            b1=_zeros(hidden),
            w2=w((hidden, dim)),
            b2=_zeros(dim),
            mlp_ratio=mlp_ratio,
        )

    def parameters(self) -> list[Tensor]:
        return [
            self.ln1_g, self.ln1_b,
            self.wq, self.bq, self.wk, self.bk, self.wv, self.bv,
            self.wo, self.bo,
            self.ln2_g, self.ln2_b,
            self.w1, self.b1, self.w2, self.b2,
        ]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


def multi_head_attention(x: Tensor, p: AttentionBlockParams) -> Tensor:
    """Softmax self-attention over all tokens of x (B, T, D)."""
    b, t, d = x.shape
    h = p.heads
    dh = d // h

    def split_heads(z: Tensor) -> Tensor:
        return T.transpose(T.reshape(z, (b, t, h, dh)), (0, 2, 1, 3))  # (B, H, T, dh)

    q = split_heads(linear(x, p.wq, p.bq))
    k = split_heads(linear(x, p.wk, p.bk))
    v = split_heads(linear(x, p.wv, p.bv))
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    att = T.softmax(scores, axis=-1)
    ctx = T.matmul(att, v)  # (B, H, T, dh)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, t, d))
    return linear(ctx, p.wo, p.bo)


def self_attention_block(x: Tensor, p: AttentionBlockParams) -> Tensor:
    """Pre-norm residual block; accepts (T, D) or (B, T, D)."""
    squeeze = x.ndim == 2
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    if x.shape[-1] != p.dim:
        raise ContractViolation(f"block width {p.dim} does not match input dim {x.shape[-1]}")
    x = x + multi_head_attention(layer_norm(x, p.ln1_g, p.ln1_b), p)
    hidden = T.gelu(linear(layer_norm(x, p.ln2_g, p.ln2_b), p.w1, p.b1))
    x = x + linear(hidden, p.w2, p.b2)
    if squeeze:
        x = T.reshape(x, x.shape[1:])
    return x


@dataclass
class MlpParams:
    """Two-layer GELU MLP (used by the relevance classifier head)."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def create(cls, in_dim: int, hidden_dim: int, out_dim: int, rng: np.random.Generator) -> "MlpParams":
        bound1 = 1.0 / np.sqrt(in_dim)
        bound2 = 1.0 / np.sqrt(hidden_dim)
        return cls(
            w1=Tensor(rng.uniform(-bound1, bound1, size=(in_dim, hidden_dim)), requires_grad=True),
            b1=_zeros(hidden_dim),
            w2=Tensor(rng.uniform(-bound2, bound2, size=(hidden_dim, out_dim)), requires_grad=True),
            b2=_zeros(out_dim),
        )

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]


def mlp_forward(x: Tensor, p: MlpParams, dropout: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    h = T.gelu(linear(x, p.w1, p.b1))
    if dropout > 0.0:
        if rng is None:
            raise ContractViolation("dropout requires an rng")
        keep = (rng.random(h.shape) >= dropout).astype(np.float64) / (1.0 - dropout)
        h = T.mul(h, Tensor(keep))
    return linear(h, p.w2, p.b2)
