"""Toy latent-prediction self-supervised sandbox.

A context encoder sees only unmasked tokens; a predictor fills in latents at
the masked positions; targets come from an EMA copy of the encoder applied
to the full sequence, behind a stop-gradient. Training minimizes the mean
L1 distance at masked positions. The per-dimension variance of the target
latents is logged every step as the collapse diagnostic, and the sandbox can
run the degenerate configuration (shared target encoder, no stop-gradient)
to demonstrate the collapse the EMA design prevents.

Inputs are synthetic token grids with moving patterns rather than real
video: the mechanism is the point, not the scale.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .errors import ContractViolation, NumericFault
from .layers import AttentionBlockParams, linear
from .optim import Adam, LrSchedule
from .rng import make_rng, stream_id
from .tensor import Tensor

log = logging.getLogger(__name__)

JEPA_MAGIC = b"PVJP"
JEPA_VERSION = 1


@dataclass(frozen=True)
class JepaConfig:
    grid_t: int = 2
    grid_h: int = 4
    grid_w: int = 4
    dim: int = 32
    heads: int = 4
    encoder_depth: int = 2
    predictor_depth: int = 1
    mask_ratio: float = 0.5
    mask_block: tuple[int, int, int] = (1, 2, 2)
    ema_momentum_start: float = 0.996
    ema_momentum_end: float = 1.0
    steps: int = 2000
    batch_size: int = 8
    base_lr: float = 1e-3
    warmup_steps: int = 100
    use_ema: bool = True            # False = shared weights, no stop-grad (collapse ablation)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.mask_ratio < 1.0:
            raise ContractViolation("mask ratio must lie in (0, 1)")
        if not 0.0 <= self.ema_momentum_start <= 1.0 or not 0.0 <= self.ema_momentum_end <= 1.0:
            raise ContractViolation("EMA momentum must lie in [0, 1]")
        for b, g in zip(self.mask_block, (self.grid_t, self.grid_h, self.grid_w)):
            if b < 1 or b > g:
                raise ContractViolation(f"mask block {self.mask_block} does not fit grid")

    @property
    def n_tokens(self) -> int:
        return self.grid_t * self.grid_h * self.grid_w

    def momentum_at(self, step: int) -> float:
        if self.steps <= 1:
            return self.ema_momentum_start
        frac = min(1.0, step / (self.steps - 1))
        return self.ema_momentum_start + frac * (self.ema_momentum_end - self.ema_momentum_start)


@dataclass(frozen=True)
class MaskSpec:
    masked: tuple[int, ...]
    unmasked: tuple[int, ...]

    def __post_init__(self):
        m, u = set(self.masked), set(self.unmasked)
        if not m or not u:
            raise ContractViolation("mask must be non-empty and proper")
        if m & u:
            raise ContractViolation("masked and unmasked sets overlap")


def sample_mask(grid: tuple[int, int, int], ratio: float, block: tuple[int, int, int],
                seed: int, stream: int = 0) -> MaskSpec:
    """Union of randomly placed 3D blocks until at least `ratio` is masked."""
    gt, gh, gw = grid
    bt, bh, bw = block
    if ratio >= 1.0 or ratio <= 0.0:
        raise ContractViolation("mask ratio must lie in (0, 1)")
    if bt > gt or bh > gh or bw > gw:
        raise ContractViolation("mask block does not fit the grid")
    total = gt * gh * gw
    need = ratio * total
    rng = make_rng(seed, stream)
    masked: set[int] = set()
    while len(masked) < need - 1e-9:
        t0 = int(rng.integers(0, gt - bt + 1))
        h0 = int(rng.integers(0, gh - bh + 1))
        w0 = int(rng.integers(0, gw - bw + 1))
        for t in range(t0, t0 + bt):
            for h in range(h0, h0 + bh):
                for w in range(w0, w0 + bw):
                    masked.add((t * gh + h) * gw + w)
        if len(masked) >= total:  # never mask everything
            masked.discard((t0 * gh + h0) * gw + w0)
            break
    unmasked = tuple(i for i in range(total) if i not in masked)
    return MaskSpec(masked=tuple(sorted(masked)), unmasked=unmasked)


def sincos_positions(grid: tuple[int, int, int], dim: int) -> np.ndarray:
    """Fixed sine/cosine embeddings of the 3D grid coordinates, (N, dim)."""
    gt, gh, gw = grid
    coords = np.array([(t, h, w) for t in range(gt) for h in range(gh) for w in range(gw)],
                      dtype=np.float64)
    per_axis = dim // 3
    pieces = []
    for axis in range(3):
        half = max(1, per_axis // 2)
        freqs = 1.0 / (10000.0 ** (np.arange(half) / half))
        angles = coords[:, axis : axis + 1] * freqs[None, :]
        pieces.extend([np.sin(angles), np.cos(angles)])
    emb = np.concatenate(pieces, axis=1)
    if emb.shape[1] < dim:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], dim - emb.shape[1]))], axis=1)
    return emb[:, :dim]


class JepaEncoder:
    """Input projection + attention blocks; depth 0 with identity_init is a no-op."""

    def __init__(self, dim: int, depth: int, heads: int, rng: np.random.Generator,
                 identity_init: bool = False):
        self.dim = dim
        if identity_init:
            self.proj_w = Tensor(np.eye(dim), requires_grad=True)
            self.proj_b = Tensor(np.zeros(dim), requires_grad=True)
        else:
            self.proj_w = Tensor(rng.normal(0.0, 0.02, size=(dim, dim)) + np.eye(dim),
                                 requires_grad=True)
            self.proj_b = Tensor(np.zeros(dim), requires_grad=True)
        self.blocks = [AttentionBlockParams.create(dim, heads, rng, zero_init=identity_init)
                       for _ in range(depth)]

    def parameters(self) -> list[Tensor]:
        out = [self.proj_w, self.proj_b]
        for b in self.blocks:
            out.extend(b.parameters())
        return out

    def forward(self, x: Tensor) -> Tensor:
        from .layers import self_attention_block

        x = linear(x, self.proj_w, self.proj_b)
        for blk in self.blocks:
            x = self_attention_block(x, blk)
        return x


class JepaPredictor:
    """Attention blocks over [context latents, mask queries] + output head."""

    def __init__(self, dim: int, depth: int, heads: int, rng: np.random.Generator):
        self.dim = dim
        self.mask_token = Tensor(rng.normal(0.0, 0.02, size=(dim,)), requires_grad=True)
        self.blocks = [AttentionBlockParams.create(dim, heads, rng) for _ in range(depth)]
        self.out_w = Tensor(np.eye(dim) + rng.normal(0.0, 0.02, size=(dim, dim)),
                            requires_grad=True)
        self.out_b = Tensor(np.zeros(dim), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        out = [self.mask_token, self.out_w, self.out_b]
        for b in self.blocks:
            out.extend(b.parameters())
        return out


def jepa_forward(context_enc: JepaEncoder, predictor: JepaPredictor,
                 tokens: np.ndarray, mask: MaskSpec, positions: np.ndarray) -> Tensor:
    """Predicted latents at the masked positions, (B, M, dim)."""
    from .layers import self_attention_block

    if tokens.ndim != 3:
        raise ContractViolation("tokens must be (B, N, dim)")
    b, n, d = tokens.shape
    masked_idx, unmasked_idx = list(mask.masked), list(mask.unmasked)
    m, u = len(masked_idx), len(unmasked_idx)

    ctx_in = Tensor(tokens[:, unmasked_idx, :] + positions[unmasked_idx][None])
    ctx = context_enc.forward(ctx_in)  # (B, U, d)

    queries = T.broadcast_to(
        T.reshape(predictor.mask_token, (1, 1, d)), (b, m, d))
    queries = queries + Tensor(positions[masked_idx][None])
    seq = T.concat([ctx, queries], axis=1)
    for blk in predictor.blocks:
        seq = self_attention_block(seq, blk)
    pred = T.take(seq, (slice(None), slice(u, u + m)))
    return linear(pred, predictor.out_w, predictor.out_b)


def target_latents(target_enc: JepaEncoder, tokens: np.ndarray, mask: MaskSpec,
                   positions: np.ndarray, stop_gradient: bool = True) -> Tensor | np.ndarray:
    """Target-encoder latents at masked positions; ndarray when stop-gradient."""
    full = target_enc.forward(Tensor(tokens + positions[None]))
    picked = T.take(full, (slice(None), list(mask.masked)))
    return picked.data if stop_gradient else picked


def jepa_loss(context_enc: JepaEncoder, predictor: JepaPredictor, target_enc: JepaEncoder,
              tokens: np.ndarray, mask: MaskSpec, positions: np.ndarray,
              stop_gradient: bool = True) -> Tensor:
    """Mean L1 between predictions and target latents at masked positions.

    Gradients reach the context encoder and predictor only, never the target
    encoder, unless stop_gradient is disabled for the collapse ablation.
    """
    if not mask.masked:
        raise ContractViolation("empty mask")
    pred = jepa_forward(context_enc, predictor, tokens, mask, positions)
    target = target_latents(target_enc, tokens, mask, positions, stop_gradient)
    if stop_gradient:
        from .losses import l1

        return l1(pred, target)
    return T.tmean(T.tabs(pred - target))


def ema_update(target_params: list[Tensor], context_params: list[Tensor], momentum: float) -> None:
    """theta_bar <- m * theta_bar + (1 - m) * theta, elementwise in place."""
    if len(target_params) != len(context_params):
        raise ContractViolation("parameter lists must align")
    for tp, cp in zip(target_params, context_params):
        if tp.shape != cp.shape:
            raise ContractViolation(f"shape mismatch {tp.shape} vs {cp.shape}")
        tp.data = momentum * tp.data + (1.0 - momentum) * cp.data


def crop_around_box(frame_w: int, frame_h: int, box: tuple[float, float, float, float],
                    jitter_range: tuple[float, float] = (1.0, 1.5),
                    seed: int = 0, stream: int = 0) -> tuple[float, float, float, float]:
    """Square crop containing the box (when it fits), with seeded scale jitter.

    The side is jitter * max(box extent); where the square exceeds a frame
    dimension it clamps to the frame in that direction, which still covers
    the box because the box lies within the frame.
    """
    x1, y1, x2, y2 = box
    if x2 <= x1 or y2 <= y1:
        raise ContractViolation("degenerate box")
    if x1 < 0 or y1 < 0 or x2 > frame_w or y2 > frame_h:
        raise ContractViolation("box must lie within the frame")
    rng = make_rng(seed, stream)
    jitter = float(rng.uniform(*jitter_range))
    side = jitter * max(x2 - x1, y2 - y1)
    cw, ch = min(side, float(frame_w)), min(side, float(frame_h))
    cx, cy = 0.5 * (x1 + x2), 0.5 * (y1 + y2)
    ox = min(max(cx - cw / 2.0, 0.0), frame_w - cw)
    oy = min(max(cy - ch / 2.0, 0.0), frame_h - ch)
    return (ox, oy, ox + cw, oy + ch)


# ---------------------------------------------------------------------------
# toy data: moving blobs on the token grid


def make_toy_batch(config: JepaConfig, step: int, seed_offset: int = 0) -> np.ndarray:
    """Deterministic batch of token grids with smooth moving patterns."""
    rng = make_rng(config.seed + seed_offset, stream_id("toy-batch", step))
    gt, gh, gw = config.grid_t, config.grid_h, config.grid_w
    basis_rng = make_rng(config.seed + seed_offset, stream_id("toy-basis"))
    basis = basis_rng.normal(0.0, 1.0, size=(2, config.dim))

    batch = np.zeros((config.batch_size, config.n_tokens, config.dim))
    coords = np.array([(t, h, w) for t in range(gt) for h in range(gh) for w in range(gw)],
                      dtype=np.float64)
    for i in range(config.batch_size):
        start = rng.uniform([0, 0], [gh - 1, gw - 1])
        vel = rng.uniform(-1.0, 1.0, size=2)
        width = rng.uniform(0.8, 1.6)
        pos = start[None, :] + coords[:, 0:1] * vel[None, :]  # blob center per time step
        dist2 = ((coords[:, 1] - pos[:, 0]) ** 2 + (coords[:, 2] - pos[:, 1]) ** 2)
        intensity = np.exp(-dist2 / (2.0 * width * width))
        phase = rng.uniform(0, 2 * np.pi)
        batch[i] = (np.outer(intensity, basis[0])
                    + np.outer(np.cos(intensity * np.pi + phase), basis[1]))
        batch[i] += rng.normal(0.0, 0.02, size=batch[i].shape)
    return batch


# ---------------------------------------------------------------------------
# training driver


@dataclass
class JepaRun:
    config: JepaConfig
    context_enc: JepaEncoder
    predictor: JepaPredictor
    target_enc: JepaEncoder
    diagnostics: list[dict] = field(default_factory=list)
    aborted: bool = False

    def diagnostics_lines(self) -> list[str]:
        return [json.dumps(r, separators=(",", ":")) for r in self.diagnostics]

    def checkpoint_bytes(self) -> bytes:
        buf = io.BytesIO()
        header = json.dumps(asdict(self.config), sort_keys=True).encode("utf-8")
        buf.write(JEPA_MAGIC)
        buf.write(struct.pack("<II", JEPA_VERSION, len(header)))
        buf.write(header)
        for p in (self.context_enc.parameters() + self.predictor.parameters()
                  + self.target_enc.parameters()):
            buf.write(p.data.astype("<f4").tobytes())
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.checkpoint_bytes())


def build_models(config: JepaConfig) -> tuple[JepaEncoder, JepaPredictor, JepaEncoder]:
    rng = make_rng(config.seed, stream_id("jepa-init"))
    context = JepaEncoder(config.dim, config.encoder_depth, config.heads, rng)
    predictor = JepaPredictor(config.dim, config.predictor_depth, config.heads, rng)
    if config.use_ema:
        target_rng = make_rng(config.seed, stream_id("jepa-init"))  # same stream: same init
        target = JepaEncoder(config.dim, config.encoder_depth, config.heads, target_rng)
        for p in target.parameters():
            p.requires_grad = False
    else:
        target = context  # shared weights, gradients flow (collapse ablation)
    return context, predictor, target


def target_variance(target_enc: JepaEncoder, tokens: np.ndarray, positions: np.ndarray) -> float:
    """Mean per-dimension variance of target latents across the batch.

    Variance is taken over samples at each (position, dim) and then averaged,
    so it measures whether the representation depends on the input at all; a
    collapsed encoder that outputs a constant (even a position-dependent one)
    scores zero.
    """
    latents = target_enc.forward(Tensor(tokens + positions[None])).data
    return float(latents.var(axis=0).mean())


def run_pretrain(config: JepaConfig, batch_fn=None) -> JepaRun:
    """Train the sandbox; returns models plus per-step diagnostics.

    batch_fn(step) -> (B, N, dim) tokens; defaults to the moving-blob toy
    stream. A NaN loss aborts with the last-good weights retained.
    """
    if batch_fn is None:
        batch_fn = lambda step: make_toy_batch(config, step)
    context, predictor, target = build_models(config)
    positions = sincos_positions((config.grid_t, config.grid_h, config.grid_w), config.dim)
    trainable = context.parameters() + predictor.parameters()
    schedule = LrSchedule(base_lr=config.base_lr, warmup_steps=config.warmup_steps,
                          total_steps=config.steps, mode="constant")
    opt = Adam(trainable, schedule)
    run = JepaRun(config=config, context_enc=context, predictor=predictor, target_enc=target)

    last_good = [p.data.copy() for p in trainable]
    for step in range(config.steps):
        tokens = batch_fn(step)
        mask = sample_mask((config.grid_t, config.grid_h, config.grid_w),
                           config.mask_ratio, config.mask_block,
                           seed=config.seed, stream=stream_id("mask", step))
        loss = jepa_loss(context, predictor, target, tokens, mask, positions,
                         stop_gradient=config.use_ema)
        if not np.isfinite(loss.item()):
            log.error("NaN loss at step %d; aborting with last-good weights", step)
            for p, data in zip(trainable, last_good):
                p.data = data
            run.aborted = True
            break
        opt.zero_grad()
        loss.backward()
        try:
            lr = opt.step()
        except NumericFault:
            log.error("non-finite gradient at step %d; aborting with last-good weights", step)
            for p, data in zip(trainable, last_good):
                p.data = data
            run.aborted = True
            break
        if config.use_ema:
            ema_update(target.parameters(), context.parameters(), config.momentum_at(step))
        variance = target_variance(target, tokens, positions)
        run.diagnostics.append({"step": step, "loss": loss.item(),
                                "target_variance": variance, "lr": lr})
        last_good = [p.data.copy() for p in trainable]
    return run
