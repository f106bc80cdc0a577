"""Keyframe relevance scoring: a small MLP on frozen frame embeddings.

Trained with sigmoid BCE on human relevant/irrelevant verdicts; the export
threshold is chosen from the validation PR curve to maximize recall subject
to a precision floor (precision is favored over recall when both cannot be
had).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .layers import MlpParams, mlp_forward
from .losses import binary_cross_entropy, _sigmoid
from .metrics import pr_curve, roc_auc
from .optim import Adam, LrSchedule
from .rng import make_rng, stream_id
from .tensor import Tensor

log = logging.getLogger(__name__)

DEFAULT_HIDDEN_DIM = 256
DEFAULT_MIN_PRECISION = 0.90


@dataclass
class RelevanceModel:
    input_dim: int
    hidden_dim: int
    params: MlpParams
    threshold: float = 0.5

    def scores(self, embeddings: np.ndarray) -> np.ndarray:
        """Relevance probabilities for an (N, dim) embedding matrix."""
        emb = np.asarray(embeddings, dtype=np.float64)
        if emb.ndim == 1:
            emb = emb[None, :]
        if emb.shape[1] != self.input_dim:
            raise ContractViolation(f"embedding dim {emb.shape[1]} != model dim {self.input_dim}")
        logits = mlp_forward(Tensor(emb), self.params).data[:, 0]
        return _sigmoid(logits)

    def is_relevant(self, embeddings: np.ndarray) -> np.ndarray:
        return self.scores(embeddings) >= self.threshold

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.params.w1.data, "b1": self.params.b1.data,
                "w2": self.params.w2.data, "b2": self.params.b2.data}

    @classmethod
    def from_state(cls, state: dict, threshold: float) -> "RelevanceModel":
        p = MlpParams(
            w1=Tensor(np.asarray(state["w1"]), requires_grad=True),
            b1=Tensor(np.asarray(state["b1"]), requires_grad=True),
            w2=Tensor(np.asarray(state["w2"]), requires_grad=True),
            b2=Tensor(np.asarray(state["b2"]), requires_grad=True),
        )
        return cls(input_dim=p.w1.shape[0], hidden_dim=p.w1.shape[1], params=p, threshold=threshold)


@dataclass
class RelevanceReport:
    roc_auc: float
    pr_points: list[tuple[float, float, float]]  # (threshold, precision, recall)
    threshold: float
    threshold_warning: bool
    precision_at_threshold: float
    recall_at_threshold: float
    n_train: int
    n_val: int
    history: list[dict] = field(default_factory=list)


def select_threshold(curve: list[tuple[float, float, float]], min_precision: float) -> tuple[float, bool]:
    """Recall-maximizing threshold subject to precision >= min_precision.

    Falls back to the precision-maximizing threshold (with a warning flag)
    when the floor is unattainable anywhere on the curve.
    """
    if not curve:
        raise ContractViolation("empty PR curve")
    feasible = [pt for pt in curve if pt[1] >= min_precision]
    if feasible:
        t, _, _ = max(feasible, key=lambda pt: (pt[2], pt[1]))
        return t, False
    log.warning("no threshold reaches precision %.2f; falling back to precision-max point", min_precision)
    t, _, _ = max(curve, key=lambda pt: (pt[1], pt[2]))
    return t, True


def train_relevance(
    embeddings: np.ndarray,
    verdicts: np.ndarray,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    val_fraction: float = 0.2,
    min_precision: float = DEFAULT_MIN_PRECISION,
    epochs: int = 30,
    batch_size: int = 64,
    base_lr: float = 1e-3,
    dropout: float = 0.1,
    seed: int = 0,
) -> tuple[RelevanceModel, RelevanceReport]:
    """Train the relevance MLP and pick its operating threshold.

    verdicts: 1 = relevant, 0 = irrelevant. Both classes must be present in
    the train and validation splits; single-class data is refused.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(verdicts, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ContractViolation("embeddings must be (N, dim) matching verdicts")
    if len(set(y.tolist())) < 2:
        raise ContractViolation("relevance training needs both relevant and irrelevant examples")

    rng = make_rng(seed, stream_id("relevance-split"))
    order = rng.permutation(len(y))
    n_val = max(1, int(round(val_fraction * len(y))))
    val_idx, train_idx = order[:n_val], order[n_val:]
    for name, idx in (("train", train_idx), ("validation", val_idx)):
        if len(set(y[idx].tolist())) < 2:
            raise ContractViolation(f"{name} split contains a single class; provide more labels")

    init_rng = make_rng(seed, stream_id("relevance-init"))
    params = MlpParams.create(x.shape[1], hidden_dim, 1, init_rng)
    steps_per_epoch = max(1, int(np.ceil(len(train_idx) / batch_size)))
    total_steps = epochs * steps_per_epoch
    schedule = LrSchedule(base_lr=base_lr, warmup_steps=max(1, total_steps // 10),
                          total_steps=total_steps, final_lr_fraction=0.01)
    opt = Adam(params.parameters(), schedule)
    batch_rng = make_rng(seed, stream_id("relevance-batches"))
    drop_rng = make_rng(seed, stream_id("relevance-dropout"))

    history = []
    for epoch in range(epochs):
        perm = batch_rng.permutation(len(train_idx))
        epoch_loss = 0.0
        for start in range(0, len(train_idx), batch_size):
            idx = train_idx[perm[start:start + batch_size]]
            logits = mlp_forward(Tensor(x[idx]), params, dropout=dropout, rng=drop_rng)
            loss = binary_cross_entropy(logits, y[idx][:, None])
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += loss.item()
        history.append({"epoch": epoch, "train_loss": epoch_loss / steps_per_epoch})

    model = RelevanceModel(input_dim=x.shape[1], hidden_dim=hidden_dim, params=params)
    val_scores = model.scores(x[val_idx])
    curve = pr_curve(val_scores, y[val_idx].astype(int))
    auc = roc_auc(val_scores, y[val_idx].astype(int))
    threshold, warned = select_threshold(curve, min_precision)
    model.threshold = threshold
    at = next(pt for pt in curve if pt[0] == threshold)
    report = RelevanceReport(
        roc_auc=auc, pr_points=curve, threshold=threshold, threshold_warning=warned,
        precision_at_threshold=at[1], recall_at_threshold=at[2],
        n_train=len(train_idx), n_val=len(val_idx), history=history)
    return model, report
