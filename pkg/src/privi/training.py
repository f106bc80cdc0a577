"""Head training loop for the attentive classifier.

Features are precomputed and frozen; only the head's parameters receive
gradients. Adam with linear warmup into cosine decay, seeded batch
shuffling, and optional best-validation checkpointing (the returned model
is the epoch snapshot with the highest validation metric when a validation
set is supplied, end-of-training weights otherwise).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classifier import AttentiveClassifier, ClassifierConfig
from .errors import ContractViolation
from .losses import binary_cross_entropy, cross_entropy, equalization_loss
from .metrics import PredictionRecord, accuracy, map_report
from .optim import Adam, LrSchedule
from .providers import TokenFeatures
from .rng import make_rng, stream_id

log = logging.getLogger(__name__)


@dataclass
class MiniclipSample:
    features: TokenFeatures | np.ndarray
    label: int | np.ndarray
    sequence_id: str
    view_id: int = 0

    @property
    def tokens(self) -> np.ndarray:
        f = self.features
        return f.tokens if isinstance(f, TokenFeatures) else np.asarray(f, dtype=np.float64)


@dataclass
class TrainingHistory:
    records: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_metric: float | None = None

    def to_lines(self) -> list[str]:
        import json

        return [json.dumps(r, separators=(",", ":")) for r in self.records]


def _stack(samples: list[MiniclipSample]) -> np.ndarray:
    return np.stack([s.tokens for s in samples])


def _labels(samples: list[MiniclipSample], config: ClassifierConfig):
    if config.task == "single_label":
        return np.asarray([int(s.label) for s in samples], dtype=np.int64)
    mat = np.stack([np.asarray(s.label, dtype=np.float64) for s in samples])
    if mat.shape[1] != config.n_classes:
        raise ContractViolation(f"multi-label vectors must have length {config.n_classes}")
    return mat


def _class_frequencies(samples: list[MiniclipSample], config: ClassifierConfig) -> np.ndarray:
    counts = np.zeros(config.n_classes)
    for s in samples:
        counts[int(s.label)] += 1
    total = counts.sum()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        log.warning("classes with no training samples: %s", empty.tolist())
    return counts / total if total else np.full(config.n_classes, 1.0 / config.n_classes)


def evaluate(model: AttentiveClassifier, samples: list[MiniclipSample]) -> float:
    """Validation metric: accuracy (single-label) or mAP (multi-label)."""
    records = [PredictionRecord(sample_id=str(i), scores=model.predict_proba(s.tokens), truth=s.label)
               for i, s in enumerate(samples)]
    if model.config.task == "single_label":
        return accuracy(records)
    report = map_report(records)
    return report.aggregates["map"] if report.aggregates["map"] is not None else 0.0


def train_head(config: ClassifierConfig, train_set: list[MiniclipSample],
               val_set: list[MiniclipSample] | None = None,
               log_every: int = 0) -> tuple[AttentiveClassifier, TrainingHistory]:
    if not train_set:
        raise ContractViolation("empty training set")
    model = AttentiveClassifier(config)
    freqs = _class_frequencies(train_set, config) if config.task == "single_label" else None

    steps_per_epoch = int(np.ceil(len(train_set) / config.batch_size))
    total_steps = config.epochs * steps_per_epoch
    schedule = LrSchedule(
        base_lr=config.base_lr,
        warmup_steps=max(1, int(round(config.warmup_fraction * total_steps))),
        total_steps=total_steps,
        final_lr_fraction=config.final_lr_fraction,
    )
    opt = Adam(model.parameters(), schedule)
    batch_rng = make_rng(config.seed, stream_id("head-batches"))

    history = TrainingHistory()
    best_state = None
    step = 0
    for epoch in range(config.epochs):
        order = batch_rng.permutation(len(train_set))
        for start in range(0, len(train_set), config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            tokens = _stack(batch)
            lr = opt.current_lr()
            logits = model.logits(tokens)
            if config.loss == "ce":
                loss = cross_entropy(logits, _labels(batch, config))
            elif config.loss == "bce":
                loss = binary_cross_entropy(logits, _labels(batch, config))
            else:
                loss = equalization_loss(logits, _labels(batch, config), freqs,
                                         config.eql_rarity_threshold)
            opt.zero_grad()
            loss.backward()
            opt.step()
            history.records.append({"epoch": epoch, "step": step, "lr": lr,
                                    "train_loss": loss.item(), "val_metric": None})
            step += 1
        if val_set is not None:
            metric = evaluate(model, val_set)
            history.records[-1]["val_metric"] = metric
            if history.best_val_metric is None or metric > history.best_val_metric:
                history.best_val_metric = metric
                history.best_epoch = epoch
                best_state = model.state_copy()
            if log_every and (epoch + 1) % log_every == 0:
                log.info("epoch %d val metric %.4f", epoch, metric)

    if best_state is not None:
        model.load_state(best_state)
    return model, history


def train_ensemble(config: ClassifierConfig, train_set: list[MiniclipSample],
                   val_set: list[MiniclipSample] | None = None,
                   n_heads: int = 5) -> list[AttentiveClassifier]:
    """Independently seeded heads; seeds derive from the base config seed."""
    models = []
    for i in range(n_heads):
        cfg = ClassifierConfig(**{**config.__dict__, "seed": config.seed + 1000 * i})
        model, _ = train_head(cfg, train_set, val_set)
        models.append(model)
    return models
