"""Adam optimizer with warmup + cosine-decay (or warmup + constant) schedule.

The schedule endpoints are pinned: lr_at(0)=0, lr_at(warmup_steps)=base_lr,
lr_at(total_steps)=final_lr_fraction*base_lr for the cosine mode. Constant
mode holds base_lr after warmup, which is what the SSL sandbox uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericFault
from .tensor import Tensor, clip_grad_norm


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    warmup_steps: int
    total_steps: int
    final_lr_fraction: float = 0.0
    mode: str = "cosine"  # "cosine" or "constant"

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ContractViolation("base_lr must be positive")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ContractViolation("need 0 <= warmup_steps <= total_steps")
        if self.mode not in ("cosine", "constant"):
            raise ContractViolation(f"unknown schedule mode {self.mode!r}")

    def lr_at(self, step: int) -> float:
        if step < 0 or step > self.total_steps:
            raise ContractViolation(f"step {step} outside [0, {self.total_steps}]")
        if self.warmup_steps > 0 and step < self.warmup_steps:
            return self.base_lr * step / self.warmup_steps
        if self.mode == "constant":
            return self.base_lr
        span = self.total_steps - self.warmup_steps
        if span == 0:
            return self.base_lr
        progress = (step - self.warmup_steps) / span
        floor = self.final_lr_fraction * self.base_lr
        return floor + (self.base_lr - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimizerState:
    """Per-parameter Adam moments plus the step counter and schedule."""

    schedule: LrSchedule
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


class Adam:
    """Standard Adam with bias correction, bound to a parameter list."""

    def __init__(self, params: list[Tensor], schedule: LrSchedule,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float | None = None):
        self.params = list(params)
        self.state = OptimizerState(schedule=schedule, beta1=beta1, beta2=beta2, eps=eps)
        self.state.m = [np.zeros_like(p.data) for p in self.params]
        self.state.v = [np.zeros_like(p.data) for p in self.params]
        self.clip_norm = clip_norm

    @property
    def step_count(self) -> int:
        return self.state.step_count

    def current_lr(self) -> float:
        return self.state.schedule.lr_at(self.state.step_count)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> float:
        """Apply one update from the gradients stored on the parameters.

        Returns the learning rate used. A NaN/Inf gradient aborts the step
        (no parameter is touched) with a diagnostic.
        """
        st = self.state
        if st.step_count >= st.schedule.total_steps:
            raise ContractViolation(f"step {st.step_count} >= total_steps {st.schedule.total_steps}")
        grads = []
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericFault(f"non-finite gradient in parameter {i} (shape {p.shape}); step {st.step_count} aborted")
            grads.append(g)
        if self.clip_norm is not None:
            clip_grad_norm(self.params, self.clip_norm)
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        lr = st.schedule.lr_at(st.step_count)
        t = st.step_count + 1
        bc1 = 1.0 - st.beta1 ** t
        bc2 = 1.0 - st.beta2 ** t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g
            st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * (g * g)
            m_hat = st.m[i] / bc1
            v_hat = st.v[i] / bc2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + st.eps)
        st.step_count = t
        return lr


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: OptimizerState) -> float:
    """Functional single step: write grads onto params, then update."""
    if len(grads) != len(params):
        raise ContractViolation("params/grads length mismatch")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    opt = Adam.__new__(Adam)
    opt.params = list(params)
    opt.state = state
    opt.clip_norm = None
    for p, g in zip(params, grads):
        p.grad = np.asarray(g, dtype=np.float64)
    return opt.step()
