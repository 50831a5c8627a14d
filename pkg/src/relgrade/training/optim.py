from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from relgrade.errors import UsageError
from relgrade.training.head import ClassifierHead


@dataclass(frozen=True)
class AdamWConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class AdamWState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, head: ClassifierHead) -> "AdamWState":
        return cls(np.zeros_like(head.weights), np.zeros_like(head.weights),
                   np.zeros_like(head.bias), np.zeros_like(head.bias))


def adamw_step(
    head: ClassifierHead,
    grad_w: np.ndarray,
    grad_b: np.ndarray,
    state: AdamWState,
    lr: float,
    config: AdamWConfig = AdamWConfig(),
) -> tuple[ClassifierHead, AdamWState]:
    """One AdamW update. Weight decay is decoupled and skips the bias.

    ``state.step`` counts completed updates; the bias correction uses the
    incremented value, so the first call runs with ``t = 1``.
    """
    if grad_w.shape != head.weights.shape or grad_b.shape != head.bias.shape:
        raise UsageError(
            f"gradient shapes {grad_w.shape}/{grad_b.shape} do not match head "
            f"{head.weights.shape}/{head.bias.shape}"
        )
    b1, b2, eps = config.beta1, config.beta2, config.eps
    t = state.step + 1
    m_w = b1 * state.m_w + (1 - b1) * grad_w
    v_w = b2 * state.v_w + (1 - b2) * grad_w * grad_w
    m_b = b1 * state.m_b + (1 - b1) * grad_b
    v_b = b2 * state.v_b + (1 - b2) * grad_b * grad_b
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    weights = head.weights * (1 - lr * config.weight_decay)
    weights = weights - lr * (m_w / c1) / (np.sqrt(v_w / c2) + eps)
    bias = head.bias - lr * (m_b / c1) / (np.sqrt(v_b / c2) + eps)
    return ClassifierHead(weights, bias), AdamWState(m_w, v_w, m_b, v_b, t)


def cosine_lr(step: int, total_steps: int, peak: float, final_fraction: float = 0.1) -> float:
    """Cosine decay from ``peak`` at step 0 to ``final_fraction * peak`` at ``total_steps``."""
    if total_steps < 1:
        raise UsageError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise UsageError(f"step {step} outside [0, {total_steps}]")
    if step == 0:
        return peak
    final = final_fraction * peak
    w = 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
    return min(peak, final + (peak - final) * w)
