"""Cross-entropy and margin contrastive losses with analytic gradients.

The contrastive loss compares the softmax output with the one-hot vector of
the relevant class: ``D = ||probs - (0, 1)||``. ``Y = 1`` marks a
dissimilar (not relevant) pair, so relevant pairs are pulled toward
``D = 0`` and irrelevant ones pushed out to ``D >= margin``.
"""

from __future__ import annotations

import numpy as np

POSITIVE_TARGET = np.array([0.0, 1.0])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(logits, label: int) -> tuple[float, np.ndarray]:
    """``-log softmax(logits)[label]`` and its gradient w.r.t. the two logits."""
    z = np.asarray(logits, dtype=np.float64)
    other = 1 - int(label)
    loss = float(np.logaddexp(0.0, z[other] - z[label]))
    grad = softmax(z)
    grad[label] -= 1.0
    return loss, grad


def contrastive_loss(probs, y: int, margin: float = 1.0) -> tuple[float, np.ndarray]:
    """Margin contrastive loss of ``probs`` against the positive one-hot target.

    Returns the loss and its gradient w.r.t. ``probs``. ``y=0`` is the
    similar (relevant) case, ``y=1`` the dissimilar one.
    """
    p = np.asarray(probs, dtype=np.float64)
    diff = p - POSITIVE_TARGET
    dist = float(np.sqrt(diff @ diff))
    if y == 0:
        return 0.5 * dist * dist, diff.copy()
    gap = margin - dist
    if gap <= 0.0 or dist == 0.0:
        return 0.5 * max(gap, 0.0) ** 2, np.zeros(2)
    return 0.5 * gap * gap, -gap * diff / dist


def cross_entropy_batch(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a batch and its gradient w.r.t. ``logits``."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(len(labels))
    margin = z[rows, 1 - labels] - z[rows, labels]
    loss = float(np.logaddexp(0.0, margin).mean())
    grad = softmax(z)
    grad[rows, labels] -= 1.0
    return loss, grad / len(labels)


def contrastive_batch(logits: np.ndarray, relevant: np.ndarray, margin: float = 1.0) -> tuple[float, np.ndarray]:
    """Mean contrastive loss on softmaxed logits; gradient w.r.t. ``logits``.

    ``relevant`` holds ground-truth relevance; the loss's ``Y`` is its complement.
    """
    p = softmax(logits)
    y = 1 - np.asarray(relevant, dtype=np.int64)
    diff = p - POSITIVE_TARGET
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    gap = margin - dist
    active = (y == 1) & (gap > 0.0) & (dist > 0.0)
    losses = np.where(y == 0, 0.5 * dist**2, 0.5 * np.maximum(gap, 0.0) ** 2)
    safe = np.where(dist > 0.0, dist, 1.0)
    grad_p = np.where((y == 0)[:, None], diff, 0.0)
    grad_p = np.where(active[:, None], -(gap / safe)[:, None] * diff, grad_p)
    # softmax Jacobian-vector product: p * (g - <g, p>)
    grad_z = p * (grad_p - np.einsum("ij,ij->i", grad_p, p)[:, None])
    n = len(y)
    return float(losses.mean()), grad_z / n
