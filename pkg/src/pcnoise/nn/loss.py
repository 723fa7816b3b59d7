"""Categorical cross-entropy on raw logits, in the overflow-safe form."""

from __future__ import annotations

import numpy as np


def softmax_cross_entropy(logits: np.ndarray, true_class: int) -> tuple[float, np.ndarray]:
    """Loss -log p[true_class] with p = softmax(logits), and its gradient p - y.

    Uses the max-shifted log-sum-exp so arbitrarily large logits cannot
    overflow.  Returns (loss, dloss/dlogits).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError(f"logits must be a vector, got shape {logits.shape}")
    if not 0 <= true_class < logits.shape[0]:
        raise ValueError(f"true_class {true_class} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    p = np.exp(shifted - log_z)
    loss = float(log_z - shifted[true_class])
    grad = p.copy()
    grad[true_class] -= 1.0
    return loss, grad
