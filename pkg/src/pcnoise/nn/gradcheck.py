"""Finite-difference validation of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .loss import softmax_cross_entropy


def grad_check(
    loss_fn: Callable[[], float],
    params: list[np.ndarray],
    analytic_grads: list[np.ndarray],
    h: float = 1e-6,
    min_coords: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients against central differences.

    Samples at least ``min_coords`` parameter coordinates (all of them if
    fewer exist), perturbs each by +-h, and returns the maximum relative
    error |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    ``loss_fn`` must evaluate the loss at the *current* values of the
    arrays in ``params``, which are perturbed in place and restored.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    base = loss_fn()
    if not np.isfinite(base):
        raise FloatingPointError(f"loss is not finite: {base}")
    sizes = [p.size for p in params]
    total = sum(sizes)
    n_coords = min(min_coords, total)
    chosen = rng.choice(total, size=n_coords, replace=False)
    offsets = np.cumsum([0] + sizes)

    worst = 0.0
    for flat_idx in chosen:
        pi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = int(flat_idx - offsets[pi])
        arr = params[pi].reshape(-1)
        orig = arr[local]
        arr[local] = orig + h
        up = loss_fn()
        arr[local] = orig - h
        down = loss_fn()
        arr[local] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError("loss is not finite at a perturbed point")
        numeric = (up - down) / (2.0 * h)
        analytic = analytic_grads[pi].reshape(-1)[local]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def check_model(
    model,
    x: np.ndarray,
    true_class: int,
    mode: str = "eval",
    h: float = 1e-6,
    min_coords: int = 200,
    seed: int = 0,
    corrupt: bool = False,
) -> float:
    """Gradient-check a full classifier against the cross-entropy loss.

    Running statistics are snapshotted and restored so the check leaves the
    model untouched.  ``corrupt`` deliberately biases the analytic gradient
    and exists as a negative control for the checker itself.
    """
    buffers = [(arr, arr.copy()) for _, arr in model.buffers()]

    def loss_only() -> float:
        loss, _ = softmax_cross_entropy(model.forward(x, mode), true_class)
        return loss

    model.zero_grad()
    loss, dlogits = softmax_cross_entropy(model.forward(x, mode), true_class)
    model.backward(dlogits)
    analytic = [p.grad.copy() for p in model.parameters()]
    if corrupt:
        analytic = [g + 1.0 for g in analytic]
    values = [p.value for p in model.parameters()]
    try:
        return grad_check(
            loss_only, values, analytic, h=h, min_coords=min_coords,
            rng=np.random.default_rng(seed),
        )
    finally:
        for arr, saved in buffers:
            arr[...] = saved
