"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps vanishing
    gradients from turning rounding noise into large relative errors."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(loss_fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. entries of ``tensor``.

    ``indices`` restricts the probe to a subset of flat positions; the rest
    of the returned array is NaN.
    """
    flat = tensor.data.reshape(-1)
    out = np.full(flat.shape, np.nan)
    positions = range(flat.size) if indices is None else indices
    for i in positions:
        original = flat[i]
        flat[i] = original + h
        up = loss_fn().item()
        flat[i] = original - h
        down = loss_fn().item()
        flat[i] = original
        out[i] = (up - down) / (2 * h)
    return out.reshape(tensor.shape)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> dict[str, float]:
    """Max relative error between backprop and central differences, per tensor.

    With ``max_entries`` set, only that many randomly chosen entries of each
    tensor are probed.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (np.zeros(p.shape) if p.grad is None else p.grad.copy()) for name, p in params.items()}
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in params.items():
        idx = None
        if max_entries is not None and p.size > max_entries:
            idx = rng.choice(p.size, size=max_entries, replace=False)
        num = numeric_grad(loss_fn, p, h=h, indices=idx)
        probe = ~np.isnan(num)
        errors[name] = float(relative_error(analytic[name][probe], num[probe], floor).max())
    return errors
