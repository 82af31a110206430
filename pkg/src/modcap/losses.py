"""Sentence- and word-level training losses.

Every loss sums over timesteps (and over labels where applicable) and
averages over the batch, so a batch of one gives the per-caption value.
Probabilities are clamped to ``[EPS, 1 - EPS]`` before taking logs.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .tensor import ContractError, Tensor, as_tensor, clip, log, stack, tsum

EPS = 1e-12


def _clamped_log(p: Tensor) -> Tensor:
    return log(clip(p, EPS, 1.0 - EPS))


def _clamped_log_upper(p: Tensor) -> Tensor:
    # log(p) where p may legitimately reach 1 (categorical likelihood)
    return log(clip(p, EPS, None))


def _stack_time(values) -> Tensor:
    if isinstance(values, Tensor):
        return values
    return stack(list(values), axis=1)


def _binary_ce(p: Tensor, y: np.ndarray) -> Tensor:
    """Elementwise ``-y log p - (1 - y) log(1 - p)``."""
    return -(y * _clamped_log(p) + (1.0 - y) * _clamped_log(1.0 - p))


def sentence_loss(step_distributions, targets, mask=None) -> Tensor:
    """Negative log-likelihood of the target tokens.

    ``step_distributions`` is a list of T ``[B, D_voc]`` tensors or a stacked
    ``[B, T, D_voc]`` tensor; ``targets`` is ``[B, T]``.
    """
    probs = _stack_time(step_distributions)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.ndim == 1:
        targets = targets[None, :]
    B, T = probs.shape[0], probs.shape[1]
    if targets.shape != (B, T):
        raise ContractError(f"{targets.shape[-1]} targets for {T} step distributions")
    mask = np.ones((B, T)) if mask is None else np.asarray(mask, dtype=np.float64)
    picked = probs[np.arange(B)[:, None], np.arange(T)[None, :], targets]
    return -tsum(_clamped_log_upper(picked) * mask) * (1.0 / B)


def mil_loss(probs, targets) -> Tensor:
    """Sigmoid cross-entropy of bag-level object probabilities."""
    probs = as_tensor(probs)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape:
        raise ContractError(f"probabilities {probs.shape} vs targets {targets.shape}")
    batch = probs.shape[0] if probs.ndim > 1 else 1
    return tsum(_binary_ce(probs, targets)) * (1.0 / batch)


def attribute_module_loss(module_dists, masks, labels) -> Tensor:
    """Masked binary cross-entropy of one module against one-hot labels.

    ``module_dists`` is T ``[B, L]`` tensors (or ``[B, T, L]``), ``masks`` and
    ``labels`` are ``[B, T]``. Unmasked steps contribute exactly zero.
    """
    probs = _stack_time(module_dists)
    B, T, L = probs.shape
    masks = np.asarray(masks, dtype=bool).reshape(B, T)
    labels = np.asarray(labels, dtype=np.int64).reshape(B, T)
    active = labels[masks]
    if active.size and (active.min() < 0 or active.max() >= L):
        raise ContractError(f"module label outside 0..{L - 1}: {sorted(set(active.tolist()))}")
    if not masks.any():
        return tsum(probs * 0.0)
    onehot = np.zeros((B, T, L))
    bi, ti = np.nonzero(masks)
    onehot[bi, ti, labels[bi, ti]] = 1.0
    weights = masks[..., None].astype(np.float64)
    return tsum(_binary_ce(probs, onehot) * weights) * (1.0 / B)


def composition_loss(module_attention, active_module, any_attribute) -> Tensor:
    """Masked binary cross-entropy pushing attention onto the active slot."""
    alpha = _stack_time(module_attention)
    B, T, S = alpha.shape
    active = np.asarray(active_module, dtype=np.float64).reshape(B, T, S)
    weights = np.asarray(any_attribute, dtype=np.float64).reshape(B, T, 1)
    return tsum(_binary_ce(alpha, active) * weights) * (1.0 / B)


LOSS_TERMS = (
    "L_V",
    "L_S",
    "L_mil_att",
    "L_mil_or",
    "L_color",
    "L_count",
    "L_size",
    "L_spatial",
    "L_semantic",
    "L_c",
)


def total_loss(terms: Mapping[str, Tensor]) -> Tensor:
    """Unweighted sum of every term present."""
    values: Sequence[Tensor] = [terms[name] for name in LOSS_TERMS if name in terms]
    extra = set(terms) - set(LOSS_TERMS)
    if extra:
        raise ContractError(f"unknown loss terms {sorted(extra)}")
    total = values[0]
    for v in values[1:]:
        total = total + v
    return total
