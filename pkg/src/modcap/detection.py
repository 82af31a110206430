"""Stacked noisy-or multiple-instance object detection.

Two bag-level detectors are combined: a per-region sigmoid classifier pooled
with noisy-or, and a two-layer network on the mean-pooled region feature.
Their probabilities are merged by a second noisy-or, then re-weighted per
timestep by a rectified gate before being embedded as a word vector.
"""

from __future__ import annotations

from .tensor import Tensor, as_tensor, clip, exp, linear, log1p, matmul, relu, sigmoid, tsum

# p is clamped below 1 so log1p(-p) stays finite
NOISY_OR_CLAMP = 1.0 - 1e-12


def region_object_probs(V, weight, bias) -> Tensor:
    """Per-region object probabilities, shape ``[..., D_r, D_obj]``."""
    return sigmoid(linear(V, weight, bias))


def noisy_or(probs, axis: int = -2) -> Tensor:
    """``1 - prod(1 - p)`` along ``axis``, evaluated in log space."""
    p = clip(as_tensor(probs), None, NOISY_OR_CLAMP)
    return 1.0 - exp(tsum(log1p(-p), axis=axis))


def attention_mil(v_mean, w1, b1, w2, b2) -> Tensor:
    hidden = relu(linear(v_mean, w1, b1))
    return sigmoid(linear(hidden, w2, b2))


def stack_noisy_or(p_or, p_att) -> Tensor:
    return 1.0 - (1.0 - as_tensor(p_or)) * (1.0 - as_tensor(p_att))


def gate_detections(h_s_prev, v_tilde, p_image, w_h, w_v) -> Tensor:
    """Time-dependent object relevance; non-negative but not normalised."""
    gate = relu(linear(h_s_prev, w_h) + linear(v_tilde, w_v))
    return gate * p_image


def object_word_vector(p_t, e_obj) -> Tensor:
    """Embed relevance scores; ``e_obj`` is ``[D_e, D_obj]``."""
    return matmul(as_tensor(p_t), as_tensor(e_obj).T)
