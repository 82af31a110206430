"""Attribute modules and the adaptive module attention that composes them."""

from __future__ import annotations

from typing import Mapping, Sequence

from .tensor import ContractError, Tensor, as_tensor, concat, linear, matmul, relu, reshape, softmax, stack, tanh
from .vocab import MODULE_NAMES


def module_predict(params: Mapping[str, Tensor], module: str, v_tilde, h_s_prev, w_obj) -> Tensor:
    """Distribution over one module's labels from the attended region, the
    previous semantic state and the object word vector."""
    if module not in MODULE_NAMES:
        raise ContractError(f"unknown attribute module {module!r}; expected one of {MODULE_NAMES}")
    prefix = f"mod.{module}."
    x = concat([v_tilde, h_s_prev, w_obj], axis=-1)
    hidden = relu(linear(x, params[prefix + "W1"], params[prefix + "b1"]))
    return softmax(linear(hidden, params[prefix + "W2"], params[prefix + "b2"]), axis=-1)


def module_word_vector(e_module, p_module) -> Tensor:
    """Expected label embedding; ``e_module`` is ``[D_e, n_labels]``."""
    return matmul(as_tensor(p_module), as_tensor(e_module).T)


def module_attention(
    module_vectors: Sequence[Tensor],
    w_init,
    h_s_prev,
    w_z,
    w_m,
    w_g,
    w_i,
) -> tuple[Tensor, Tensor, Tensor]:
    """Attend over the k module word vectors plus the initial estimate.

    Returns ``(alpha_hat, beta, c_hat)`` with ``alpha_hat`` of shape
    ``[B, k+1]``, ``beta`` (the weight of the initial-estimate slot) of shape
    ``[B, 1]`` and the composed vector ``c_hat`` of shape ``[B, D_e]``.
    The module mixture uses a softmax over the k module scores alone, and is
    then blended with ``w_init`` by ``beta``.
    """
    w_init, h_s_prev = as_tensor(w_init), as_tensor(h_s_prev)
    k = len(module_vectors)
    batch = h_s_prev.shape[0]
    stacked = stack(module_vectors, axis=1)  # [B, k, D_e]
    query = linear(h_s_prev, w_g)
    att = query.shape[-1]
    z = linear(tanh(linear(stacked, w_m) + reshape(query, (batch, 1, att))), w_z)
    z = reshape(z, (batch, k))
    z_init = linear(tanh(linear(w_init, w_i) + query), w_z)  # [B, 1]
    alpha_hat = softmax(concat([z, z_init], axis=-1), axis=-1)
    beta = alpha_hat[:, k : k + 1]
    alpha = softmax(z, axis=-1)
    c = reshape(matmul(reshape(alpha, (batch, 1, k)), stacked), (batch, -1))
    c_hat = beta * w_init + (1.0 - beta) * c
    return alpha_hat, beta, c_hat
