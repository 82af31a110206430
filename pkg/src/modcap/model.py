"""The three-LSTM captioner and its per-timestep wiring.

Shapes are batch-first: region features are ``[B, D_r, D_v]`` (one row per
region) and every per-step vector is ``[B, dim]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import attributes, detection
from .tensor import (
    DimensionError,
    Tensor,
    concat,
    linear,
    matmul,
    no_grad,
    reshape,
    sigmoid,
    softmax,
    tanh,
)
from .vocab import MODULE_NAMES

INIT_RANGE = 0.08


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    feature_dim: int
    n_objects: int
    module_sizes: tuple[int, ...]
    hidden_size: int = 64
    embed_size: int = 32
    use_modules: bool = True
    use_mil: bool = True
    use_amil: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["module_sizes"] = list(self.module_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["module_sizes"] = tuple(d["module_sizes"])
        return cls(**d)


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    H, D_e, D_v, V, O = cfg.hidden_size, cfg.embed_size, cfg.feature_dim, cfg.vocab_size, cfg.n_objects
    shapes: dict[str, tuple[int, ...]] = {
        "E": (V, D_e),
        "lstm_a.W": (H + D_v + D_e + H, 4 * H),
        "lstm_a.b": (4 * H,),
        "att.W_v": (D_v, H),
        "att.W_o": (H, H),
        "att.W_b": (H, 1),
        "lstm_v.W": (D_v + H + H, 4 * H),
        "lstm_v.b": (4 * H,),
        "init.W": (H, V),
        "init.b": (V,),
        "lstm_s.W": (H + D_e + D_e + H, 4 * H),
        "lstm_s.b": (4 * H,),
        "out.W": (H, V),
        "out.b": (V,),
    }
    if cfg.use_mil:
        shapes.update(
            {
                "det.W_region": (D_v, O),
                "det.b_region": (O,),
                "det.W_h": (H, O),
                "det.W_v": (D_v, O),
                "det.E_obj": (D_e, O),
            }
        )
        if cfg.use_amil:
            shapes.update(
                {
                    "det.att_W1": (D_v, H),
                    "det.att_b1": (H,),
                    "det.att_W2": (H, O),
                    "det.att_b2": (O,),
                }
            )
    if cfg.use_modules:
        for name, n_labels in zip(MODULE_NAMES, cfg.module_sizes):
            shapes.update(
                {
                    f"mod.{name}.W1": (D_v + H + D_e, H),
                    f"mod.{name}.b1": (H,),
                    f"mod.{name}.W2": (H, n_labels),
                    f"mod.{name}.b2": (n_labels,),
                    f"mod.{name}.E": (D_e, n_labels),
                }
            )
        shapes.update(
            {
                "modatt.W_z": (H, 1),
                "modatt.W_m": (D_e, H),
                "modatt.W_g": (H, H),
                "modatt.W_i": (D_e, H),
            }
        )
    return shapes


# parameters of the two MIL classifiers, frozen after the joint phase
DETECTOR_CLASSIFIER_PARAMS = ("det.W_region", "det.b_region", "det.att_W1", "det.att_b1", "det.att_W2", "det.att_b2")


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Uniform(-0.08, 0.08) everywhere, forget-gate biases set to 1."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in sorted(parameter_shapes(cfg).items()):
        values = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
        if name.startswith("lstm_") and name.endswith(".b"):
            H = shape[0] // 4
            values[H : 2 * H] = 1.0
        params[name] = Tensor(values, requires_grad=True, name=name)
    return params


def params_from_arrays(arrays: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True, name=k) for k, v in arrays.items()}


# -- recurrent trio ----------------------------------------------------
def lstm_cell_step(weight, bias, x, h, c) -> tuple[Tensor, Tensor]:
    """Gate order in ``weight`` columns: input, forget, output, candidate."""
    H = h.shape[-1]
    if weight.shape != (x.shape[-1] + H, 4 * H):
        raise DimensionError(
            f"LSTM weight {weight.shape} does not fit input {x.shape} and state {h.shape}"
        )
    z = linear(concat([x, h], axis=-1), weight, bias)
    gates = sigmoid(z[..., : 3 * H])
    i, f, o = gates[..., :H], gates[..., H : 2 * H], gates[..., 2 * H :]
    g = tanh(z[..., 3 * H :])
    c_next = f * c + i * g
    h_next = o * tanh(c_next)
    return h_next, c_next


@dataclass
class TrioState:
    h_a: Tensor
    c_a: Tensor
    h_v: Tensor
    c_v: Tensor
    h_s: Tensor
    c_s: Tensor

    @classmethod
    def zeros(cls, batch: int, hidden: int) -> "TrioState":
        return cls(*(Tensor(np.zeros((batch, hidden))) for _ in range(6)))


def attention_lstm_step(params, h, c, h_s_prev, v_mean, prev_embedding):
    x = concat([h_s_prev, v_mean, prev_embedding], axis=-1)
    return lstm_cell_step(params["lstm_a.W"], params["lstm_a.b"], x, h, c)


def region_attention(V, h_a, w_v, w_o, w_b, projected=None) -> tuple[Tensor, Tensor]:
    """Soft attention over regions queried by the attention-LSTM state.

    ``projected`` may carry a precomputed ``V @ w_v`` shared across steps.
    Returns ``(a_t, v_tilde)`` of shapes ``[B, D_r]`` and ``[B, D_v]``.
    """
    batch, n_regions, _ = V.shape
    if projected is None:
        projected = linear(V, w_v)
    query = linear(h_a, w_o)
    scores = linear(tanh(projected + reshape(query, (batch, 1, query.shape[-1]))), w_b)
    a = softmax(reshape(scores, (batch, n_regions)), axis=-1)
    v_tilde = reshape(matmul(reshape(a, (batch, 1, n_regions)), V), (batch, V.shape[-1]))
    return a, v_tilde


def visual_lstm_step(params, h, c, v_tilde, h_a):
    """Returns ``(h_v, c_v, y_init, w_init)``; ``w_init`` is the embedding
    expectation under the initial-estimate distribution."""
    h, c = lstm_cell_step(params["lstm_v.W"], params["lstm_v.b"], concat([v_tilde, h_a], axis=-1), h, c)
    y_init = softmax(linear(h, params["init.W"], params["init.b"]), axis=-1)
    w_init = matmul(y_init, params["E"])
    return h, c, y_init, w_init


def semantic_lstm_step(params, h, c, h_v, w_obj, c_hat):
    h, c = lstm_cell_step(params["lstm_s.W"], params["lstm_s.b"], concat([h_v, w_obj, c_hat], axis=-1), h, c)
    return h, c, softmax(linear(h, params["out.W"], params["out.b"]), axis=-1)


# -- whole step ----------------------------------------------------------
@dataclass
class SceneContext:
    V: Tensor
    v_mean: Tensor
    projected: Tensor
    p_or: Tensor | None = None
    p_att: Tensor | None = None
    p_image: Tensor | None = None


@dataclass
class StepOutputs:
    region_attention: Tensor
    attended: Tensor
    init_dist: Tensor
    init_vector: Tensor
    object_scores: Tensor
    object_vector: Tensor
    module_dists: dict[str, Tensor] = field(default_factory=dict)
    module_attention: Tensor | None = None
    beta: Tensor | None = None
    composed: Tensor | None = None
    word_dist: Tensor | None = None


def encode_scene(params, cfg: ModelConfig, features, train_detector: bool = True) -> SceneContext:
    """Per-sequence quantities: mean feature, attention projection, detections."""
    V = features if isinstance(features, Tensor) else Tensor(features)
    ctx = SceneContext(V=V, v_mean=V.mean(axis=1), projected=linear(V, params["att.W_v"]))
    if cfg.use_mil:

        def detect():
            ctx.p_or = detection.noisy_or(
                detection.region_object_probs(V, params["det.W_region"], params["det.b_region"]), axis=1
            )
            if cfg.use_amil:
                ctx.p_att = detection.attention_mil(
                    ctx.v_mean,
                    params["det.att_W1"],
                    params["det.att_b1"],
                    params["det.att_W2"],
                    params["det.att_b2"],
                )
                ctx.p_image = detection.stack_noisy_or(ctx.p_or, ctx.p_att)
            else:
                ctx.p_image = ctx.p_or

        if train_detector:
            detect()
        else:
            with no_grad():
                detect()
    return ctx


def forward_step(params, cfg: ModelConfig, ctx: SceneContext, prev_embedding, state: TrioState):
    """Attention LSTM, region attention, visual LSTM, object gating,
    attribute modules, module attention, semantic LSTM, in that order."""
    batch = state.h_s.shape[0]
    h_a, c_a = attention_lstm_step(params, state.h_a, state.c_a, state.h_s, ctx.v_mean, prev_embedding)
    a_t, v_tilde = region_attention(
        ctx.V, h_a, params["att.W_v"], params["att.W_o"], params["att.W_b"], projected=ctx.projected
    )
    h_v, c_v, y_init, w_init = visual_lstm_step(params, state.h_v, state.c_v, v_tilde, h_a)

    if cfg.use_mil:
        p_t = detection.gate_detections(state.h_s, v_tilde, ctx.p_image, params["det.W_h"], params["det.W_v"])
        w_obj = detection.object_word_vector(p_t, params["det.E_obj"])
    else:
        p_t = Tensor(np.zeros((batch, cfg.n_objects)))
        w_obj = Tensor(np.zeros((batch, cfg.embed_size)))

    out = StepOutputs(a_t, v_tilde, y_init, w_init, p_t, w_obj)
    if cfg.use_modules:
        vectors = []
        for name in MODULE_NAMES:
            dist = attributes.module_predict(params, name, v_tilde, state.h_s, w_obj)
            out.module_dists[name] = dist
            vectors.append(attributes.module_word_vector(params[f"mod.{name}.E"], dist))
        alpha_hat, beta, c_hat = attributes.module_attention(
            vectors,
            w_init,
            state.h_s,
            params["modatt.W_z"],
            params["modatt.W_m"],
            params["modatt.W_g"],
            params["modatt.W_i"],
        )
    else:
        k = len(MODULE_NAMES)
        alpha = np.zeros((batch, k + 1))
        alpha[:, k] = 1.0
        alpha_hat, beta, c_hat = Tensor(alpha), Tensor(np.ones((batch, 1))), w_init
    out.module_attention, out.beta, out.composed = alpha_hat, beta, c_hat

    h_s, c_s, p = semantic_lstm_step(params, state.h_s, state.c_s, h_v, w_obj, c_hat)
    out.word_dist = p
    return out, TrioState(h_a, c_a, h_v, c_v, h_s, c_s)


def forward_sequence(params, cfg: ModelConfig, features, inputs: np.ndarray, train_detector: bool = True):
    """Teacher-forced pass; ``inputs`` is ``[B, T]`` (``<bos>`` + caption)."""
    inputs = np.asarray(inputs)
    ctx = encode_scene(params, cfg, features, train_detector=train_detector)
    batch, steps = inputs.shape
    embedded = params["E"][inputs]  # [B, T, D_e]
    state = TrioState.zeros(batch, cfg.hidden_size)
    outputs = []
    for t in range(steps):
        out, state = forward_step(params, cfg, ctx, embedded[:, t], state)
        outputs.append(out)
    return ctx, outputs
