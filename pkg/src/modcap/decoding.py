"""Greedy decoding with a per-step trace of the model's internals."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ModelConfig, TrioState, encode_scene, forward_step
from .scenes import Scene
from .tensor import no_grad
from .vocab import MODULE_NAMES, Vocabulary


@dataclass
class StepTrace:
    token: str
    region_attention: np.ndarray
    module_attention: np.ndarray  # k module slots, then the initial estimate
    beta: float
    object_scores: np.ndarray
    module_dists: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class DecodedCaption:
    tokens: list[str]
    trace: list[StepTrace]
    scene_id: str | None = None

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def greedy_decode(
    params,
    cfg: ModelConfig,
    vocab: Vocabulary,
    scenes: Sequence[Scene] | np.ndarray,
    max_len: int = 20,
    batch_size: int = 256,
) -> list[DecodedCaption]:
    """Emit the argmax word at each step (lowest index wins ties) and feed it
    back, until ``<eos>`` or ``max_len`` words. ``<bos>`` and ``<pad>`` are
    never emitted."""
    if isinstance(scenes, np.ndarray):
        features = scenes if scenes.ndim == 3 else scenes[None]
        ids = [None] * len(features)
    else:
        features = np.stack([s.features for s in scenes]) if len(scenes) else np.zeros((0, 1, 1))
        ids = [s.scene_id for s in scenes]
    results: list[DecodedCaption] = []
    for start in range(0, len(features), batch_size):
        chunk = features[start : start + batch_size]
        results.extend(_decode_chunk(params, cfg, vocab, chunk, max_len))
    for caption, scene_id in zip(results, ids):
        caption.scene_id = scene_id
    return results


def _decode_chunk(params, cfg, vocab, features, max_len):
    batch = features.shape[0]
    banned = [vocab.bos_id, vocab.pad_id]
    captions = [DecodedCaption([], []) for _ in range(batch)]
    done = np.zeros(batch, dtype=bool)
    with no_grad():
        ctx = encode_scene(params, cfg, features, train_detector=False)
        state = TrioState.zeros(batch, cfg.hidden_size)
        prev = np.full(batch, vocab.bos_id, dtype=np.int64)
        E = params["E"]
        for _ in range(max_len):
            out, state = forward_step(params, cfg, ctx, E[prev], state)
            probs = out.word_dist.data.copy()
            probs[:, banned] = -1.0
            choice = probs.argmax(axis=-1)
            for b in np.flatnonzero(~done):
                if choice[b] == vocab.eos_id:
                    done[b] = True
                    continue
                token = vocab.lookup(int(choice[b]))
                captions[b].tokens.append(token)
                captions[b].trace.append(
                    StepTrace(
                        token=token,
                        region_attention=out.region_attention.data[b].copy(),
                        module_attention=out.module_attention.data[b].copy(),
                        beta=float(out.beta.data[b, 0]),
                        object_scores=out.object_scores.data[b].copy(),
                        module_dists={m: out.module_dists[m].data[b].copy() for m in out.module_dists},
                    )
                )
            if done.all():
                break
            prev = choice
    return captions


TRACE_COLUMNS = ("t", "token", *MODULE_NAMES, "init_estimate", "beta", "region_argmax")


def export_attention_trace(caption: DecodedCaption, path) -> None:
    """Write one CSV row per emitted token: module attention, beta and the
    most-attended region."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for t, step in enumerate(caption.trace):
            writer.writerow(
                [t, step.token]
                + [repr(float(v)) for v in step.module_attention]
                + [repr(step.beta), int(np.argmax(step.region_attention))]
            )


def read_attention_trace(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {"t": int(row["t"]), "token": row["token"], "region_argmax": int(row["region_argmax"])}
            for col in (*MODULE_NAMES, "init_estimate", "beta"):
                parsed[col] = float(row[col])
            rows.append(parsed)
    return rows
