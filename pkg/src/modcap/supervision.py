"""Per-token supervision for the word-level losses, and batch collation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenes import Scene
from .vocab import MODULE_NAMES, SubcategoryLexicon, Vocabulary

K_MODULES = len(MODULE_NAMES)
INIT_SLOT = K_MODULES


@dataclass
class Supervision:
    module_masks: np.ndarray  # [T, k] bool
    module_labels: np.ndarray  # [T] int, -1 where no attribute word
    active_module: np.ndarray  # [T, k+1] one-hot
    any_attribute: np.ndarray  # [T] bool, OR over module_masks


def derive_supervision(tokens: Sequence[str], lexicon: SubcategoryLexicon) -> Supervision:
    """Mark, per target token, which attribute module (if any) should fire."""
    T = len(tokens)
    masks = np.zeros((T, K_MODULES), dtype=bool)
    labels = np.full(T, -1, dtype=np.int64)
    active = np.zeros((T, K_MODULES + 1))
    for t, tok in enumerate(tokens):
        slot = INIT_SLOT
        for m, name in enumerate(MODULE_NAMES):
            words = lexicon.module_labels(name)
            if tok in words:
                slot = m
                masks[t, m] = True
                labels[t] = words.index(tok)
                break
        active[t, slot] = 1.0
    return Supervision(masks, labels, active, masks.any(axis=1))


@dataclass
class CaptionExample:
    scene_id: str
    token_ids: np.ndarray  # caption ids followed by <eos>
    module_masks: np.ndarray
    module_labels: np.ndarray
    active_module: np.ndarray
    object_targets: np.ndarray  # [D_obj] multi-hot
    features: np.ndarray


def make_examples(
    scenes: Sequence[Scene],
    vocab: Vocabulary,
    lexicon: SubcategoryLexicon,
    all_references: bool = True,
) -> list[CaptionExample]:
    examples = []
    for scene in scenes:
        targets = np.zeros(lexicon.n_objects)
        for name in scene.gt_objects:
            if name in lexicon.object_set:
                targets[lexicon.object_set.index(name)] = 1.0
        refs = scene.references if all_references else scene.references[:1]
        for ref in refs:
            words = [w.lower() for w in ref]
            sup = derive_supervision(words + ["<eos>"], lexicon)
            ids = np.array(vocab.encode(words) + [vocab.eos_id], dtype=np.int64)
            examples.append(
                CaptionExample(
                    scene.scene_id,
                    ids,
                    sup.module_masks,
                    sup.module_labels,
                    sup.active_module,
                    targets,
                    scene.features,
                )
            )
    return examples


@dataclass
class Batch:
    features: np.ndarray  # [B, D_r, D_v]
    inputs: np.ndarray  # [B, T] <bos> + caption, padded
    targets: np.ndarray  # [B, T] caption + <eos>, padded
    mask: np.ndarray  # [B, T] 1.0 on real targets
    module_masks: np.ndarray  # [B, T, k]
    module_labels: np.ndarray  # [B, T]
    active_module: np.ndarray  # [B, T, k+1]
    object_targets: np.ndarray  # [B, D_obj]

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def collate(examples: Sequence[CaptionExample], vocab: Vocabulary) -> Batch:
    B = len(examples)
    T = max(len(e.token_ids) for e in examples)
    inputs = np.full((B, T), vocab.pad_id, dtype=np.int64)
    targets = np.full((B, T), vocab.pad_id, dtype=np.int64)
    mask = np.zeros((B, T))
    module_masks = np.zeros((B, T, K_MODULES), dtype=bool)
    module_labels = np.full((B, T), -1, dtype=np.int64)
    active = np.zeros((B, T, K_MODULES + 1))
    for b, e in enumerate(examples):
        n = len(e.token_ids)
        targets[b, :n] = e.token_ids
        inputs[b, 0] = vocab.bos_id
        inputs[b, 1:n] = e.token_ids[:-1]
        mask[b, :n] = 1.0
        module_masks[b, :n] = e.module_masks
        module_labels[b, :n] = e.module_labels
        active[b, :n] = e.active_module
    return Batch(
        features=np.stack([e.features for e in examples]),
        inputs=inputs,
        targets=targets,
        mask=mask,
        module_masks=module_masks,
        module_labels=module_labels,
        active_module=active,
        object_targets=np.stack([e.object_targets for e in examples]),
    )
