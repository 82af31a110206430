"""Training: loss assembly, learning-rate schedule, MIL phase, checkpoints."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint
from .losses import (
    LOSS_TERMS,
    attribute_module_loss,
    composition_loss,
    mil_loss,
    sentence_loss,
    total_loss,
)
from .model import DETECTOR_CLASSIFIER_PARAMS, ModelConfig, forward_sequence, init_params, params_from_arrays
from .optim import AdamState, adam_step, clip_grad_norm
from .scenes import Scene
from .supervision import Batch, collate, make_examples
from .tensor import Tensor
from .vocab import MODULE_NAMES, SubcategoryLexicon, Vocabulary

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate_initial: float = 5e-4
    learning_rate_final: float = 2.5e-4
    anneal_start_epoch: int = 20
    beta1: float = 0.8
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 128
    mil_joint_epochs: int = 5
    epochs: int = 30
    max_iterations: int | None = None
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.learning_rate_final <= self.learning_rate_initial:
            raise ValueError("need 0 < learning_rate_final <= learning_rate_initial")
        if self.epochs < 1 or self.batch_size < 1 or self.anneal_start_epoch < 1:
            raise ValueError("epochs, batch_size and anneal_start_epoch must be positive")
        if self.mil_joint_epochs < 0:
            raise ValueError("mil_joint_epochs must be >= 0")


def learning_rate(epoch: int, cfg: TrainConfig) -> float:
    """Rate for 1-based ``epoch``: constant before ``anneal_start_epoch``,
    then linear down to ``learning_rate_final`` at the last epoch."""
    if epoch < cfg.anneal_start_epoch:
        return cfg.learning_rate_initial
    span = cfg.epochs - cfg.anneal_start_epoch
    frac = 1.0 if span <= 0 else min(1.0, (epoch - cfg.anneal_start_epoch) / span)
    return cfg.learning_rate_initial + frac * (cfg.learning_rate_final - cfg.learning_rate_initial)


def compute_losses(params, cfg: ModelConfig, batch: Batch, include_mil: bool = True):
    """All loss terms for one batch; returns ``(terms, ctx, outputs)``."""
    ctx, outs = forward_sequence(params, cfg, batch.features, batch.inputs, train_detector=include_mil)
    terms: dict[str, Tensor] = {
        "L_V": sentence_loss([o.init_dist for o in outs], batch.targets, batch.mask),
        "L_S": sentence_loss([o.word_dist for o in outs], batch.targets, batch.mask),
    }
    if cfg.use_mil and include_mil:
        if cfg.use_amil:
            terms["L_mil_att"] = mil_loss(ctx.p_att, batch.object_targets)
        terms["L_mil_or"] = mil_loss(ctx.p_or, batch.object_targets)
    if cfg.use_modules:
        for m, name in enumerate(MODULE_NAMES):
            terms[f"L_{name}"] = attribute_module_loss(
                [o.module_dists[name] for o in outs],
                batch.module_masks[:, :, m],
                np.where(batch.module_masks[:, :, m], batch.module_labels, -1),
            )
        terms["L_c"] = composition_loss(
            [o.module_attention for o in outs],
            batch.active_module,
            batch.module_masks.any(axis=-1),
        )
    return terms, ctx, outs


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    history: list[dict] = field(default_factory=list)
    optimizer: AdamState | None = None
    epochs_completed: int = 0


def _write_state(out_dir: Path, params, optimizer: AdamState, epoch: int, meta: dict) -> None:
    checkpoint.save_checkpoint(out_dir / "checkpoint.bin", {k: p.data for k, p in params.items()})
    moments = {f"m:{k}": v for k, v in optimizer.first_moment.items()}
    moments.update({f"v:{k}": v for k, v in optimizer.second_moment.items()})
    checkpoint.save_checkpoint(out_dir / "optimizer.bin", moments)
    state = dict(meta, epoch=epoch, step_count=optimizer.step_count)
    with open(out_dir / "trainer.json", "w") as fh:
        json.dump(state, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_model_metadata(path: Path, model_cfg: ModelConfig, vocab: Vocabulary, lexicon: SubcategoryLexicon, **extra):
    meta = {
        "model": model_cfg.to_dict(),
        "vocabulary": vocab.tokens,
        "lexicon": lexicon.to_dict(),
    }
    meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def train(
    scenes: Sequence[Scene],
    vocab: Vocabulary,
    lexicon: SubcategoryLexicon,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: str | os.PathLike | None = None,
    resume: bool = False,
) -> TrainResult:
    """Train from scratch (or resume from ``out_dir``) and return the parameters.

    MIL losses are part of the objective for the first ``mil_joint_epochs``
    epochs; afterwards they are dropped and the two MIL classifiers are frozen.
    """
    if not scenes:
        raise ValueError("cannot train on an empty dataset")
    examples = make_examples(scenes, vocab, lexicon)
    out_path = Path(out_dir) if out_dir is not None else None
    params = init_params(model_cfg, seed=train_cfg.seed)
    optimizer = AdamState(
        learning_rate=train_cfg.learning_rate_initial,
        beta1=train_cfg.beta1,
        beta2=train_cfg.beta2,
        epsilon=train_cfg.epsilon,
    )
    history: list[dict] = []
    start_epoch = 1
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        if resume:
            params = params_from_arrays(checkpoint.load_checkpoint(out_path / "checkpoint.bin"))
            moments = checkpoint.load_checkpoint(out_path / "optimizer.bin")
            optimizer.first_moment = {k[2:]: v for k, v in moments.items() if k.startswith("m:")}
            optimizer.second_moment = {k[2:]: v for k, v in moments.items() if k.startswith("v:")}
            with open(out_path / "trainer.json") as fh:
                state = json.load(fh)
            optimizer.step_count = int(state["step_count"])
            start_epoch = int(state["epoch"]) + 1
            with open(out_path / "metrics.csv") as fh:
                history = [
                    {k: (float(v) if v != "" else math.nan) for k, v in row.items()}
                    for row in csv.DictReader(fh)
                ]
        save_model_metadata(out_path / "model.json", model_cfg, vocab, lexicon, train=asdict(train_cfg))

    columns = ["epoch", "iteration", *LOSS_TERMS, "total", "learning_rate"]
    iteration = optimizer.step_count
    result = TrainResult(params, history, optimizer, start_epoch - 1)
    for epoch in range(start_epoch, train_cfg.epochs + 1):
        include_mil = epoch <= train_cfg.mil_joint_epochs
        frozen = set() if include_mil else set(DETECTOR_CLASSIFIER_PARAMS)
        optimizer.learning_rate = learning_rate(epoch, train_cfg)
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(len(examples))
        sums = {name: 0.0 for name in LOSS_TERMS}
        sums["total"] = 0.0
        n_batches = 0
        for start in range(0, len(order), train_cfg.batch_size):
            if train_cfg.max_iterations is not None and iteration >= train_cfg.max_iterations:
                break
            batch = collate([examples[i] for i in order[start : start + train_cfg.batch_size]], vocab)
            for p in params.values():
                p.grad = None
            terms, _, _ = compute_losses(params, model_cfg, batch, include_mil=include_mil)
            for name, value in terms.items():
                if not np.isfinite(value.data).all():
                    raise TrainingDiverged(
                        f"loss term {name} is not finite at epoch {epoch}, iteration {iteration + 1}"
                    )
            loss = total_loss(terms)
            loss.backward()
            grads = {
                name: p.grad for name, p in params.items() if p.grad is not None and name not in frozen
            }
            clip_grad_norm(grads, train_cfg.clip_norm)
            adam_step(params, grads, optimizer)
            iteration += 1
            n_batches += 1
            for name, value in terms.items():
                sums[name] += value.item()
            sums["total"] += loss.item()
        if n_batches == 0:
            break
        row = {"epoch": epoch, "iteration": iteration}
        for name in [*LOSS_TERMS, "total"]:
            present = name == "total" or any(name == t for t in terms)
            row[name] = sums[name] / n_batches if present else math.nan
        row["learning_rate"] = optimizer.learning_rate
        history.append(row)
        result.epochs_completed = epoch
        logger.info("epoch %d it %d total %.4f L_S %.4f", epoch, iteration, row["total"], row["L_S"])
        if out_path is not None:
            _write_state(out_path, params, optimizer, epoch, {"seed": train_cfg.seed})
            write_metrics_log(out_path / "metrics.csv", history, columns)
    return result


def write_metrics_log(path, history: list[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in history:
            out = []
            for col in columns:
                v = row.get(col, math.nan)
                if col in ("epoch", "iteration"):
                    out.append(int(v))
                elif isinstance(v, float) and math.isnan(v):
                    out.append("")
                else:
                    out.append(repr(float(v)))
            writer.writerow(out)
