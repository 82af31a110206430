"""scikit-learn style front end for training and captioning."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import checkpoint
from .decoding import DecodedCaption, greedy_decode
from .metrics import MetricReport, corpus_bleu, evaluate_captions
from .model import ModelConfig, params_from_arrays
from .scenes import Scene, SceneConfig
from .training import TrainConfig, save_model_metadata, train
from .vocab import SubcategoryLexicon, Vocabulary, build_vocabulary


def check_scenes(X, feature_dim: int | None = None) -> list[Scene]:
    """Validate a scene collection: non-empty, finite, one feature layout."""
    scenes = list(X)
    if not scenes:
        raise ValueError("expected at least one scene")
    for s in scenes:
        if not isinstance(s, Scene):
            raise TypeError(f"expected Scene objects, got {type(s).__name__}")
    shape = scenes[0].features.shape
    for s in scenes:
        if s.features.shape != shape:
            raise ValueError(f"scene {s.scene_id} has features {s.features.shape}, expected {shape}")
        if not np.isfinite(s.features).all():
            raise ValueError(f"scene {s.scene_id} has non-finite features")
    if feature_dim is not None and shape[1] != feature_dim:
        raise ValueError(f"model expects {feature_dim}-dimensional region features, got {shape[1]}")
    return scenes


def _vocabulary_tokens(lexicon: SubcategoryLexicon) -> list[str]:
    return lexicon.all_tokens() + [o + "s" for o in lexicon.object_set]


class CompositionalCaptioner(BaseEstimator):
    """Region-attention captioner with MIL object detection and attribute modules.

    ``fit`` takes a list of :class:`~modcap.scenes.Scene`; ``predict`` returns
    one caption string per scene. The ablation switches drop the attribute
    modules (``use_modules``), all object detection (``use_mil``) or only the
    attention-MIL branch (``use_amil``).
    """

    def __init__(
        self,
        hidden_size: int = 48,
        embed_size: int = 32,
        epochs: int = 30,
        batch_size: int = 16,
        learning_rate: float = 2e-2,
        final_learning_rate: float = 1e-2,
        anneal_start_epoch: int = 20,
        beta1: float = 0.8,
        mil_joint_epochs: int = 5,
        clip_norm: float = 5.0,
        max_iterations: int | None = None,
        use_modules: bool = True,
        use_mil: bool = True,
        use_amil: bool = True,
        min_count: int = 1,
        max_len: int = 20,
        random_state: int = 0,
    ):
        self.hidden_size = hidden_size
        self.embed_size = embed_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.final_learning_rate = final_learning_rate
        self.anneal_start_epoch = anneal_start_epoch
        self.beta1 = beta1
        self.mil_joint_epochs = mil_joint_epochs
        self.clip_norm = clip_norm
        self.max_iterations = max_iterations
        self.use_modules = use_modules
        self.use_mil = use_mil
        self.use_amil = use_amil
        self.min_count = min_count
        self.max_len = max_len
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate_initial=self.learning_rate,
            learning_rate_final=self.final_learning_rate,
            anneal_start_epoch=self.anneal_start_epoch,
            beta1=self.beta1,
            batch_size=self.batch_size,
            mil_joint_epochs=self.mil_joint_epochs,
            epochs=self.epochs,
            max_iterations=self.max_iterations,
            clip_norm=self.clip_norm,
            seed=self.random_state,
        )

    def fit(self, X, y=None, lexicon: SubcategoryLexicon | None = None, out_dir=None, resume: bool = False):
        scenes = check_scenes(X)
        lexicon = lexicon or SceneConfig().lexicon()
        corpus = [ref for s in scenes for ref in s.references]
        vocab = build_vocabulary(corpus, self.min_count, extra_tokens=_vocabulary_tokens(lexicon))
        model_cfg = ModelConfig(
            vocab_size=len(vocab),
            feature_dim=scenes[0].features.shape[1],
            n_objects=lexicon.n_objects,
            module_sizes=lexicon.module_sizes,
            hidden_size=self.hidden_size,
            embed_size=self.embed_size,
            use_modules=self.use_modules,
            use_mil=self.use_mil,
            use_amil=self.use_amil,
        )
        result = train(scenes, vocab, lexicon, model_cfg, self._train_config(), out_dir=out_dir, resume=resume)
        self.params_ = result.params
        self.vocab_ = vocab
        self.lexicon_ = lexicon
        self.model_config_ = model_cfg
        self.history_ = result.history
        self.n_features_in_ = model_cfg.feature_dim
        return self

    def decode(self, X) -> list[DecodedCaption]:
        check_is_fitted(self, ["params_", "vocab_"])
        scenes = check_scenes(X, self.model_config_.feature_dim)
        return greedy_decode(self.params_, self.model_config_, self.vocab_, scenes, max_len=self.max_len)

    def predict(self, X) -> list[str]:
        return [c.text for c in self.decode(X)]

    def evaluate(self, X, window: int = 3) -> MetricReport:
        scenes = check_scenes(X, self.model_config_.feature_dim if hasattr(self, "model_config_") else None)
        captions = [c.tokens for c in self.decode(scenes)]
        return evaluate_captions(captions, scenes, self.lexicon_, window)

    def score(self, X, y=None) -> float:
        """Corpus BLEU-4 of the greedy captions."""
        scenes = check_scenes(X)
        captions = [c.tokens for c in self.decode(scenes)]
        return corpus_bleu(captions, [s.references for s in scenes], 4)

    # -- persistence ---------------------------------------------------
    def save(self, directory) -> None:
        check_is_fitted(self, ["params_"])
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        checkpoint.save_checkpoint(directory / "checkpoint.bin", {k: p.data for k, p in self.params_.items()})
        save_model_metadata(
            directory / "model.json", self.model_config_, self.vocab_, self.lexicon_, estimator=self.get_params()
        )

    @classmethod
    def load(cls, directory) -> "CompositionalCaptioner":
        directory = Path(directory)
        ckpt = directory / "checkpoint.bin"
        if not ckpt.exists():
            raise FileNotFoundError(f"no checkpoint at {ckpt}")
        with open(directory / "model.json") as fh:
            meta = json.load(fh)
        est_params = meta.get("estimator", {})
        est = cls(**est_params)
        est.model_config_ = ModelConfig.from_dict(meta["model"])
        est.vocab_ = Vocabulary(meta["vocabulary"])
        est.lexicon_ = SubcategoryLexicon.from_dict(meta["lexicon"])
        est.params_ = params_from_arrays(checkpoint.load_checkpoint(ckpt))
        est.n_features_in_ = est.model_config_.feature_dim
        est.history_ = []
        if not est_params:
            m = est.model_config_
            est.set_params(
                hidden_size=m.hidden_size,
                embed_size=m.embed_size,
                use_modules=m.use_modules,
                use_mil=m.use_mil,
                use_amil=m.use_amil,
            )
        return est
