"""Hyperparameter presets.

``paper`` reproduces the published sizes and schedule; ``desk`` is small
enough to train on one CPU core in minutes.
"""

from __future__ import annotations

PAPER = {
    "hidden_size": 512,
    "embed_size": 300,
    "batch_size": 128,
    "learning_rate": 5e-4,
    "final_learning_rate": 2.5e-4,
    "anneal_start_epoch": 20,
    "beta1": 0.8,
    "mil_joint_epochs": 5,
    "min_count": 5,
}

DESK = {
    "hidden_size": 48,
    "embed_size": 32,
    "batch_size": 16,
    "learning_rate": 2e-2,
    "final_learning_rate": 1e-2,
    "anneal_start_epoch": 20,
    "beta1": 0.8,
    "mil_joint_epochs": 5,
    "min_count": 1,
}

PAPER_SCENES = {"feature_dim": 2048, "n_regions": 36}
DESK_SCENES: dict = {}

PRESETS = {"paper": PAPER, "desk": DESK}
SCENE_PRESETS = {"paper": PAPER_SCENES, "desk": DESK_SCENES}
