"""Saving and restoring trained models as RBCK1 checkpoints."""
from __future__ import annotations

import torch

from ..balance import compute_balance_weights
from ..formats import FormatError, load_checkpoint, save_checkpoint
from ..model import ModelConfig, build_model
from .config import TrainConfig
from .train import Normalization, TrainedModel


def save_trained(trained: TrainedModel, path) -> None:
    model = trained.model
    meta = {
        "config": trained.config.to_dict(),
        "model": model.config.to_dict(),
        "class_names": list(trained.class_names),
        "normalization": {"mean": trained.normalization.mean, "std": trained.normalization.std},
        "seed": {"seed": trained.seed, "torch": torch.__version__},
        "balance": {"beta": trained.weights.beta, "raw": trained.weights.raw.tolist()},
        "train_counts": trained.train_counts,
    }
    save_checkpoint(path, model.state_dict(), meta)


def load_trained(path) -> TrainedModel:
    state, meta = load_checkpoint(path)
    try:
        mcfg = ModelConfig.from_dict(meta["model"])
        config = TrainConfig.from_dict(meta["config"])
        model = build_model(mcfg)
        model.load_state_dict(state)
    except (KeyError, TypeError, RuntimeError) as exc:
        raise FormatError(f"{path}: checkpoint does not match the model layout ({exc})") from exc
    model.eval()
    counts = meta["train_counts"]
    return TrainedModel(
        model=model,
        config=config,
        class_names=list(meta["class_names"]),
        normalization=Normalization(**meta["normalization"]),
        weights=compute_balance_weights(counts, meta["balance"]["beta"]),
        seed=int(meta["seed"]["seed"]),
        train_counts=list(counts),
    )
