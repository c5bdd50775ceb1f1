"""Report JSON/CSV, SVG plots and attention dumps."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..attention import rebalance_attention
from ..formats import write_rbam
from ..imbalance import ImageSet
from .metrics import MetricsReport
from .train import TrainedModel, TrainResult


def report_document(result: TrainResult) -> dict:
    """{config, seed, epochs, final, best} for one training run."""
    reports = result.reports
    return {
        "config": result.trained.config.to_dict(),
        "seed": result.trained.seed,
        "epochs": [r.to_dict() for r in reports],
        "final": reports[-1].to_dict() if reports else None,
        "best": result.best.to_dict() if reports else None,
        "loss": result.loss_trace,
    }


def write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def emit_report(reports: Sequence[MetricsReport], path, labels: Sequence[str] | None = None) -> None:
    """Table-style CSV: one row per report, per-class accuracy then Overall and Mean, in percent."""
    if not reports:
        raise ValueError("no reports to write")
    names = reports[0].class_names
    if labels is None:
        labels = [f"epoch {r.epoch}" for r in reports]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", *names, "Overall", "Mean"])
            for label, r in zip(labels, reports):
                cells = ["" if a is None else f"{100 * a:.2f}" for a in r.per_class_accuracy]
                w.writerow([label, *cells, f"{100 * r.overall_accuracy:.2f}", f"{100 * r.mean_accuracy:.2f}"])
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_curve(xs, series: dict[str, Sequence[float]], xlabel: str, path, log_x: bool = False) -> None:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for name, ys in series.items():
        ax.plot(xs, [100 * y for y in ys], marker="o", label=name)
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("accuracy (%)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_plots(reports: Sequence[MetricsReport], out_dir) -> list[Path]:
    """Accuracy-vs-epoch curve for one run's report series."""
    if not reports:
        raise ValueError("no reports to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "accuracy_vs_epoch.svg"
    plot_curve([r.epoch for r in reports],
               {"mean": [r.mean_accuracy for r in reports], "overall": [r.overall_accuracy for r in reports]},
               "epoch", path)
    return [path]


def emit_sweep_plot(param: str, values: Sequence[float], reports: Sequence[MetricsReport], out_dir) -> Path:
    if not reports:
        raise ValueError("no reports to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"accuracy_vs_{param}.svg"
    plot_curve(list(values), {"mean": [r.mean_accuracy for r in reports],
                              "overall": [r.overall_accuracy for r in reports]},
               {"lambda": "consistency weight", "alpha": "smoothing"}.get(param, param), path, log_x=True)
    return path


@torch.no_grad()
def attention_maps(trained: TrainedModel, data: ImageSet, view: str = "original",
                   rebalanced: bool = False) -> np.ndarray:
    """N x L x H x W class activation maps in eval mode.

    ``view="flipped"`` runs the mirrored images and flips the maps back so they
    line up with the originals.
    """
    model = trained.model
    model.eval()
    x = trained.normalization.apply(data.images)
    if view == "flipped":
        x = torch.flip(x, dims=(3,))
    elif view != "original":
        raise ValueError(f"view must be 'original' or 'flipped', got {view!r}")
    maps = model.head.cam(model.backbone(x))
    if rebalanced:
        maps = rebalance_attention(maps, trained.weights)
    values = maps.values
    if view == "flipped":
        values = torch.flip(values, dims=(3,))
    return values.numpy()


def dump_attention(trained: TrainedModel, data: ImageSet, path, view: str = "original",
                   rebalanced: bool = False) -> np.ndarray:
    maps = attention_maps(trained, data, view=view, rebalanced=rebalanced)
    write_rbam(path, maps)
    return maps
