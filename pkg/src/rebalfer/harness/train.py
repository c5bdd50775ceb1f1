"""Training and evaluation loops for the re-balanced objective."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..attention import AttentionMaps, consistency_loss, rebalance_attention
from ..balance import BalanceWeights, compute_balance_weights
from ..imbalance import DataError, ImageSet
from ..losses import dual_view_ce, dual_view_smooth_ce, make_smooth_labels, total_loss
from ..model import Classifier, ModelConfig, build_model, forward_dual
from .config import TrainConfig
from .metrics import MetricsReport
from .transforms import apply_transform, sample_params

log = logging.getLogger(__name__)


class NumericalDivergence(RuntimeError):
    pass


@dataclass
class Normalization:
    mean: list[float]
    std: list[float]

    @classmethod
    def fit(cls, images: np.ndarray) -> "Normalization":
        x = images.astype(np.float64) / 255.0
        mean = x.mean(axis=(0, 2, 3))
        std = x.std(axis=(0, 2, 3))
        return cls(mean.tolist(), np.maximum(std, 1e-6).tolist())

    def apply(self, images: np.ndarray, dtype=torch.float32) -> torch.Tensor:
        x = torch.as_tensor(images, dtype=torch.float64) / 255.0
        m = torch.tensor(self.mean, dtype=torch.float64).view(1, -1, 1, 1)
        s = torch.tensor(self.std, dtype=torch.float64).view(1, -1, 1, 1)
        return ((x - m) / s).to(dtype)


@dataclass
class TrainedModel:
    model: Classifier
    config: TrainConfig
    class_names: list[str]
    normalization: Normalization
    weights: BalanceWeights
    seed: int
    train_counts: list[int] = field(default_factory=list)


@dataclass
class TrainResult:
    trained: TrainedModel
    reports: list[MetricsReport]
    loss_trace: list[dict] = field(default_factory=list)

    @property
    def final(self) -> MetricsReport | None:
        return self.reports[-1] if self.reports else None

    @property
    def best(self) -> MetricsReport | None:
        return max(self.reports, key=lambda r: (r.mean_accuracy, -r.epoch)) if self.reports else None


def model_config_for(config: TrainConfig, num_classes: int, in_channels: int) -> ModelConfig:
    return ModelConfig(num_classes=num_classes, in_channels=in_channels, input_size=config.input_size,
                       channels=config.channels, activation=config.activation, pool=config.pool)


def objective(model: Classifier, images: torch.Tensor, labels: torch.Tensor, config: TrainConfig,
              weights: torch.Tensor, transform_params: dict | None = None):
    """Full training loss on one batch. Returns (LossBreakdown, DualViewOutputs).

    Classification uses both views; with RSL the one-hot targets of both views
    are replaced by re-balanced smooth labels. With RAC the re-balanced CAMs of
    the original view are compared with the back-mapped CAMs of the second view.
    """
    tf = apply_transform(images, config.transform, transform_params)
    out = forward_dual(model.backbone, model.head, images, transform=lambda _: tf.images)
    L = out.logits.shape[1]
    if config.enable_rsl:
        targets = make_smooth_labels(labels, weights, config.alpha, L, dtype=out.logits.dtype)
        cls = dual_view_smooth_ce(out.logits, out.logits_flipped, targets)
    else:
        cls = dual_view_ce(out.logits, out.logits_flipped, labels)
    if config.enable_rac:
        m = rebalance_attention(out.maps, weights)
        m_t = rebalance_attention(out.maps_flipped, weights)
        back = AttentionMaps(tf.inverse_map(m_t.values, tuple(m.values.shape[-2:])), rebalanced=True)
        cons = consistency_loss(m, back, config.consistency_distance)
    else:
        cons = torch.zeros((), dtype=cls.dtype)
    return total_loss(cls, cons, config.effective_lam), out


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


@torch.no_grad()
def predict(model: Classifier, inputs: torch.Tensor, batch_size: int = 256) -> np.ndarray:
    model.eval()
    preds = [model(inputs[s:s + batch_size]).argmax(dim=1) for s in range(0, len(inputs), batch_size)]
    return torch.cat(preds).numpy()


def evaluate(trained: TrainedModel, data: ImageSet, epoch: int = -1) -> MetricsReport:
    """Single-view, un-augmented evaluation."""
    if data.manifest.num_classes != len(trained.class_names):
        raise DataError(f"checkpoint has {len(trained.class_names)} classes, "
                        f"manifest has {data.manifest.num_classes}")
    inputs = trained.normalization.apply(data.images)
    preds = predict(trained.model, inputs)
    return MetricsReport.from_predictions(data.manifest.labels, preds, len(trained.class_names),
                                          epoch=epoch, split=data.manifest.split,
                                          class_names=trained.class_names)


def train(config: TrainConfig, train_set: ImageSet, eval_set: ImageSet | None = None) -> TrainResult:
    """Train from scratch; evaluates on ``eval_set`` every ``config.eval_every`` epochs and after the last."""
    config.validate()
    manifest = train_set.manifest
    # n_l is the count of the training split actually used
    weights = compute_balance_weights(manifest.class_counts(), config.beta)
    norm = Normalization.fit(train_set.images)
    inputs = norm.apply(train_set.images)
    labels = torch.as_tensor(manifest.labels)
    b = weights.as_tensor()

    model = build_model(model_config_for(config, manifest.num_classes, train_set.images.shape[1]),
                        seed=config.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=config.lr_decay_per_epoch)
    data_rng = np.random.default_rng(config.seed)
    tf_gen = torch.Generator().manual_seed(config.seed)
    trained = TrainedModel(model, config, list(manifest.class_names), norm, weights, config.seed,
                           manifest.counts())

    reports, trace = [], []
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        sums = {"cls": 0.0, "cons": 0.0, "total": 0.0}
        steps = 0
        for idx in _batches(len(inputs), config.batch_size, data_rng):
            idx_t = torch.as_tensor(idx)
            params = sample_params(config.transform, len(idx), tf_gen)
            br, _ = objective(model, inputs[idx_t], labels[idx_t], config, b, params)
            if not math.isfinite(br.total.item()):
                raise NumericalDivergence(f"non-finite loss at epoch {epoch}: {br.total.item()}")
            opt.zero_grad(set_to_none=True)
            br.total.backward()
            opt.step()
            sums["cls"] += br.cls.item()
            sums["cons"] += br.cons.item()
            sums["total"] += br.total.item()
            steps += 1
        sched.step()
        trace.append({"epoch": epoch, **{k: v / steps for k, v in sums.items()}})
        log.debug("epoch %d %s", epoch, trace[-1])
        if eval_set is not None and (epoch % config.eval_every == 0 or epoch == config.max_epochs):
            reports.append(evaluate(trained, eval_set, epoch=epoch))
    return TrainResult(trained, reports, trace)


@torch.no_grad()
def mean_consistency(trained: TrainedModel, data: ImageSet, distance: str = "squared") -> float:
    """Held-out re-balanced flip-consistency loss (eval mode)."""
    model = trained.model
    model.eval()
    x = trained.normalization.apply(data.images)
    b = trained.weights.as_tensor()
    tf = apply_transform(x, "flip")
    m = rebalance_attention(model.head.cam(model.backbone(x)), b)
    m_t = rebalance_attention(model.head.cam(model.backbone(tf.images)), b)
    back = AttentionMaps(tf.inverse_map(m_t.values, None), rebalanced=True)
    return consistency_loss(m, back, distance).item()
