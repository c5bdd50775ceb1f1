"""Dual-view classification loss, re-balanced smooth labels and the total objective."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .balance import BalanceWeights


@dataclass(frozen=True)
class SmoothLabels:
    values: torch.Tensor
    alpha: float


@dataclass(frozen=True)
class LossBreakdown:
    cls: torch.Tensor
    cons: torch.Tensor
    total: torch.Tensor
    lam: float


def _check_labels(labels: torch.Tensor, num_classes: int) -> torch.Tensor:
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0].item()
        raise ValueError(f"label {bad} out of range for {num_classes} classes")
    return labels


def cross_entropy(logits: torch.Tensor, labels) -> torch.Tensor:
    """Single-view mean cross-entropy via log-softmax (log-sum-exp stabilized)."""
    if logits.dim() != 2:
        raise ValueError(f"logits must be N x L, got shape {tuple(logits.shape)}")
    labels = _check_labels(labels, logits.shape[1])
    if labels.shape[0] != logits.shape[0]:
        raise ValueError(f"{logits.shape[0]} logit rows but {labels.shape[0]} labels")
    logp = F.log_softmax(logits, dim=1)
    return -logp.gather(1, labels.view(-1, 1)).mean()


def dual_view_ce(logits: torch.Tensor, logits_flipped: torch.Tensor, labels) -> torch.Tensor:
    """Cross-entropy of the original and transformed views, summed (not averaged)."""
    if logits.shape != logits_flipped.shape:
        raise ValueError(f"view shapes differ: {tuple(logits.shape)} vs {tuple(logits_flipped.shape)}")
    return cross_entropy(logits, labels) + cross_entropy(logits_flipped, labels)


def make_smooth_labels(labels, weights: BalanceWeights | torch.Tensor, alpha: float,
                       num_classes: int, dtype=torch.float32) -> SmoothLabels:
    """y~(i,l) = (1 - alpha) * onehot(i,l) + alpha * B_l / L, B normalized to sum to L."""
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if isinstance(weights, BalanceWeights):
        b = weights.as_tensor(dtype=dtype)
    else:
        b = torch.as_tensor(weights, dtype=dtype)
    if b.shape != (num_classes,):
        raise ValueError(f"expected {num_classes} balance weights, got shape {tuple(b.shape)}")
    labels = _check_labels(labels, num_classes)
    onehot = F.one_hot(labels, num_classes).to(dtype)
    if alpha == 0.0:
        return SmoothLabels(onehot, alpha)
    return SmoothLabels((1.0 - alpha) * onehot + alpha * b.view(1, -1) / num_classes, alpha)


def smooth_ce(logits: torch.Tensor, targets: SmoothLabels | torch.Tensor) -> torch.Tensor:
    """Per-view cross-entropy against soft targets, averaged over the batch."""
    t = targets.values if isinstance(targets, SmoothLabels) else targets
    if logits.shape != t.shape:
        raise ValueError(f"logits {tuple(logits.shape)} and targets {tuple(t.shape)} differ in shape")
    logp = F.log_softmax(logits, dim=1)
    return -(t.to(logp.dtype) * logp).sum(dim=1).mean()


def dual_view_smooth_ce(logits: torch.Tensor, logits_flipped: torch.Tensor,
                        targets: SmoothLabels | torch.Tensor) -> torch.Tensor:
    return smooth_ce(logits, targets) + smooth_ce(logits_flipped, targets)


def total_loss(cls, cons, lam: float) -> LossBreakdown:
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"consistency weight must be >= 0, got {lam}")
    cls = torch.as_tensor(cls)
    cons = torch.as_tensor(cons, dtype=cls.dtype)
    return LossBreakdown(cls=cls, cons=cons, total=cls + lam * cons, lam=lam)
