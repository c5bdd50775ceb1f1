"""Class activation maps, re-balancing and the transform-consistency loss.

All tensors are ``N x L x H x W`` (maps) or ``N x C x H x W`` (features); every
operation is plain torch so gradients reach both the backbone and the
classifier.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .balance import BalanceWeights

DISTANCES = ("abs", "squared")


@dataclass(frozen=True)
class AttentionMaps:
    values: torch.Tensor
    rebalanced: bool = False

    def __post_init__(self):
        if self.values.dim() != 4:
            raise ValueError(f"attention maps must be 4-D (N, L, H, W), got shape {tuple(self.values.shape)}")

    @property
    def shape(self):
        return tuple(self.values.shape)


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x)


def compute_cam(features, weights) -> AttentionMaps:
    """A(i,l,h,w) = sum_c W(l,c) F(i,c,h,w). No bias, no nonlinearity."""
    features = _as_tensor(features)
    weights = _as_tensor(weights)
    if features.dim() != 4:
        raise ValueError(f"features must be N x C x H x W, got shape {tuple(features.shape)}")
    if weights.dim() != 2:
        raise ValueError(f"classifier weights must be L x C, got shape {tuple(weights.shape)}")
    if features.shape[1] != weights.shape[1]:
        raise ValueError(
            f"feature channels ({features.shape[1]}) do not match classifier columns ({weights.shape[1]})")
    return AttentionMaps(torch.einsum("lc,nchw->nlhw", weights.to(features.dtype), features))


def rebalance_attention(maps: AttentionMaps, weights: BalanceWeights | torch.Tensor) -> AttentionMaps:
    """Scale each class plane by its normalized balance weight."""
    if maps.rebalanced:
        raise ValueError("attention maps are already re-balanced")
    values = maps.values
    if isinstance(weights, BalanceWeights):
        b = weights.as_tensor(dtype=values.dtype, device=values.device)
    else:
        b = _as_tensor(weights).to(dtype=values.dtype, device=values.device)
    if b.dim() != 1 or b.shape[0] != values.shape[1]:
        raise ValueError(f"{values.shape[1]} classes in the maps but {tuple(b.shape)} balance weights")
    return AttentionMaps(values * b.view(1, -1, 1, 1), rebalanced=True)


def flip_w(maps: AttentionMaps) -> AttentionMaps:
    """Reverse the width axis. Applying it twice returns the input exactly."""
    return AttentionMaps(torch.flip(maps.values, dims=(3,)), rebalanced=maps.rebalanced)


def elementwise_distance(diff: torch.Tensor, distance: str) -> torch.Tensor:
    if distance == "squared":
        return diff * diff
    if distance == "abs":
        return diff.abs()
    raise ValueError(f"unknown consistency distance {distance!r}; expected one of {DISTANCES}")


def consistency_loss(m: AttentionMaps, m_tilde_flipped: AttentionMaps, distance: str = "squared") -> torch.Tensor:
    """Mean per-element distance between M and the back-mapped transformed-view maps.

    ``m_tilde_flipped`` is the transformed view already mapped back onto the
    original frame (for flips: ``flip_w(M~)``). Gradients flow through both.
    """
    if not (m.rebalanced and m_tilde_flipped.rebalanced):
        raise ValueError("consistency loss expects re-balanced attention maps on both sides")
    if m.shape != m_tilde_flipped.shape:
        raise ValueError(f"shape mismatch: {m.shape} vs {m_tilde_flipped.shape}")
    return elementwise_distance(m.values - m_tilde_flipped.values, distance).mean()
