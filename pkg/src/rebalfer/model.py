"""Reference backbone, GAP/FC head and the two-view forward pass."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import torch
import torch.nn as nn

from .attention import AttentionMaps, compute_cam

SUPPORTED_SIZES = (8, 32, 64)


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int = 7
    in_channels: int = 1
    input_size: int = 32
    channels: tuple[int, ...] = (16, 32, 64)
    activation: str = "silu"
    pool: str = "avg"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


_ACTIVATIONS: dict[str, Callable[[], nn.Module]] = {
    "silu": nn.SiLU,
    "relu": nn.ReLU,
    "tanh": nn.Tanh,
}


class ReferenceBackbone(nn.Module):
    """(3x3 conv -> batch norm -> activation -> 2x downsample) per entry of ``channels``.

    Conv layers carry no bias; the following batch norm would cancel it.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.input_size not in SUPPORTED_SIZES:
            raise ValueError(f"input size {config.input_size} unsupported; choose from {SUPPORTED_SIZES}")
        if config.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {config.activation!r}")
        if config.pool not in ("avg", "max"):
            raise ValueError(f"unknown pool {config.pool!r}")
        out = config.input_size // 2 ** len(config.channels)
        if out < 2:
            raise ValueError(f"{len(config.channels)} blocks shrink {config.input_size}px input below 2x2")
        layers = []
        c_in = config.in_channels
        for c_out in config.channels:
            layers += [
                nn.Conv2d(c_in, c_out, 3, padding=1, bias=False),
                nn.BatchNorm2d(c_out),
                _ACTIVATIONS[config.activation](),
                nn.AvgPool2d(2) if config.pool == "avg" else nn.MaxPool2d(2),
            ]
            c_in = c_out
        self.body = nn.Sequential(*layers)
        self.out_channels = c_in

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def gap(features: torch.Tensor) -> torch.Tensor:
    """Spatial mean per channel: N x C x H x W -> N x C."""
    return features.mean(dim=(2, 3))


class Head(nn.Module):
    """GAP followed by a linear layer. ``fc.weight`` also produces the CAMs."""

    def __init__(self, in_channels: int, num_classes: int):
        super().__init__()
        self.fc = nn.Linear(in_channels, num_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.fc(gap(features))

    def cam(self, features: torch.Tensor) -> AttentionMaps:
        return compute_cam(features, self.fc.weight)


class Classifier(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = ReferenceBackbone(config)
        self.head = Head(self.backbone.out_channels, config.num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x))


def build_model(config: ModelConfig, seed: int | None = None) -> Classifier:
    if seed is None:
        return Classifier(config)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return Classifier(config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def flip_images(images: torch.Tensor) -> torch.Tensor:
    return torch.flip(images, dims=(3,))


@dataclass
class DualViewOutputs:
    features: torch.Tensor
    features_flipped: torch.Tensor
    logits: torch.Tensor
    logits_flipped: torch.Tensor
    maps: AttentionMaps
    maps_flipped: AttentionMaps


def forward_dual(backbone: nn.Module, head: Head, images: torch.Tensor,
                 transform: Callable[[torch.Tensor], torch.Tensor] = flip_images) -> DualViewOutputs:
    """Run both views through shared parameters.

    Each view gets its own backbone call, so batch-norm statistics are
    computed per view in training mode. ``transform`` defaults to the
    horizontal flip; the "_flipped" fields hold whatever view it produces.
    """
    feats = backbone(images)
    feats_t = backbone(transform(images))
    return DualViewOutputs(
        features=feats,
        features_flipped=feats_t,
        logits=head(feats),
        logits_flipped=head(feats_t),
        maps=head.cam(feats),
        maps_flipped=head.cam(feats_t),
    )
