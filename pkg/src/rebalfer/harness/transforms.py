"""Second-view transforms and the matching attention back-maps."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch
import torch.nn.functional as F

TRANSFORMS = ("flip", "scaling", "intensity")
SCALE_RANGE = (0.75, 1.25)
GAIN_RANGE = (0.7, 1.3)


@dataclass
class TransformResult:
    images: torch.Tensor
    # (maps of the transformed view, original H x W) -> maps in the original frame
    inverse_map: Callable[[torch.Tensor, tuple[int, int]], torch.Tensor]


def _resize(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def apply_transform(images: torch.Tensor, kind: str, params: dict | None = None) -> TransformResult:
    """Transform a batch and return the map that carries its attention back to the original frame.

    params: ``scale`` for "scaling" (default 1.0), ``gain`` for "intensity"
    (scalar or per-sample tensor, default 1.0). ``inverse_map`` takes maps of
    the transformed view plus the target spatial size via closure.
    """
    params = params or {}
    if kind == "flip":
        return TransformResult(torch.flip(images, dims=(3,)), lambda m, size=None: torch.flip(m, dims=(3,)))
    if kind == "scaling":
        s = float(params.get("scale", 1.0))
        H, W = images.shape[-2:]
        size = (round(H * s), round(W * s))
        if min(size) < 2:
            raise ValueError(f"scale {s} shrinks {H}x{W} images below 2 pixels")
        out = _resize(images, size)
        return TransformResult(out, lambda m, size: _resize(m, tuple(size)))
    if kind == "intensity":
        g = params.get("gain", 1.0)
        if isinstance(g, torch.Tensor) and g.dim() == 1:
            g = g.to(images.dtype).view(-1, *([1] * (images.dim() - 1)))
        out = images if (not isinstance(g, torch.Tensor) and g == 1.0) else images * g
        return TransformResult(out, lambda m, size=None: m)
    raise ValueError(f"unknown transform {kind!r}; expected one of {TRANSFORMS}")


def sample_params(kind: str, batch_size: int, generator: torch.Generator) -> dict:
    """Draw transform parameters; flips draw nothing so the RNG stream is unchanged."""
    if kind == "scaling":
        lo, hi = SCALE_RANGE
        return {"scale": lo + (hi - lo) * torch.rand((), generator=generator).item()}
    if kind == "intensity":
        lo, hi = GAIN_RANGE
        return {"gain": lo + (hi - lo) * torch.rand(batch_size, generator=generator, dtype=torch.float64)}
    return {}
