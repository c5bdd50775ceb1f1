"""Class-balanced weights from the effective number of samples."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch


@dataclass(frozen=True)
class ClassCounts:
    counts: tuple[int, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.counts) != len(self.class_names):
            raise ValueError(
                f"{len(self.counts)} counts but {len(self.class_names)} class names")
        if len(self.counts) < 2:
            raise ValueError("need at least two classes")
        for name, n in zip(self.class_names, self.counts):
            if int(n) != n or n < 1:
                raise ValueError(f"class {name!r} has {n} training samples; every class needs >= 1")

    @classmethod
    def from_list(cls, counts: Sequence[int], class_names: Sequence[str] | None = None) -> "ClassCounts":
        if class_names is None:
            class_names = [f"class_{i}" for i in range(len(counts))]
        return cls(tuple(int(n) for n in counts), tuple(str(c) for c in class_names))

    @property
    def num_classes(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class BalanceWeights:
    beta: float
    raw: np.ndarray
    normalized: np.ndarray

    def __post_init__(self):
        self.raw.setflags(write=False)
        self.normalized.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return len(self.normalized)

    def as_tensor(self, dtype=torch.float32, device=None) -> torch.Tensor:
        return torch.as_tensor(np.array(self.normalized), dtype=dtype, device=device)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not (0.0 <= beta < 1.0) or math.isnan(beta):
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    return beta


def _one_minus_beta_pow(n: int, beta: float) -> float:
    # 1 - beta**n without cancellation: -expm1(n * log(beta)), log(beta) = log1p(beta - 1)
    if beta == 0.0:
        return 1.0
    return -math.expm1(n * math.log1p(beta - 1.0))


def effective_number(n: int, beta: float) -> float:
    """Effective number of samples (1 - beta**n) / (1 - beta).

    Equal to the geometric series 1 + beta + ... + beta**(n-1); tends to
    1 / (1 - beta) as n grows.
    """
    beta = _check_beta(beta)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    n = int(n)
    if n == 1:
        return 1.0
    return _one_minus_beta_pow(n, beta) / (1.0 - beta)


def compute_balance_weights(counts: ClassCounts | Sequence[int], beta: float) -> BalanceWeights:
    """Per-class weights ``(1 - beta) / (1 - beta**n_l)``.

    ``raw`` holds the weights as defined; ``normalized`` rescales them to sum to
    the number of classes, and is what the attention and smooth-label code use.
    Single-class inputs are accepted here (only ``raw`` is meaningful then).
    """
    beta = _check_beta(beta)
    values = counts.counts if isinstance(counts, ClassCounts) else tuple(counts)
    if len(values) == 0:
        raise ValueError("empty count list")
    for n in values:
        if int(n) != n or n < 1:
            raise ValueError(f"every class needs at least one sample, got count {n}")
    raw = np.array([1.0 / effective_number(int(n), beta) for n in values], dtype=np.float64)
    normalized = raw * (len(raw) / raw.sum())
    return BalanceWeights(beta=beta, raw=raw, normalized=normalized)
