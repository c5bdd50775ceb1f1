"""Re-balanced attention consistency and re-balanced smooth labels for imbalanced classification."""
from .attention import AttentionMaps, compute_cam, consistency_loss, flip_w, rebalance_attention
from .balance import BalanceWeights, ClassCounts, compute_balance_weights, effective_number
from .imbalance import (DataError, DatasetManifest, ImageSet, ImbalanceSpec, SyntheticSpec,
                        generate_synthetic, ingest_manifest, subsample_exponential)
from .losses import dual_view_ce, dual_view_smooth_ce, make_smooth_labels, total_loss
from .model import ModelConfig, build_model, forward_dual

__version__ = "0.1.0"

__all__ = [
    "AttentionMaps", "BalanceWeights", "ClassCounts", "DataError", "DatasetManifest", "ImageSet",
    "ImbalanceSpec", "ModelConfig", "SyntheticSpec", "build_model", "compute_balance_weights",
    "compute_cam", "consistency_loss", "dual_view_ce", "dual_view_smooth_ce", "effective_number",
    "flip_w", "forward_dual", "generate_synthetic", "ingest_manifest", "make_smooth_labels",
    "rebalance_attention", "subsample_exponential", "total_loss",
]
