"""Hierarchy-aware image-text alignment on toy dual encoders.

In-batch PCA of text embeddings (``hide``), a dual global/component
contrastive loss (``losses``), linear dual encoders (``encoders``), synthetic
hierarchical worlds (``synth``), monotonicity and retrieval metrics
(``metrics``), a deterministic trainer and a CLI.
"""

from ._kernels import BACKEND
from .errors import ConvergenceError, HimoError, TrainingError, ValidationError
from .hide import PcaModel, fit, reconstruct
from .losses import molo_backward, molo_forward, variant_loss
from .metrics import himo_pearson, himo_shallow, recall_at_k, segment, ssi

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConvergenceError", "HimoError", "TrainingError", "ValidationError",
    "PcaModel", "fit", "reconstruct", "molo_backward", "molo_forward", "variant_loss",
    "himo_pearson", "himo_shallow", "recall_at_k", "segment", "ssi",
]
