"""oodlens: scoring rules, metrics, and oracle diagnostics for OOD detection.

Works on pre-extracted feature/logit matrices (OODT binary files or CSV)
and synthetic datasets with plantable pathologies. Score orientation is
uniform across the toolkit: higher means more in-distribution.
"""

from .errors import OodlensError
from .metrics import DetectionReport, RocCurve, auroc, fpr_at_tpr, roc_curve
from .tensor_io import (
    DatasetBundle,
    SynthSpec,
    TensorF32,
    load_tensor,
    save_tensor,
    synth_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetBundle",
    "DetectionReport",
    "OodlensError",
    "RocCurve",
    "SynthSpec",
    "TensorF32",
    "auroc",
    "fpr_at_tpr",
    "load_tensor",
    "roc_curve",
    "save_tensor",
    "synth_dataset",
    "__version__",
]
