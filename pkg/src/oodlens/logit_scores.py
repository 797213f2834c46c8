"""Logit- and uncertainty-based scores: MSP, max logit, entropy, energy.

All four return per-row scalars oriented "higher = more in-distribution";
the entropy score is negated accordingly and ROC code never re-flips.
Softmax/logsumexp use max subtraction throughout, and inputs of any float
width are promoted to float64 before reduction.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import NonPositiveTemperature, SingleClass


def _as_logits(logits) -> np.ndarray:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("logits must be an N x K matrix")
    if not np.all(np.isfinite(arr)):
        raise ValueError("logits must be finite")
    return arr


def msp(logits) -> np.ndarray:
    """Maximum softmax probability; each score lies in (1/K, 1]."""
    arr = _as_logits(logits)
    if arr.shape[1] < 2:
        raise SingleClass("MSP needs at least two classes")
    return softmax(arr, axis=1).max(axis=1)


def max_logit(logits) -> np.ndarray:
    """Per-row maximum of the raw logits."""
    return _as_logits(logits).max(axis=1)


def entropy_score(logits) -> np.ndarray:
    """Negative predictive entropy in nats (uniform rows score -ln K)."""
    arr = _as_logits(logits)
    if arr.shape[1] < 2:
        raise SingleClass("entropy needs at least two classes")
    logp = arr - logsumexp(arr, axis=1, keepdims=True)
    return np.sum(np.exp(logp) * logp, axis=1)


def energy_score(logits, temperature: float = 1.0) -> np.ndarray:
    """Negative free energy T * logsumexp(logits / T); >= max_logit at T=1."""
    if temperature <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    arr = _as_logits(logits)
    return temperature * logsumexp(arr / temperature, axis=1)
