"""Independent brute-force oracles used to validate the fast paths.

These deliberately re-derive each quantity from its definition (pairwise
loops, threshold sweeps, finite differences) and share no code with the
library implementations they check.
"""

import numpy as np


def brute_force_auroc(id_scores, ood_scores) -> float:
    """O(N^2) pairwise comparison with half credit for ties."""
    id_s = np.asarray(id_scores, dtype=np.float64)
    ood_s = np.asarray(ood_scores, dtype=np.float64)
    gt = (id_s[:, None] > ood_s[None, :]).sum()
    eq = (id_s[:, None] == ood_s[None, :]).sum()
    return (2 * int(gt) + int(eq)) / 2.0 / (id_s.size * ood_s.size)


def brute_force_fpr_at_tpr(id_scores, ood_scores, target: float) -> float:
    """Sweep every candidate threshold; keep the largest one whose inclusive
    TPR reaches the target, then count OOD at or above it."""
    id_s = np.asarray(id_scores, dtype=np.float64)
    ood_s = np.asarray(ood_scores, dtype=np.float64)
    best_tau = None
    for tau in np.unique(np.concatenate([id_s, ood_s])):
        if (id_s >= tau).sum() / id_s.size >= target:
            if best_tau is None or tau > best_tau:
                best_tau = tau
    if best_tau is None:
        best_tau = float(id_s.min())
    return float((ood_s >= best_tau).sum() / ood_s.size)


def central_difference_grad(f, x0: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a
    time, in float64."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.empty_like(x0)
    for i in range(x0.size):
        up, dn = x0.copy(), x0.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (f(up) - f(dn)) / (2.0 * h)
    return grad
