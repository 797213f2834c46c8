"""Class-conditional Gaussian model and the feature-space score family.

The generative model behind Mahalanobis scoring: per-class means plus one
pooled within-class covariance, shrunk toward a scaled identity as
(1 - lam) * S + lam * (trace(S)/D) * I so the matrix stays SPD when D
approaches N. Relative-Mahalanobis and virtual-logit variants are
reconstructed behind their own types so alternative constructions can be
swapped without touching the base model.

Fits are deterministic: rows enter the reductions in ascending row-index
order (numpy sums over contiguous float64 arrays), so the same bundle and
shrinkage reproduce the model bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import softmax

from .errors import (
    DegenerateResidual,
    DimensionMismatch,
    EmptyClass,
    RankDeficient,
    SingularCovariance,
    ZeroVariance,
)
from .logit_scores import max_logit
from .tensor_io import DatasetBundle


def _spd_inverse(cov: np.ndarray, what: str) -> tuple[np.ndarray, float]:
    """Inverse and log-determinant via Cholesky; raises if not SPD."""
    try:
        factor = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"{what} covariance is not SPD: {exc}") from exc
    precision = cho_solve(factor, np.eye(cov.shape[0]))
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    return 0.5 * (precision + precision.T), logdet


@dataclass(frozen=True)
class GaussianClassModel:
    """Per-class means with a shared (pooled, shrunk) covariance.

    ``global_mean``/``global_cov`` describe the single Gaussian over all
    training rows regardless of class, used by the relative variant.
    """

    class_means: np.ndarray      # K x D
    pooled_cov: np.ndarray       # D x D
    precision: np.ndarray        # D x D
    shrinkage: float
    global_mean: np.ndarray      # D
    global_cov: np.ndarray       # D x D
    global_precision: np.ndarray
    logdet_cov: float
    logdet_global: float

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]

    def with_covariance(self, cov: np.ndarray) -> "GaussianClassModel":
        """Same means, different shared covariance (SPD required)."""
        precision, logdet = _spd_inverse(np.asarray(cov, dtype=np.float64), "swapped")
        return GaussianClassModel(
            self.class_means, np.asarray(cov, dtype=np.float64), precision,
            self.shrinkage, self.global_mean, self.global_cov,
            self.global_precision, logdet, self.logdet_global,
        )


def _shrink(cov: np.ndarray, lam: float) -> np.ndarray:
    d = cov.shape[0]
    tau = float(np.trace(cov)) / d
    return (1.0 - lam) * cov + lam * tau * np.eye(d)


def fit_gaussian_class_model(
    train: DatasetBundle, shrinkage: float = 1e-3
) -> GaussianClassModel:
    """Fit per-class means and the pooled within-class covariance.

    The pooled estimator is unbiased: class-centered outer products summed
    over all rows, divided by N - K. The global covariance (around the
    global mean, divisor N - 1) gets the same shrinkage recipe.
    """
    if train.labels is None:
        raise EmptyClass("training bundle must carry labels")
    if not (0.0 <= shrinkage <= 1.0):
        raise ValueError(f"shrinkage must be in [0, 1], got {shrinkage}")
    feats = train.features.data.astype(np.float64)
    labels = train.labels
    classes = np.unique(labels)
    n, d = feats.shape

    means = np.empty((classes.size, d))
    centered = np.empty_like(feats)
    for i, c in enumerate(classes):
        rows = feats[labels == c]
        if rows.shape[0] < 2:
            raise EmptyClass(f"class {c} has {rows.shape[0]} sample(s), need >= 2")
        means[i] = rows.mean(axis=0)
        centered[labels == c] = rows - means[i]

    pooled = _shrink(centered.T @ centered / (n - classes.size), shrinkage)
    precision, logdet = _spd_inverse(pooled, "pooled")

    global_mean = feats.mean(axis=0)
    g_centered = feats - global_mean
    global_cov = _shrink(g_centered.T @ g_centered / (n - 1), shrinkage)
    global_precision, logdet_global = _spd_inverse(global_cov, "global")

    return GaussianClassModel(
        class_means=means,
        pooled_cov=pooled,
        precision=precision,
        shrinkage=shrinkage,
        global_mean=global_mean,
        global_cov=global_cov,
        global_precision=global_precision,
        logdet_cov=logdet,
        logdet_global=logdet_global,
    )


def _check_dim(model_dim: int, x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != model_dim:
        raise DimensionMismatch(
            f"features have width {arr.shape[-1]}, model expects {model_dim}"
        )
    return arr


def class_quadratic_forms(model: GaussianClassModel, x) -> np.ndarray:
    """N x K matrix of (x - mu_c)' P (x - mu_c); shared precision P."""
    arr = _check_dim(model.dim, x)
    out = np.empty((arr.shape[0], model.n_classes))
    for c in range(model.n_classes):
        diff = arr - model.class_means[c]
        out[:, c] = np.einsum("nd,de,ne->n", diff, model.precision, diff)
    return out


def maha_score(model: GaussianClassModel, x) -> np.ndarray:
    """Negative squared distance to the nearest class mean, metric P.

    Always <= 0, with equality exactly at a class mean.
    """
    return -class_quadratic_forms(model, x).min(axis=1)


def rel_maha_score(model: GaussianClassModel, x) -> np.ndarray:
    """Class quadratic form minus the single-Gaussian background form.

    s(x) = -min_c [d_c(x) - d0(x)] with d0 taken under the global mean and
    covariance; background variation shared by every class cancels out.
    """
    arr = _check_dim(model.dim, x)
    d_class = class_quadratic_forms(model, arr)
    diff0 = arr - model.global_mean
    d0 = np.einsum("nd,de,ne->n", diff0, model.global_precision, diff0)
    return -(d_class.min(axis=1) - d0)


@dataclass(frozen=True)
class VimModel:
    """Principal subspace + residual scale for the virtual-logit score."""

    principal_basis: np.ndarray  # D x m, orthonormal columns
    residual_scale: float
    subspace_dim: int
    center: np.ndarray           # D

    @property
    def dim(self) -> int:
        return self.principal_basis.shape[0]


def _pca_basis(feats: np.ndarray, m: int) -> np.ndarray:
    """Top-m eigenvectors of the covariance of ``feats`` (already centered).

    Deterministic: eigh plus a sign convention (largest-magnitude entry of
    each eigenvector made positive).
    """
    cov = feats.T @ feats / max(feats.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    tol = max(eigvals[0], 0.0) * 1e-12
    if np.count_nonzero(eigvals > tol) < m:
        raise RankDeficient(
            f"only {int(np.count_nonzero(eigvals > tol))} positive-variance "
            f"directions, need {m}"
        )
    basis = eigvecs[:, :m]
    anchor = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[anchor, np.arange(m)])
    return basis * signs


def residual_norms(vim: VimModel, x) -> np.ndarray:
    arr = _check_dim(vim.dim, x)
    diff = arr - vim.center
    proj = diff @ vim.principal_basis
    return np.sqrt(
        np.maximum(np.sum(diff * diff, axis=1) - np.sum(proj * proj, axis=1), 0.0)
    )


def fit_vim(train: DatasetBundle, logits, m: int) -> VimModel:
    """Principal subspace of the training features plus the logit-matched
    residual scale: alpha = mean max logit / mean residual norm."""
    feats = train.features.data.astype(np.float64)
    if m >= feats.shape[1]:
        raise RankDeficient(f"subspace dim {m} must be < feature dim {feats.shape[1]}")
    center = feats.mean(axis=0)
    centered = feats - center
    basis = _pca_basis(centered, m)
    probe = VimModel(basis, 1.0, m, center)
    mean_residual = float(residual_norms(probe, feats).mean())
    # zero up to the float noise of projecting data that lies in the subspace
    scale = float(np.linalg.norm(centered, axis=1).mean())
    if mean_residual <= 1e-7 * max(scale, 1e-300):
        raise DegenerateResidual("training residuals are all zero")
    alpha = float(max_logit(logits).mean()) / mean_residual
    if alpha <= 0.0:
        raise DegenerateResidual(f"residual scale must be > 0, got {alpha}")
    return VimModel(basis, alpha, m, center)


def vim_score(vim: VimModel, features, logits) -> np.ndarray:
    """Negative softmax mass of the appended virtual logit; in (-1, 0)."""
    arr = _check_dim(vim.dim, features)
    logit_arr = np.asarray(logits, dtype=np.float64)
    if logit_arr.ndim == 1:
        logit_arr = logit_arr[None, :]
    if logit_arr.shape[0] != arr.shape[0]:
        raise DimensionMismatch("features and logits disagree on row count")
    virtual = vim.residual_scale * residual_norms(vim, arr)
    augmented = np.concatenate([logit_arr, virtual[:, None]], axis=1)
    return -softmax(augmented, axis=1)[:, -1]


@dataclass(frozen=True)
class HybridNormalizer:
    """Standardization constants fitted on an ID reference split."""

    maha_mean: float
    maha_std: float
    msp_mean: float
    msp_std: float


def fit_hybrid_normalizer(maha_ref, msp_ref) -> HybridNormalizer:
    maha_ref = np.asarray(maha_ref, dtype=np.float64)
    msp_ref = np.asarray(msp_ref, dtype=np.float64)
    stats = []
    for name, ref in (("maha", maha_ref), ("msp", msp_ref)):
        std = float(ref.std(ddof=0))
        if std <= 0.0:
            raise ZeroVariance(f"{name} scores are constant over the reference split")
        stats.extend([float(ref.mean()), std])
    return HybridNormalizer(*stats)


def hybrid_add(maha_scores, msp_scores, norm: HybridNormalizer) -> np.ndarray:
    """Sum of the two standardized constituent scores."""
    z_maha = (np.asarray(maha_scores, dtype=np.float64) - norm.maha_mean) / norm.maha_std
    z_msp = (np.asarray(msp_scores, dtype=np.float64) - norm.msp_mean) / norm.msp_std
    if z_maha.shape != z_msp.shape:
        raise DimensionMismatch("constituent score vectors disagree in length")
    return z_maha + z_msp
