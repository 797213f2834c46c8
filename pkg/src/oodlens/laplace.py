"""Last-layer Bayesian classifier via a full Laplace approximation.

A multinomial-logistic head is fit to MAP under a Gaussian prior with
precision ``prior_precision``; the posterior is approximated as a Gaussian
whose covariance is the inverse of the exact regularized Hessian at the
MAP. Predictions marginalize over Monte Carlo draws from that Gaussian,
and the predictive entropy splits into

    H(mean_s p_s)  =  mean_s H(p_s)  +  mutual information,

computed on one shared set of draws so the identity holds exactly:
epistemic is stored as predictive minus aleatoric.

The negative log-likelihood is summed (not averaged) over rows, so
duplicating a dataset m times multiplies the data Hessian by exactly m and
the posterior covariance trace strictly contracts: the mechanism by which
epistemic uncertainty stops flagging anything once enough ID data arrives.

Parameters are flattened class-major: for each class c, D weights then the
bias, giving K*(D+1) entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky
from scipy.special import logsumexp, softmax, xlogy

from .errors import HessianNotPD, NonConvergence
from .metrics import auroc
from .tensor_io import DatasetBundle, SynthSpec, rng_from_seed, synth_dataset


def _augment(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


def _nll_grad(theta: np.ndarray, x_aug: np.ndarray, y: np.ndarray, k: int, lam: float):
    """Summed multinomial NLL with Gaussian prior; gradient over flat params."""
    d1 = x_aug.shape[1]
    w = theta.reshape(k, d1)
    z = x_aug @ w.T
    lse = logsumexp(z, axis=1)
    nll = float(np.sum(lse - z[np.arange(y.size), y])) + 0.5 * lam * float(theta @ theta)
    p = softmax(z, axis=1)
    resid = p.copy()
    resid[np.arange(y.size), y] -= 1.0
    grad = (resid.T @ x_aug).reshape(-1) + lam * theta
    return nll, grad, p


def _nll_hessian(p: np.ndarray, x_aug: np.ndarray, k: int) -> np.ndarray:
    """Exact Hessian of the summed NLL: blocks X' diag(p_c d_cc' - p_c p_c') X."""
    d1 = x_aug.shape[1]
    hess = np.empty((k * d1, k * d1))
    for c in range(k):
        for c2 in range(c, k):
            w = p[:, c] * ((1.0 if c == c2 else 0.0) - p[:, c2])
            block = (x_aug * w[:, None]).T @ x_aug
            hess[c * d1 : (c + 1) * d1, c2 * d1 : (c2 + 1) * d1] = block
            if c2 != c:
                hess[c2 * d1 : (c2 + 1) * d1, c * d1 : (c + 1) * d1] = block.T
    return hess


def fit_map(
    features: DatasetBundle,
    prior_precision: float = 1.0,
    n_classes: Optional[int] = None,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> np.ndarray:
    """MAP parameters of the last-layer classifier (flat vector).

    Newton iterations on the summed NLL plus (lam/2)|theta|^2, run to
    gradient norm <= tol. With no training rows the prior mode (zero) is
    returned directly.
    """
    if prior_precision <= 0:
        raise ValueError("prior_precision must be > 0")
    feats = features.features.data.astype(np.float64)
    y = features.labels if features.labels is not None else np.empty(0, dtype=np.int64)
    k = n_classes if n_classes is not None else int(y.max()) + 1 if y.size else 0
    if k < 2:
        raise ValueError("need n_classes >= 2 (explicitly, if the bundle is empty)")
    d1 = feats.shape[1] + 1
    theta = np.zeros(k * d1)
    if feats.shape[0] == 0:
        return theta

    x_aug = _augment(feats)
    for _ in range(max_iter):
        nll, grad, p = _nll_grad(theta, x_aug, y, k, prior_precision)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta
        hess = _nll_hessian(p, x_aug, k) + prior_precision * np.eye(theta.size)
        step = np.linalg.solve(hess, grad)
        # float-plateau slack: near the optimum the convex loss is flat to
        # rounding, but the Newton step still shrinks the gradient
        accept = nll + 1e-12 * (1.0 + abs(nll))
        scale = 1.0
        for _ in range(50):
            trial = theta - scale * step
            if _nll_grad(trial, x_aug, y, k, prior_precision)[0] <= accept:
                theta = trial
                break
            scale *= 0.5
        else:
            break
    gnorm = float(np.linalg.norm(_nll_grad(theta, x_aug, y, k, prior_precision)[1]))
    if gnorm > tol:
        raise NonConvergence(f"MAP stopped at gradient norm {gnorm:.3e}")
    return theta


def map_logits(theta: np.ndarray, x, n_classes: int) -> np.ndarray:
    """Logits of the MAP (point-estimate) head for a feature matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    w = theta.reshape(n_classes, x.shape[1] + 1)
    return _augment(x) @ w.T


@dataclass(frozen=True)
class LaplacePosterior:
    """Gaussian posterior over the flattened last-layer parameters."""

    map_params: np.ndarray
    covariance: np.ndarray
    prior_precision: float
    n_train: int
    n_classes: int
    dim: int

    def logits(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        w = params.reshape(self.n_classes, self.dim + 1)
        return _augment(x) @ w.T


def laplace_fit(
    map_params: np.ndarray, features: DatasetBundle, prior_precision: float = 1.0
) -> LaplacePosterior:
    """Posterior covariance = inverse of (NLL Hessian at MAP + lam I).

    The Hessian only involves the predicted class probabilities, so the
    bundle's labels are not needed here. SPD is verified by the Cholesky
    solve; failure reports the smallest eigenvalue.
    """
    feats = features.features.data.astype(np.float64)
    d1 = feats.shape[1] + 1
    if map_params.size % d1 != 0:
        raise ValueError("map vector length incompatible with feature width")
    k = map_params.size // d1

    precision = prior_precision * np.eye(map_params.size)
    if feats.shape[0] > 0:
        x_aug = _augment(feats)
        z = x_aug @ map_params.reshape(k, d1).T
        precision = precision + _nll_hessian(softmax(z, axis=1), x_aug, k)
    try:
        factor = cho_factor(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(precision)[0])
        raise HessianNotPD(f"smallest eigenvalue {smallest:.3e}") from exc
    cov = cho_solve(factor, np.eye(map_params.size))
    cov = 0.5 * (cov + cov.T)
    return LaplacePosterior(
        map_params=map_params.copy(),
        covariance=cov,
        prior_precision=prior_precision,
        n_train=feats.shape[0],
        n_classes=k,
        dim=feats.shape[1],
    )


@dataclass(frozen=True)
class UncertaintyDecomposition:
    """Per-row entropy split over one shared set of posterior draws.

    predictive = aleatoric + epistemic holds exactly by construction;
    epistemic can dip below zero only through MC noise, and anything under
    -3 standard errors deserves a hard look.
    """

    predictive: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray
    mc_samples: int
    mc_std_err: np.ndarray


def _entropy(p: np.ndarray) -> np.ndarray:
    return -np.sum(xlogy(p, p), axis=-1)


def predictive(
    posterior: LaplacePosterior, x, mc_samples: int = 1000, seed: int = 0
) -> tuple[np.ndarray, UncertaintyDecomposition]:
    """Monte Carlo posterior predictive and its uncertainty split."""
    if mc_samples < 100:
        raise ValueError(f"mc_samples must be >= 100, got {mc_samples}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    gen = rng_from_seed(seed)
    chol = cholesky(posterior.covariance, lower=True)
    draws = posterior.map_params + gen.standard_normal(
        (mc_samples, posterior.map_params.size)
    ) @ chol.T

    x_aug = _augment(x)
    w = draws.reshape(mc_samples, posterior.n_classes, posterior.dim + 1)
    logits = np.einsum("nd,skd->snk", x_aug, w)
    p = softmax(logits, axis=-1)           # S x N x K

    p_bar = p.mean(axis=0)
    h_pred = _entropy(p_bar)
    per_draw = _entropy(p)                 # S x N
    h_alea = per_draw.mean(axis=0)
    decomposition = UncertaintyDecomposition(
        predictive=h_pred,
        aleatoric=h_alea,
        epistemic=h_pred - h_alea,
        mc_samples=mc_samples,
        mc_std_err=per_draw.std(axis=0, ddof=1) / math.sqrt(mc_samples),
    )
    return p_bar, decomposition


@dataclass(frozen=True)
class ContractionRow:
    n_train: int
    mean_epistemic_ood: float
    auroc_epistemic: float

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "mean_epistemic_ood": self.mean_epistemic_ood,
            "auroc_epistemic": self.auroc_epistemic,
        }


def contraction_experiment(
    spec: SynthSpec,
    n_grid,
    prior_precision: float = 1.0,
    mc_samples: int = 2000,
    seed: int = 0,
    n_probe_per_class: int = 64,
) -> list[ContractionRow]:
    """Refit on growing ID subsets; watch epistemic uncertainty deflate.

    Probe sets (one ID, one OOD) are drawn once and held fixed. For each n
    the first n rows of a seeded shuffle of the training pool are used, the
    posterior is refit, and epistemic mutual information is evaluated as an
    OOD score (negated for the toolkit's higher-is-ID orientation).
    """
    n_grid = sorted(int(n) for n in n_grid)
    k = spec.n_classes
    pool_spec = replace(
        spec, n_per_class=max(2, -(-max(n_grid) // k)), seed=spec.seed
    )
    pool, _, _ = synth_dataset(pool_spec)
    probe_spec = replace(spec, n_per_class=n_probe_per_class, seed=spec.seed + 1)
    _, probe_id, probe_ood = synth_dataset(probe_spec)

    gen = rng_from_seed(seed)
    order = gen.permutation(pool.n_rows)
    rows = []
    for n in n_grid:
        idx = order[:n]
        from .tensor_io import TensorF32
        subset = DatasetBundle(
            TensorF32(pool.features.data[idx]),
            labels=pool.labels[idx],
            split_tag="train",
        )
        theta = fit_map(subset, prior_precision, n_classes=k)
        post = laplace_fit(theta, subset, prior_precision)
        _, dec_id = predictive(post, probe_id.features.data, mc_samples, seed=seed + 1)
        _, dec_ood = predictive(post, probe_ood.features.data, mc_samples, seed=seed + 2)
        rows.append(
            ContractionRow(
                n_train=n,
                mean_epistemic_ood=float(dec_ood.epistemic.mean()),
                auroc_epistemic=auroc(-dec_id.epistemic, -dec_ood.epistemic),
            )
        )
    return rows


def msp_grid_2d(
    posterior: LaplacePosterior, features, grid_size: int = 40, pad: float = 1.0
) -> list[dict]:
    """Plot-ready MSP surface over a 2-D principal plane of logit space.

    Logits of the given features are PCA-projected to two coordinates; grid
    points in that plane are mapped back through the basis and scored with
    the MAP model's MSP.
    """
    x = np.asarray(features, dtype=np.float64)
    logits = posterior.logits(posterior.map_params, x)
    center = logits.mean(axis=0)
    centered = logits - center
    cov = centered.T @ centered / max(logits.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    basis = eigvecs[:, np.argsort(eigvals)[::-1][:2]]
    coords = centered @ basis

    lo, hi = coords.min(axis=0) - pad, coords.max(axis=0) + pad
    us = np.linspace(lo[0], hi[0], grid_size)
    vs = np.linspace(lo[1], hi[1], grid_size)
    out = []
    for u in us:
        recon = center + np.outer(np.full(grid_size, u), basis[:, 0])
        recon = recon + vs[:, None] * basis[:, 1][None, :]
        p = softmax(recon, axis=1).max(axis=1)
        out.extend(
            {"u": float(u), "v": float(v), "msp": float(m)} for v, m in zip(vs, p)
        )
    return out
