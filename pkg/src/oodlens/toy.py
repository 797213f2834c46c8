"""Analytic generative-model pathologies at desk scale.

Three demonstrations that better density models need not detect better:

* a 1-D Gaussian model N(mu, 1) scored against ID ~ N(0,1) and OOD ~
  N(2,1), where the likelihood-optimal mu = 0 is not the detection-optimal
  choice (AUROC keeps rising as mu heads to -inf, toward Phi(sqrt 2));
* a per-class Gaussian mixture whose shared covariance is interpolated
  toward the identity, trading ID likelihood against detection AUROC;
* two coarse typicality statistics (norm concentration near sqrt(D) vs the
  coordinate mean near 0) that rank the origin at opposite extremes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import DimensionMismatch, SingularCovariance
from .feature_scores import GaussianClassModel, class_quadratic_forms
from .metrics import auroc
from .tensor_io import rng_from_seed

ID_MEAN, ID_STD = 0.0, 1.0
OOD_MEAN, OOD_STD = 2.0, 1.0


@dataclass(frozen=True)
class Toy1dConfig:
    n_mc: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.n_mc < 10_000:
            raise ValueError("reported AUROCs need n_mc >= 10000")


def toy1d_loglik(mu: float, x: np.ndarray) -> np.ndarray:
    """log N(x | mu, 1)."""
    return -0.5 * (x - mu) ** 2 - 0.5 * math.log(2.0 * math.pi)


def toy1d_kl(mu: float) -> float:
    """KL(N(0,1) || N(mu,1)) in closed form."""
    return mu * mu / 2.0


def toy1d_auroc_closed_form(mu: float) -> float:
    """P(|x - mu| < |y - mu|) for x ~ N(0,1), y ~ N(2,1).

    With a = y - x ~ N(2, 2) and b = x + y - 2 mu ~ N(2 - 2 mu, 2)
    independent (equal variances cancel the covariance), the event is
    {ab > 0}; the limit as mu -> -inf is Phi(sqrt 2).
    """
    pa = float(ndtr(2.0 / math.sqrt(2.0)))
    pb = float(ndtr((2.0 - 2.0 * mu) / math.sqrt(2.0)))
    return pa * pb + (1.0 - pa) * (1.0 - pb)


@dataclass(frozen=True)
class Toy1dRow:
    mu: float
    mean_id_loglik: float
    kl_to_truth: float
    auroc: float

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "mean_id_loglik": self.mean_id_loglik,
            "kl_to_truth": self.kl_to_truth,
            "auroc": self.auroc,
        }


def toy1d_sweep(cfg: Toy1dConfig, mu_grid) -> list[Toy1dRow]:
    """Likelihood, KL, and detection AUROC for each model mean.

    One seeded set of Monte Carlo draws is shared across the whole grid
    (common random numbers), so the sweep is deterministic and the AUROC
    column varies smoothly in mu.
    """
    gen = rng_from_seed(cfg.seed)
    x_id = ID_MEAN + ID_STD * gen.standard_normal(cfg.n_mc)
    x_ood = OOD_MEAN + OOD_STD * gen.standard_normal(cfg.n_mc)
    rows = []
    for mu in mu_grid:
        mu = float(mu)
        if not math.isfinite(mu):
            raise ValueError("mu grid must be finite")
        rows.append(
            Toy1dRow(
                mu=mu,
                mean_id_loglik=float(toy1d_loglik(mu, x_id).mean()),
                kl_to_truth=toy1d_kl(mu),
                auroc=auroc(toy1d_loglik(mu, x_id), toy1d_loglik(mu, x_ood)),
            )
        )
    return rows


def gmm_loglik(model: GaussianClassModel, weights, x) -> np.ndarray:
    """log sum_c w_c N(x | mu_c, Sigma), shared covariance, stable logsumexp."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (model.n_classes,):
        raise DimensionMismatch(
            f"weights length {w.shape} != class count {model.n_classes}"
        )
    if np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("weights must lie on the simplex")
    quad = class_quadratic_forms(model, x)
    log_norm = -0.5 * (model.logdet_cov + model.dim * math.log(2.0 * math.pi))
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    return logsumexp(logw[None, :] + log_norm - 0.5 * quad, axis=1)


@dataclass(frozen=True)
class GmmInterpConfig:
    """Covariance interpolation grid against fixed evaluation sets."""

    t_grid: tuple[float, ...]
    base_model: GaussianClassModel
    id_heldout: np.ndarray
    ood: np.ndarray
    weights: np.ndarray = None  # defaults to uniform

    def __post_init__(self):
        ts = tuple(float(t) for t in self.t_grid)
        if list(ts) != sorted(ts) or ts[0] != 0.0 or ts[-1] != 1.0:
            raise ValueError("t_grid must be sorted and include 0 and 1")
        object.__setattr__(self, "t_grid", ts)
        if self.weights is None:
            k = self.base_model.n_classes
            object.__setattr__(self, "weights", np.full(k, 1.0 / k))


@dataclass(frozen=True)
class GmmInterpRow:
    t: float
    mean_id_loglik: float
    auroc: float

    def to_dict(self) -> dict:
        return {"t": self.t, "mean_id_loglik": self.mean_id_loglik, "auroc": self.auroc}


def gmm_interp_experiment(cfg: GmmInterpConfig) -> list[GmmInterpRow]:
    """Score under Sigma_t = (1 - t) Sigma + t I for each grid point.

    Interpolation keeps SPD for every t in [0, 1] when the base covariance
    is SPD (it is, by fit-time checks); a failed factorization is
    surfaced as SingularCovariance rather than silently skipped.
    """
    base_cov = cfg.base_model.pooled_cov
    eye = np.eye(base_cov.shape[0])
    rows = []
    for t in cfg.t_grid:
        try:
            model_t = cfg.base_model.with_covariance((1.0 - t) * base_cov + t * eye)
        except SingularCovariance:
            raise
        s_id = gmm_loglik(model_t, cfg.weights, cfg.id_heldout)
        s_ood = gmm_loglik(model_t, cfg.weights, cfg.ood)
        rows.append(
            GmmInterpRow(
                t=float(t),
                mean_id_loglik=float(s_id.mean()),
                auroc=auroc(s_id, s_ood),
            )
        )
    return rows


def typicality_scores(x, feature: str = "norm") -> np.ndarray:
    """Closeness of a coarse statistic to its large-D concentration point.

    norm mode: s = -| ||x|| - sqrt(D) |   (norms concentrate at sqrt(D))
    mean mode: s = -| mean_i x_i |        (coordinate mean concentrates at 0)

    The origin is maximally atypical under the first and maximally typical
    under the second; the choice of statistic is doing all the work.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if feature == "norm":
        return -np.abs(np.linalg.norm(arr, axis=1) - math.sqrt(arr.shape[1]))
    if feature == "mean":
        return -np.abs(arr.mean(axis=1))
    raise ValueError(f"unknown typicality feature {feature!r}")
