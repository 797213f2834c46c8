"""Oracle diagnostics: linear probe, oracle PCA selection, error split.

The probe is a binary linear classifier trained to separate ID from OOD
features; its held-out AUROC proxies the best any feature-based detector
could do, so 1 - AUROC(probe) is reported as the indistinguishable-features
error. Oracle PCA retains the subspace size (from a fixed grid) that
maximizes Mahalanobis AUROC when ID and OOD features are both visible; the
gap it recovers over plain Mahalanobis is the irrelevant-features error.
The remainder is "other". The three components telescope exactly to
1 - AUROC(maha).

The probe can legitimately underperform the PCA'd Mahalanobis score on data
that is not linearly separable; that situation is flagged in the report
rather than asserted away.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGrid, NonConvergence, TooFewSamples, TooFewSets
from .feature_scores import fit_gaussian_class_model, maha_score
from .metrics import auroc
from .tensor_io import DatasetBundle, TensorF32, rng_from_seed

DEFAULT_K_GRID = (32, 64, 128, 256)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _fit_logistic_newton(
    x: np.ndarray, y: np.ndarray, l2: float, tol: float, max_iter: int
) -> tuple[np.ndarray, int, float]:
    """Full-batch Newton on summed logistic loss + (l2/2)|theta|^2.

    ``x`` already carries the intercept column; the ridge covers every
    parameter, keeping the Hessian PD even on separable data. Returns the
    parameter vector, iterations used, and the final gradient norm.
    """
    theta = np.zeros(x.shape[1])
    for it in range(max_iter):
        p = _sigmoid(x @ theta)
        grad = x.T @ (p - y) + l2 * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta, it, gnorm
        w = np.maximum(p * (1.0 - p), 1e-12)
        hess = (x * w[:, None]).T @ x + l2 * np.eye(x.shape[1])
        step = np.linalg.solve(hess, grad)
        # backtrack if the full Newton step overshoots; the slack tolerates
        # the float plateau right at the optimum
        loss0 = _logistic_loss(x, y, theta, l2)
        accept = loss0 + 1e-12 * (1.0 + abs(loss0))
        scale = 1.0
        for _ in range(50):
            trial = theta - scale * step
            if _logistic_loss(x, y, trial, l2) <= accept:
                theta = trial
                break
            scale *= 0.5
        else:
            break
    p = _sigmoid(x @ theta)
    gnorm = float(np.linalg.norm(x.T @ (p - y) + l2 * theta))
    if gnorm > tol:
        raise NonConvergence(
            f"probe solver stopped at gradient norm {gnorm:.3e} (tol {tol:.0e})"
        )
    return theta, max_iter, gnorm


def _logistic_loss(x, y, theta, l2) -> float:
    z = x @ theta
    # log(1 + exp(-z*y_pm)) accumulated stably
    zy = np.where(y > 0.5, -z, z)
    loss = float(np.sum(np.logaddexp(0.0, zy)))
    return loss + 0.5 * l2 * float(theta @ theta)


@dataclass(frozen=True)
class ProbeConfig:
    l2: float = 1e-2
    split: float = 0.8
    seed: int = 0
    tol: float = 1e-8
    max_iter: int = 200


@dataclass(frozen=True)
class OracleProbe:
    """Fitted ID-vs-OOD linear probe plus its held-out evaluation."""

    weights: np.ndarray
    bias: float
    l2_strength: float
    split: float
    seed: int
    heldout_auroc: float
    train_idx_id: np.ndarray = field(repr=False)
    train_idx_ood: np.ndarray = field(repr=False)
    eval_idx_id: np.ndarray = field(repr=False)
    eval_idx_ood: np.ndarray = field(repr=False)
    grad_norm: float = 0.0

    def decision_scores(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias


def fit_oracle_probe(
    id_features,
    ood_features,
    l2: float = 1e-2,
    split: float = 0.8,
    seed: int = 0,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> OracleProbe:
    """Train the binary probe and score it on rows it never saw.

    The ID/OOD row sets are independently shuffled (seeded) and split; the
    returned AUROC uses only the held-out portions.
    """
    id_x = np.asarray(id_features, dtype=np.float64)
    ood_x = np.asarray(ood_features, dtype=np.float64)
    if id_x.shape[0] < 20 or ood_x.shape[0] < 20:
        raise TooFewSamples(
            f"need >= 20 rows per side, got {id_x.shape[0]} ID / {ood_x.shape[0]} OOD"
        )
    if not (0.0 < split < 1.0):
        raise ValueError(f"split must be in (0, 1), got {split}")

    gen = rng_from_seed(seed)
    perm_id = gen.permutation(id_x.shape[0])
    perm_ood = gen.permutation(ood_x.shape[0])
    n_tr_id = max(1, int(round(split * id_x.shape[0])))
    n_tr_ood = max(1, int(round(split * ood_x.shape[0])))
    n_tr_id = min(n_tr_id, id_x.shape[0] - 1)
    n_tr_ood = min(n_tr_ood, ood_x.shape[0] - 1)

    tr_id, ev_id = perm_id[:n_tr_id], perm_id[n_tr_id:]
    tr_ood, ev_ood = perm_ood[:n_tr_ood], perm_ood[n_tr_ood:]

    x_train = np.concatenate([id_x[tr_id], ood_x[tr_ood]])
    y_train = np.concatenate([np.ones(tr_id.size), np.zeros(tr_ood.size)])
    aug = np.concatenate([x_train, np.ones((x_train.shape[0], 1))], axis=1)
    theta, _, gnorm = _fit_logistic_newton(aug, y_train, l2, tol, max_iter)

    weights, bias = theta[:-1], float(theta[-1])
    ho_auroc = auroc(id_x[ev_id] @ weights + bias, ood_x[ev_ood] @ weights + bias)
    return OracleProbe(
        weights=weights,
        bias=bias,
        l2_strength=l2,
        split=split,
        seed=seed,
        heldout_auroc=ho_auroc,
        train_idx_id=tr_id,
        train_idx_ood=tr_ood,
        eval_idx_id=ev_id,
        eval_idx_ood=ev_ood,
        grad_norm=gnorm,
    )


def _joint_pca_basis(id_feats: np.ndarray, ood_feats: np.ndarray, k: int) -> np.ndarray:
    """Top-k eigenvectors of the covariance of ID and OOD rows pooled
    together and centered by their joint mean."""
    joint = np.concatenate([id_feats, ood_feats])
    joint = joint - joint.mean(axis=0)
    cov = joint.T @ joint / max(joint.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    basis = eigvecs[:, order[:k]]
    anchor = np.argmax(np.abs(basis), axis=0)
    return basis * np.sign(basis[anchor, np.arange(k)])


def _projected_maha_auroc(
    id_train: DatasetBundle,
    id_eval: np.ndarray,
    ood: np.ndarray,
    basis: np.ndarray,
    shrinkage: float,
) -> float:
    proj_train = DatasetBundle(
        TensorF32(id_train.features.data @ basis),
        labels=id_train.labels,
        split_tag="train",
    )
    model = fit_gaussian_class_model(proj_train, shrinkage)
    return auroc(maha_score(model, id_eval @ basis), maha_score(model, ood @ basis))


def oracle_pca_maha(
    id_train: DatasetBundle,
    id_eval,
    ood,
    k_grid=DEFAULT_K_GRID,
    shrinkage: float = 1e-3,
) -> tuple[float, int]:
    """Best Mahalanobis AUROC over the subspace-size grid.

    The basis comes from the pooled (ID eval + OOD) covariance; the Gaussian
    model is refit on projected training features for every k. Ties break
    toward the smaller k.
    """
    id_eval = np.asarray(id_eval, dtype=np.float64)
    ood = np.asarray(ood, dtype=np.float64)
    d = id_eval.shape[1]
    ks = sorted(k for k in k_grid if k < d)
    if not ks:
        raise EmptyGrid(f"no k in {tuple(k_grid)} is < feature dim {d}")

    full_basis = _joint_pca_basis(id_eval, ood, max(ks))
    best_auroc, best_k = -1.0, ks[0]
    for k in ks:
        a = _projected_maha_auroc(id_train, id_eval, ood, full_basis[:, :k], shrinkage)
        if a > best_auroc:
            best_auroc, best_k = a, k
    return best_auroc, best_k


@dataclass(frozen=True)
class ErrorDecomposition:
    """1 - AUROC(maha) split into indistinguishable / irrelevant / other.

    Negative components are stored as-is (clamping would break the
    telescoping identity) and listed in ``flags``.
    """

    total_error: float
    indistinguishable: float
    other: float
    irrelevant: float
    chosen_k: int
    auroc_maha: float
    auroc_oracle: float
    auroc_maha_pca: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "auroc_maha": self.auroc_maha,
            "auroc_maha_pca": self.auroc_maha_pca,
            "auroc_oracle": self.auroc_oracle,
            "chosen_k": self.chosen_k,
            "components": {
                "total_error": self.total_error,
                "indistinguishable": self.indistinguishable,
                "other": self.other,
                "irrelevant": self.irrelevant,
            },
            "flags": list(self.flags),
        }


def error_decomposition(
    id_train: DatasetBundle,
    id_eval,
    ood,
    shrinkage: float = 1e-3,
    k_grid=DEFAULT_K_GRID,
    probe_cfg: ProbeConfig = ProbeConfig(),
) -> ErrorDecomposition:
    """Compute the three AUROCs and their telescoping differences."""
    id_eval = np.asarray(id_eval, dtype=np.float64)
    ood = np.asarray(ood, dtype=np.float64)

    model = fit_gaussian_class_model(id_train, shrinkage)
    a_maha = auroc(maha_score(model, id_eval), maha_score(model, ood))
    probe = fit_oracle_probe(
        id_eval, ood, probe_cfg.l2, probe_cfg.split, probe_cfg.seed,
        probe_cfg.tol, probe_cfg.max_iter,
    )
    a_oracle = probe.heldout_auroc
    a_pca, chosen_k = oracle_pca_maha(id_train, id_eval, ood, k_grid, shrinkage)

    indist = 1.0 - a_oracle
    other = a_oracle - a_pca
    irrel = a_pca - a_maha
    flags = tuple(
        f"negative component: {name}"
        for name, v in (
            ("indistinguishable", indist), ("other", other), ("irrelevant", irrel)
        )
        if v < 0
    ) + (
        ("probe underperforms oracle-PCA mahalanobis",) if a_oracle < a_pca else ()
    )
    return ErrorDecomposition(
        total_error=1.0 - a_maha,
        indistinguishable=indist,
        other=other,
        irrelevant=irrel,
        chosen_k=chosen_k,
        auroc_maha=a_maha,
        auroc_oracle=a_oracle,
        auroc_maha_pca=a_pca,
        flags=flags,
    )


def feature_transfer_matrix(
    id_train: DatasetBundle, ood_sets, k: int, shrinkage: float = 1e-3
) -> np.ndarray:
    """AUROC[i, j]: detect OOD set j with the top-k basis picked for set i.

    Bases are computed per row from ID plus that row's OOD set; the ID side
    of every evaluation is the training features. Cells are independent, so
    the sweep honors OODLENS_THREADS when set above 1.
    """
    sets = [np.asarray(s, dtype=np.float64) for s in ood_sets]
    if len(sets) < 2:
        raise TooFewSets(f"need >= 2 OOD sets, got {len(sets)}")
    id_feats = id_train.features.data.astype(np.float64)

    def row(i: int) -> list[float]:
        basis = _joint_pca_basis(id_feats, sets[i], k)
        return [
            _projected_maha_auroc(id_train, id_feats, sets[j], basis, shrinkage)
            for j in range(len(sets))
        ]

    workers = int(os.environ.get("OODLENS_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, range(len(sets))))
    else:
        rows = [row(i) for i in range(len(sets))]
    return np.asarray(rows)
