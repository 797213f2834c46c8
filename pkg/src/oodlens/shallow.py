"""Deterministic small-classifier training for the exposure experiments.

Networks are either linear or a single tanh hidden layer (smooth, so finite
difference checks stay clean), trained by plain gradient descent with a
fixed step: no adaptive state, which keeps trajectories bit-reproducible
from the seed. The outlier-exposure objective adds, with weight alpha, the
cross-entropy between the model's prediction on outlier rows and the
uniform distribution over the K in-distribution classes:

    L = mean_ID ce(f(x), y) + alpha * mean_out [logsumexp(f(x')) - mean_k f(x')_k]

whose outlier term is bounded below by ln K, with equality exactly at
uniform predictions. The unseen-class variant instead folds outliers into
training under a dedicated (K+1)-th label.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import DivergenceDetected, NotKPlus1Model, ShapeMismatch
from .tensor_io import DatasetBundle, rng_from_seed


@dataclass(frozen=True)
class ShallowNet:
    """Linear softmax classifier, optionally with one tanh hidden layer."""

    w_hidden: Optional[np.ndarray]  # D x H, None for linear nets
    b_hidden: Optional[np.ndarray]  # H
    w_out: np.ndarray               # (H or D) x K_total
    b_out: np.ndarray               # K_total
    has_unseen_class: bool = False

    @property
    def input_dim(self) -> int:
        return (self.w_hidden if self.w_hidden is not None else self.w_out).shape[0]

    @property
    def n_outputs(self) -> int:
        return self.w_out.shape[1]

    def hidden(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ self.w_hidden + self.b_hidden)

    def logits(self, x) -> np.ndarray:
        x = _check_features(self, x)
        h = x if self.w_hidden is None else self.hidden(x)
        return h @ self.w_out + self.b_out

    def flat_params(self) -> np.ndarray:
        parts = [self.w_hidden, self.b_hidden, self.w_out, self.b_out]
        return np.concatenate([p.reshape(-1) for p in parts if p is not None])

    def with_flat_params(self, vec: np.ndarray) -> "ShallowNet":
        out, offset = {}, 0
        for name in ("w_hidden", "b_hidden", "w_out", "b_out"):
            cur = getattr(self, name)
            if cur is None:
                out[name] = None
                continue
            out[name] = vec[offset : offset + cur.size].reshape(cur.shape).copy()
            offset += cur.size
        return replace(self, **out)


def _check_features(net: ShallowNet, x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.input_dim:
        raise ShapeMismatch(
            f"features have width {arr.shape[-1]}, net expects {net.input_dim}"
        )
    return arr


def init_net(
    dim: int,
    n_classes: int,
    hidden: Optional[int] = None,
    seed: int = 0,
    extra_class: bool = False,
) -> ShallowNet:
    """Seeded 1/sqrt(fan_in) Gaussian weights, zero biases."""
    gen = rng_from_seed(seed)
    k_total = n_classes + 1 if extra_class else n_classes
    if hidden is None:
        return ShallowNet(
            None, None,
            gen.standard_normal((dim, k_total)) / np.sqrt(dim),
            np.zeros(k_total),
            extra_class,
        )
    return ShallowNet(
        gen.standard_normal((dim, hidden)) / np.sqrt(dim),
        np.zeros(hidden),
        gen.standard_normal((hidden, k_total)) / np.sqrt(hidden),
        np.zeros(k_total),
        extra_class,
    )


@dataclass(frozen=True)
class TrainConfig:
    """Loss selection and optimizer settings for one training run.

    ``oe_weight`` may be zero, in which case the exposure term contributes
    nothing and the trajectory is bitwise identical to plain cross-entropy.
    """

    loss: str = "ce"                 # "ce" | "ce_plus_oe"
    oe_weight: float = 0.0
    extra_class: bool = False
    epochs: int = 100
    batch_size: Optional[int] = None  # None = full batch
    step_size: float = 0.1
    seed: int = 0
    outliers: Optional[DatasetBundle] = None

    def __post_init__(self):
        if self.loss not in ("ce", "ce_plus_oe"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.loss == "ce_plus_oe" and self.outliers is None:
            raise ValueError("ce_plus_oe requires an outlier set")
        if self.oe_weight < 0:
            raise ValueError("oe_weight must be >= 0")
        if self.extra_class and self.outliers is None:
            raise ValueError("extra_class requires train-time OOD examples")
        if self.extra_class and self.loss == "ce_plus_oe":
            raise ValueError("extra_class and ce_plus_oe are mutually exclusive")


def _zero_grads(net: ShallowNet) -> dict:
    return {
        name: None if getattr(net, name) is None else np.zeros_like(getattr(net, name))
        for name in ("w_hidden", "b_hidden", "w_out", "b_out")
    }


def _backprop(net: ShallowNet, x: np.ndarray, dlogits: np.ndarray, grads: dict):
    """Accumulate parameter gradients for d(loss)/d(logits) = dlogits."""
    h = x if net.w_hidden is None else net.hidden(x)
    grads["w_out"] += h.T @ dlogits
    grads["b_out"] += dlogits.sum(axis=0)
    if net.w_hidden is not None:
        dh = (dlogits @ net.w_out.T) * (1.0 - h * h)
        grads["w_hidden"] += x.T @ dh
        grads["b_hidden"] += dh.sum(axis=0)


def cross_entropy_loss(net: ShallowNet, x, y) -> float:
    """Mean negative log-probability of the true labels."""
    x = _check_features(net, x)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (x.shape[0],) or (y.size and (y.min() < 0 or y.max() >= net.n_outputs)):
        raise ShapeMismatch("labels must be in [0, K_total) and match the batch")
    z = net.logits(x)
    logp = z - logsumexp(z, axis=1, keepdims=True)
    return float(-logp[np.arange(y.size), y].mean())


def uniform_outlier_loss(net: ShallowNet, x) -> float:
    """Cross-entropy of predictions against the uniform target over the
    in-distribution classes: mean of logsumexp(z) - mean_k z_k, >= ln K."""
    x = _check_features(net, x)
    z = net.logits(x)
    return float((logsumexp(z, axis=1) - z.mean(axis=1)).mean())


def loss_and_grad(
    net: ShallowNet, batch: tuple, cfg: TrainConfig
) -> tuple[float, dict]:
    """Total loss and analytic parameter gradients for one batch.

    ``batch`` is (x_id, y_id, x_out-or-None). The total is accumulated as
    ce + oe_weight * oe, the same arithmetic exposed by the two loss
    helpers, so the decomposition identity is exact.
    """
    x_id, y_id, x_out = batch
    x_id = _check_features(net, x_id)
    y_id = np.asarray(y_id, dtype=np.int64)
    grads = _zero_grads(net)

    ce = cross_entropy_loss(net, x_id, y_id)
    p = softmax(net.logits(x_id), axis=1)
    dlogits = p.copy()
    dlogits[np.arange(y_id.size), y_id] -= 1.0
    _backprop(net, x_id, dlogits / y_id.size, grads)

    total = ce
    if cfg.loss == "ce_plus_oe" and x_out is not None and cfg.oe_weight != 0.0:
        x_out = _check_features(net, x_out)
        oe = uniform_outlier_loss(net, x_out)
        p_out = softmax(net.logits(x_out), axis=1)
        dl_out = (p_out - 1.0 / net.n_outputs) * (cfg.oe_weight / x_out.shape[0])
        _backprop(net, x_out, dl_out, grads)
        total = ce + cfg.oe_weight * oe

    if not np.isfinite(total):
        raise DivergenceDetected(f"loss is non-finite: {total}")
    return total, grads


@dataclass(frozen=True)
class TrainResult:
    net: ShallowNet
    loss_trace: tuple[float, ...]


def train(net0: ShallowNet, train_data: DatasetBundle, cfg: TrainConfig) -> TrainResult:
    """Gradient descent with a fixed step and seeded batch order.

    With ``extra_class`` the outlier rows join the training set under label
    K before the loop; otherwise outlier batches cycle alongside ID batches
    for the exposure term.
    """
    if train_data.labels is None:
        raise ShapeMismatch("training bundle must carry labels")
    feats = train_data.features.data.astype(np.float64)
    labels = train_data.labels.copy()

    out_feats = None
    if cfg.extra_class:
        if not net0.has_unseen_class:
            raise NotKPlus1Model("extra_class training needs a K+1 output net")
        k_label = net0.n_outputs - 1
        extra = cfg.outliers.features.data.astype(np.float64)
        feats = np.concatenate([feats, extra])
        labels = np.concatenate([labels, np.full(extra.shape[0], k_label)])
    elif cfg.loss == "ce_plus_oe":
        out_feats = cfg.outliers.features.data.astype(np.float64)

    # separate streams so an unused outlier set cannot perturb ID batch order
    id_seq, out_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    gen = np.random.Generator(np.random.PCG64(id_seq))
    gen_out = np.random.Generator(np.random.PCG64(out_seq))
    net = net0
    batch = cfg.batch_size or feats.shape[0]
    trace = []
    for _ in range(cfg.epochs):
        order = gen.permutation(feats.shape[0])
        out_order = gen_out.permutation(out_feats.shape[0]) if out_feats is not None else None
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, feats.shape[0], batch):
            idx = order[start : start + batch]
            x_out = None
            if out_feats is not None:
                # cycle outlier rows at the same rate as ID batches
                take = np.arange(start, start + idx.size) % out_feats.shape[0]
                x_out = out_feats[out_order[take]]
            loss, grads = loss_and_grad(net, (feats[idx], labels[idx], x_out), cfg)
            updates = {
                name: getattr(net, name) - cfg.step_size * g
                for name, g in grads.items()
                if g is not None
            }
            net = replace(net, **updates)
            epoch_loss += loss
            n_batches += 1
        mean_loss = epoch_loss / n_batches
        # saturating CE keeps gradients bounded, so a runaway iterate shows
        # up as an absurd-but-finite loss long before any float overflows;
        # treat both as divergence
        if (
            not np.isfinite(mean_loss)
            or abs(mean_loss) > 1e12
            or not np.all(np.isfinite(net.flat_params()))
        ):
            raise DivergenceDetected(f"training diverged at epoch {len(trace)}")
        trace.append(mean_loss)
    return TrainResult(net, tuple(trace))


def predict(net: ShallowNet, x) -> np.ndarray:
    return np.argmax(net.logits(x), axis=1)


def accuracy(net: ShallowNet, x, y) -> float:
    y = np.asarray(y, dtype=np.int64)
    return float(np.mean(predict(net, x) == y))


def kplus1_detect(net: ShallowNet, x) -> np.ndarray:
    """Score = -p(unseen class | x); higher = more in-distribution."""
    if not net.has_unseen_class:
        raise NotKPlus1Model("net was not trained with an unseen class")
    probs = softmax(net.logits(x), axis=1)
    return -probs[:, -1]


# --- outlier-exposure tradeoff experiment ------------------------------------

@dataclass(frozen=True)
class OeTradeoffData:
    """Matched evaluation sets for the exposure-vs-generalization tradeoff."""

    train: DatasetBundle
    heldout: DatasetBundle
    exposure: DatasetBundle           # train-time outliers
    exposure_like_ood: DatasetBundle  # fresh draws from the exposure law
    shifted_heldout: DatasetBundle    # covariate shift: noise + mean drift
    shift_drift: tuple[float, ...]
    shift_noise: float


def make_oe_tradeoff_data(
    seed: int,
    n_per_class: int = 300,
    class_gap: float = 4.0,
    exposure_height: float = 4.0,
    exposure_halfwidth: float = 6.0,
    drift: float = 2.0,
    shift_noise: float = 0.6,
) -> OeTradeoffData:
    """Two ID blobs split along dim 0; an outlier band sits above them along
    dim 1, and the covariate shift drifts heldout data toward that band."""
    gen = rng_from_seed(seed)
    half = class_gap / 2.0

    def id_draw(tag):
        feats = gen.standard_normal((2 * n_per_class, 2))
        feats[:n_per_class, 0] -= half
        feats[n_per_class:, 0] += half
        labels = np.repeat([0, 1], n_per_class)
        from .tensor_io import TensorF32
        return DatasetBundle(TensorF32(feats), labels=labels, split_tag=tag)

    def band_draw():
        n = 2 * n_per_class
        feats = np.empty((n, 2))
        feats[:, 0] = gen.uniform(-exposure_halfwidth, exposure_halfwidth, n)
        feats[:, 1] = exposure_height + 0.5 * gen.standard_normal(n)
        from .tensor_io import TensorF32
        return DatasetBundle(TensorF32(feats), split_tag="ood")

    train, heldout = id_draw("train"), id_draw("heldout")
    exposure, exposure_like = band_draw(), band_draw()

    shifted = heldout.features.data.astype(np.float64).copy()
    shifted[:, 1] += drift
    shifted += shift_noise * gen.standard_normal(shifted.shape)
    from .tensor_io import TensorF32
    shifted_heldout = DatasetBundle(
        TensorF32(shifted), labels=heldout.labels, split_tag="heldout"
    )
    return OeTradeoffData(
        train, heldout, exposure, exposure_like, shifted_heldout,
        (0.0, drift), shift_noise,
    )


@dataclass(frozen=True)
class OeTradeoffReport:
    erm_detection_auroc: float
    oe_detection_auroc: float
    erm_shift_accuracy: float
    oe_shift_accuracy: float

    def to_dict(self) -> dict:
        return {
            "erm": {
                "detection_auroc": self.erm_detection_auroc,
                "shift_accuracy": self.erm_shift_accuracy,
            },
            "oe": {
                "detection_auroc": self.oe_detection_auroc,
                "shift_accuracy": self.oe_shift_accuracy,
            },
        }


def oe_tradeoff_experiment(
    erm_cfg: TrainConfig,
    oe_cfg: TrainConfig,
    data: OeTradeoffData,
    hidden: int = 32,
    init_seed: int = 0,
) -> OeTradeoffReport:
    """Train matched ERM and exposure runs, then score the tradeoff.

    Detection uses MSP against fresh exposure-like OOD; generalization is
    label accuracy on the covariate-shifted heldout split. Both runs start
    from the same initialization.
    """
    from .logit_scores import msp
    from .metrics import auroc

    net0 = init_net(data.train.dim, 2, hidden=hidden, seed=init_seed)
    erm_net = train(net0, data.train, erm_cfg).net
    oe_net = train(net0, data.train, oe_cfg).net

    ho = data.heldout.features.data
    ood = data.exposure_like_ood.features.data
    shifted = data.shifted_heldout.features.data
    return OeTradeoffReport(
        erm_detection_auroc=auroc(msp(erm_net.logits(ho)), msp(erm_net.logits(ood))),
        oe_detection_auroc=auroc(msp(oe_net.logits(ho)), msp(oe_net.logits(ood))),
        erm_shift_accuracy=accuracy(erm_net, shifted, data.shifted_heldout.labels),
        oe_shift_accuracy=accuracy(oe_net, shifted, data.shifted_heldout.labels),
    )
