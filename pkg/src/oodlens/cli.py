"""Command-line surface: datasets -> methods -> metrics -> reports.

One verb per experiment family:

    synth         draw a synthetic dataset and write OODT files
    score         compute one method's scores for an eval set
    eval          full pipeline: methods x metrics -> JSON/CSV reports
    decompose     oracle error decomposition for Mahalanobis
    transfer      cross-OOD feature-selection transfer matrix (CSV)
    train         train a shallow classifier from a config file
    oe-tradeoff   outlier exposure vs covariate-shift generalization
    kplus1        unseen-class detector locality demo
    laplace-demo  posterior contraction table + 2-D MSP grid
    toy1d         1-D Gaussian likelihood/AUROC sweep
    gmm-interp    covariance interpolation likelihood/AUROC sweep
    typicality    coarse typicality scores for a feature file

Exit codes: 2 config invalid, 3 data error, 4 method error; failures emit a
machine-readable {"error", "message"} object on stderr. Reports are written
atomically (temp file + rename) and deterministically: rerunning the same
config and seed reproduces reports.json byte for byte. Wall-clock timings
live only in manifest.json and are excluded from the config hash.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import laplace as lap
from . import logit_scores, metrics, shallow, toy
from .errors import (
    ConfigInvalid,
    DataError,
    IoFailure,
    MethodError,
    OodlensError,
)
from .feature_scores import (
    fit_gaussian_class_model,
    fit_hybrid_normalizer,
    fit_vim,
    hybrid_add,
    maha_score,
    rel_maha_score,
    vim_score,
)
from .oracle import ProbeConfig, error_decomposition, feature_transfer_matrix
from .tensor_io import (
    RNG_ALGORITHM,
    CovDiagonal,
    CovIdentity,
    CovPlanted,
    DatasetBundle,
    SynthSpec,
    TensorF32,
    labels_to_tensor,
    load_tensor,
    save_tensor,
    synth_dataset,
    tensor_to_labels,
)

TOOLKIT_VERSION = "0.1.0"
SCHEMA_VERSION = 1
KNOWN_METHODS = (
    "msp", "max_logit", "entropy", "energy",
    "maha", "rel_maha", "vim", "hybrid_add",
)

CSV_COLUMNS = "method,auroc,fpr_at_95,n_id,n_ood"


def _write_atomic(path: Path, text: str) -> None:
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# --- experiment config --------------------------------------------------------

_METHOD_DEFAULTS = {
    "msp": {},
    "max_logit": {},
    "entropy": {},
    "energy": {"temperature": 1.0},
    "maha": {"shrinkage": 1e-3},
    "rel_maha": {"shrinkage": 1e-3},
    "vim": {"vim_dim": None, "shrinkage": 1e-3},
    "hybrid_add": {"shrinkage": 1e-3, "hybrid_ref_split": "train"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Normalized experiment description; every default made explicit."""

    dataset: dict
    methods: tuple[dict, ...]
    metrics: dict
    out_dir: str
    seed: int
    head_prior_precision: float

    def canonical(self) -> dict:
        return {
            "dataset": self.dataset,
            "methods": list(self.methods),
            "metrics": self.metrics,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "head_prior_precision": self.head_prior_precision,
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def normalize_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    dataset = raw.get("dataset")
    if not isinstance(dataset, dict) or not ({"synth", "paths"} & dataset.keys()):
        raise ConfigInvalid("dataset must contain a 'synth' spec or 'paths'")

    methods = []
    for entry in raw.get("methods", []):
        if isinstance(entry, str):
            entry = {"name": entry}
        name = entry.get("name")
        if name not in KNOWN_METHODS:
            raise ConfigInvalid(f"unknown method {name!r} (known: {KNOWN_METHODS})")
        merged = dict(_METHOD_DEFAULTS[name])
        for key, val in entry.items():
            if key == "name":
                continue
            if key not in merged:
                raise ConfigInvalid(f"method {name}: unknown option {key!r}")
            merged[key] = val
        merged["name"] = name
        methods.append(merged)

    m_raw = raw.get("metrics", {})
    fpr_at = float(m_raw.get("fpr_at", 0.95))
    if not (0.0 < fpr_at <= 1.0):
        raise ConfigInvalid(f"metrics.fpr_at must be in (0, 1], got {fpr_at}")
    metrics_cfg = {"auroc": bool(m_raw.get("auroc", True)), "fpr_at": fpr_at}

    return ExperimentConfig(
        dataset=dataset,
        methods=tuple(methods),
        metrics=metrics_cfg,
        out_dir=str(raw.get("out_dir", ".")),
        seed=int(raw.get("seed", 0)),
        head_prior_precision=float(raw.get("head_prior_precision", 1.0)),
    )


def parse_synth_spec(spec: dict) -> SynthSpec:
    try:
        cov_raw = spec.get("cov", {"identity": {}})
        if "identity" in cov_raw:
            cov = CovIdentity()
        elif "diagonal" in cov_raw:
            cov = CovDiagonal(stds=tuple(cov_raw["diagonal"]["stds"]))
        elif "planted" in cov_raw:
            p = cov_raw["planted"]
            cov = CovPlanted(
                signal_dims=int(p["signal_dims"]),
                signal_gap=float(p["signal_gap"]),
                noise_scale=float(p.get("noise_scale", 1.0)),
            )
        else:
            raise ConfigInvalid(f"unknown cov spec {sorted(cov_raw)}")
        return SynthSpec(
            n_per_class=int(spec["n_per_class"]),
            dim=int(spec["dim"]),
            class_means=np.asarray(spec["class_means"], dtype=np.float64),
            shared_cov_spec=cov,
            seed=int(spec.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad synth spec: {exc}") from exc


def load_dataset(cfg: ExperimentConfig) -> tuple[DatasetBundle, DatasetBundle, DatasetBundle]:
    if "synth" in cfg.dataset:
        return synth_dataset(parse_synth_spec(cfg.dataset["synth"]))
    paths = cfg.dataset["paths"]
    try:
        def bundle(which, tag):
            feats = load_tensor(paths[f"{which}_features"])
            logits = None
            if paths.get(f"{which}_logits"):
                logits = load_tensor(paths[f"{which}_logits"])
            labels = None
            if tag != "ood" and paths.get(f"{which}_labels"):
                labels = tensor_to_labels(load_tensor(paths[f"{which}_labels"]))
            return DatasetBundle(feats, logits=logits, labels=labels, split_tag=tag)

        return (
            bundle("train", "train"),
            bundle("heldout", "heldout"),
            bundle("ood", "ood"),
        )
    except KeyError as exc:
        raise ConfigInvalid(f"dataset.paths missing entry {exc}") from exc
    except (OSError, ValueError, OodlensError) as exc:
        raise DataError(str(exc)) from exc


# --- method engine ------------------------------------------------------------

class _MethodEngine:
    """Caches fitted models and per-bundle logits across methods.

    When a logit-consuming method runs on a dataset without logits, a linear
    softmax head is MAP-fit on the training split (seeded, prior precision
    from the config) and its logits are attached everywhere.
    """

    def __init__(self, cfg: ExperimentConfig, train, heldout, ood):
        self.cfg = cfg
        self.bundles = {"train": train, "heldout": heldout, "ood": ood}
        self._gauss = {}
        self._vim = {}
        self._logits = {}
        self._head_fitted = False

    def logits_of(self, key: str) -> np.ndarray:
        bundle = self.bundles[key]
        if bundle.logits is not None:
            return bundle.logits.data.astype(np.float64)
        if key not in self._logits:
            self._fit_head()
        return self._logits[key]

    def _fit_head(self):
        if self._head_fitted:
            return
        train = self.bundles["train"]
        if train.labels is None:
            raise MethodError("logit methods need logits or labeled training data")
        k = int(train.labels.max()) + 1
        theta = lap.fit_map(train, self.cfg.head_prior_precision, n_classes=k)
        for key, bundle in self.bundles.items():
            self._logits[key] = lap.map_logits(theta, bundle.features.data, k)
        self._head_fitted = True

    def gauss(self, shrinkage: float):
        if shrinkage not in self._gauss:
            self._gauss[shrinkage] = fit_gaussian_class_model(
                self.bundles["train"], shrinkage
            )
        return self._gauss[shrinkage]

    def vim(self, m, shrinkage):
        key = (m, shrinkage)
        if key not in self._vim:
            self._vim[key] = fit_vim(self.bundles["train"], self.logits_of("train"), m)
        return self._vim[key]

    def scores_for(self, opts: dict, key: str) -> np.ndarray:
        name = opts["name"]
        feats = self.bundles[key].features.data.astype(np.float64)
        if name == "msp":
            return logit_scores.msp(self.logits_of(key))
        if name == "max_logit":
            return logit_scores.max_logit(self.logits_of(key))
        if name == "entropy":
            return logit_scores.entropy_score(self.logits_of(key))
        if name == "energy":
            return logit_scores.energy_score(self.logits_of(key), opts["temperature"])
        if name == "maha":
            return maha_score(self.gauss(opts["shrinkage"]), feats)
        if name == "rel_maha":
            return rel_maha_score(self.gauss(opts["shrinkage"]), feats)
        if name == "vim":
            m = opts["vim_dim"] or max(1, feats.shape[1] // 2)
            return vim_score(self.vim(m, opts["shrinkage"]), feats, self.logits_of(key))
        if name == "hybrid_add":
            ref = opts["hybrid_ref_split"]
            if ref not in ("train", "heldout"):
                raise ConfigInvalid(f"hybrid_ref_split must be train|heldout, got {ref}")
            model = self.gauss(opts["shrinkage"])
            ref_feats = self.bundles[ref].features.data.astype(np.float64)
            norm = fit_hybrid_normalizer(
                maha_score(model, ref_feats),
                logit_scores.msp(self.logits_of(ref)),
            )
            return hybrid_add(
                maha_score(model, feats),
                logit_scores.msp(self.logits_of(key)),
                norm,
            )
        raise ConfigInvalid(f"unknown method {name!r}")


# --- pipeline ------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig) -> dict:
    """Produce every requested (method, metric) pair as a manifest dict."""
    wall = {}
    t0 = time.perf_counter()
    train, heldout, ood = load_dataset(cfg)
    wall["load"] = time.perf_counter() - t0

    engine = _MethodEngine(cfg, train, heldout, ood)
    reports = []
    for opts in cfg.methods:
        t0 = time.perf_counter()
        try:
            id_scores = engine.scores_for(opts, "heldout")
            ood_scores = engine.scores_for(opts, "ood")
            report = metrics.evaluate(
                opts["name"], id_scores, ood_scores, cfg.metrics["fpr_at"]
            )
        except ConfigInvalid:
            raise
        except OodlensError as exc:
            raise MethodError(f"method {opts['name']}: {exc}") from exc
        reports.append(report.to_dict())
        wall[f"method:{opts['name']}"] = time.perf_counter() - t0

    return {
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": TOOLKIT_VERSION,
        "rng": {"algorithm": RNG_ALGORITHM, "seed": cfg.seed},
        "config": cfg.canonical(),
        "config_hash": cfg.hash(),
        "reports": reports,
        "wall_clock": wall,
    }


def emit_report(manifest: dict, out_dir) -> dict[str, Path]:
    """Write reports.json (deterministic), reports.csv, manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    deterministic = {k: v for k, v in manifest.items() if k != "wall_clock"}
    paths = {
        "reports_json": out / "reports.json",
        "reports_csv": out / "reports.csv",
        "manifest_json": out / "manifest.json",
    }
    _write_atomic(paths["reports_json"], _json_dumps(deterministic))
    lines = [CSV_COLUMNS]
    for rep in manifest["reports"]:
        lines.append(
            f"{rep['method']},{rep['auroc']!r},{rep['fpr_at_95']!r},"
            f"{rep['n_id']},{rep['n_ood']}"
        )
    _write_atomic(paths["reports_csv"], "\n".join(lines) + "\n")
    _write_atomic(paths["manifest_json"], _json_dumps(manifest))
    return paths


# --- subcommand handlers --------------------------------------------------------

def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc


def _cmd_synth(args) -> int:
    spec = parse_synth_spec(_load_json(args.spec))
    train, heldout, ood = synth_dataset(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(train.features, out / "train_features.oodt")
    save_tensor(labels_to_tensor(train.labels), out / "train_labels.oodt")
    save_tensor(heldout.features, out / "heldout_features.oodt")
    save_tensor(labels_to_tensor(heldout.labels), out / "heldout_labels.oodt")
    save_tensor(ood.features, out / "ood_features.oodt")
    print(f"wrote 5 OODT files to {out}")
    return 0


def _cmd_score(args) -> int:
    paths = {
        "train_features": args.train_features,
        "heldout_features": args.eval_features,
        "ood_features": args.eval_features,
    }
    if args.train_labels:
        paths["train_labels"] = args.train_labels
    if args.train_logits:
        paths["train_logits"] = args.train_logits
    if args.eval_logits:
        paths["heldout_logits"] = args.eval_logits
        paths["ood_logits"] = args.eval_logits
    cfg = normalize_config(
        {
            "dataset": {"paths": paths},
            "methods": [_method_entry(args)],
            "seed": args.seed,
        }
    )
    train, heldout, ood = load_dataset(cfg)
    engine = _MethodEngine(cfg, train, heldout, ood)
    try:
        scores = engine.scores_for(dict(cfg.methods[0]), "heldout")
    except ConfigInvalid:
        raise
    except OodlensError as exc:
        raise MethodError(f"method {args.method}: {exc}") from exc
    save_tensor(TensorF32(np.asarray(scores, dtype=np.float32)), args.out)
    print(f"wrote {scores.size} scores to {args.out}")
    return 0


def _method_entry(args) -> dict:
    entry = {"name": args.method}
    if args.method == "energy":
        entry["temperature"] = args.temperature
    if args.method in ("maha", "rel_maha", "vim", "hybrid_add"):
        entry["shrinkage"] = args.shrinkage
    if args.method == "vim" and args.vim_dim:
        entry["vim_dim"] = args.vim_dim
    if args.method == "hybrid_add":
        entry["hybrid_ref_split"] = args.hybrid_ref_split
    return entry


def _cmd_eval(args) -> int:
    raw = _load_json(args.config)
    if args.out_dir:
        raw["out_dir"] = args.out_dir
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = normalize_config(raw)
    manifest = run_experiment(cfg)
    paths = emit_report(manifest, cfg.out_dir)
    print(f"wrote {paths['reports_json']}")
    return 0


def _cmd_decompose(args) -> int:
    cfg = normalize_config({"dataset": _load_json(args.config)["dataset"],
                            "methods": [], "seed": args.seed})
    train, heldout, ood = load_dataset(cfg)
    k_grid = tuple(int(k) for k in args.k_grid.split(","))
    dec = error_decomposition(
        train,
        heldout.features.data,
        ood.features.data,
        shrinkage=args.shrinkage,
        k_grid=k_grid,
        probe_cfg=ProbeConfig(l2=args.probe_l2, seed=args.seed),
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "decomposition.json", _json_dumps(dec.to_dict()))
    print(f"wrote {out / 'decomposition.json'}")
    return 0


def _cmd_transfer(args) -> int:
    try:
        train = DatasetBundle(
            load_tensor(args.train_features),
            labels=tensor_to_labels(load_tensor(args.train_labels)),
            split_tag="train",
        )
        ood_sets = [load_tensor(p).data.astype(np.float64) for p in args.ood]
    except (OodlensError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    matrix = feature_transfer_matrix(train, ood_sets, args.k, args.shrinkage)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = "basis_set," + ",".join(f"ood{j}" for j in range(matrix.shape[1]))
    lines = [header] + [
        f"ood{i}," + ",".join(repr(float(v)) for v in row)
        for i, row in enumerate(matrix)
    ]
    _write_atomic(out / "transfer_matrix.csv", "\n".join(lines) + "\n")
    print(f"wrote {out / 'transfer_matrix.csv'}")
    return 0


def _cmd_train(args) -> int:
    raw = _load_json(args.config)
    cfg = normalize_config({"dataset": raw["dataset"], "methods": [],
                            "seed": raw.get("seed", 0)})
    train_b, heldout_b, ood_b = load_dataset(cfg)
    net_cfg = raw.get("net", {})
    tr_raw = raw.get("train", {})
    outliers = ood_b if (tr_raw.get("loss") == "ce_plus_oe" or
                         tr_raw.get("extra_class")) else None
    try:
        tcfg = shallow.TrainConfig(
            loss=tr_raw.get("loss", "ce"),
            oe_weight=float(tr_raw.get("oe_weight", 0.0)),
            extra_class=bool(tr_raw.get("extra_class", False)),
            epochs=int(tr_raw.get("epochs", 100)),
            batch_size=tr_raw.get("batch_size"),
            step_size=float(tr_raw.get("step_size", 0.1)),
            seed=int(tr_raw.get("seed", 0)),
            outliers=outliers,
        )
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc
    k = int(train_b.labels.max()) + 1
    net0 = shallow.init_net(
        train_b.dim, k, hidden=net_cfg.get("hidden"),
        seed=int(net_cfg.get("seed", 0)), extra_class=tcfg.extra_class,
    )
    result = shallow.train(net0, train_b, tcfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("w_hidden", "b_hidden", "w_out", "b_out"):
        param = getattr(result.net, name)
        if param is not None:
            save_tensor(TensorF32(param.astype(np.float32)), out / f"{name}.oodt")
    summary = {
        "loss_trace": list(result.loss_trace),
        "heldout_accuracy": shallow.accuracy(
            result.net, heldout_b.features.data, heldout_b.labels
        ),
    }
    _write_atomic(out / "train_summary.json", _json_dumps(summary))
    print(f"wrote checkpoints and summary to {out}")
    return 0


def _cmd_oe_tradeoff(args) -> int:
    results = []
    wins = 0
    for s in range(args.seeds):
        data = shallow.make_oe_tradeoff_data(seed=1000 + s)
        erm_cfg = shallow.TrainConfig(
            loss="ce", epochs=args.epochs, step_size=args.step_size, seed=s
        )
        oe_cfg = shallow.TrainConfig(
            loss="ce_plus_oe", oe_weight=args.alpha, outliers=data.exposure,
            epochs=args.epochs, step_size=args.step_size, seed=s,
        )
        rep = shallow.oe_tradeoff_experiment(erm_cfg, oe_cfg, data, init_seed=s)
        sign_ok = (
            rep.oe_detection_auroc >= rep.erm_detection_auroc
            and rep.oe_shift_accuracy <= rep.erm_shift_accuracy
        )
        wins += int(sign_ok)
        results.append({**rep.to_dict(), "seed": s, "tradeoff_sign": sign_ok})
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(
        out / "oe_tradeoff.json",
        _json_dumps({"runs": results, "tradeoff_sign_count": wins,
                     "seeds": args.seeds, "alpha": args.alpha}),
    )
    print(f"tradeoff sign held in {wins}/{args.seeds} seeds; "
          f"wrote {out / 'oe_tradeoff.json'}")
    return 0


def _cmd_kplus1(args) -> int:
    from .metrics import auroc as _auroc
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    n = args.n_per_class

    def blob(center, count):
        return center + gen.standard_normal((count, 2))

    train_f = np.concatenate([blob((-4.0, 0.0), n), blob((4.0, 0.0), n)])
    train = DatasetBundle(TensorF32(train_f), labels=np.repeat([0, 1], n),
                          split_tag="train")
    exposure = DatasetBundle(TensorF32(blob((0.0, 6.0), n)), split_tag="ood")
    heldout = np.concatenate([blob((-4.0, 0.0), n), blob((4.0, 0.0), n)])
    near = blob((0.5, 6.0), n)
    inside = blob((4.0, 0.0), n)

    cfg = shallow.TrainConfig(loss="ce", extra_class=True, outliers=exposure,
                              epochs=args.epochs, step_size=0.5, seed=args.seed)
    net0 = shallow.init_net(2, 2, hidden=None, seed=args.seed, extra_class=True)
    net = shallow.train(net0, train, cfg).net
    id_scores = shallow.kplus1_detect(net, heldout)
    report = {
        "near_cluster_auroc": _auroc(id_scores, shallow.kplus1_detect(net, near)),
        "in_id_cluster_auroc": _auroc(id_scores, shallow.kplus1_detect(net, inside)),
    }
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "kplus1.json", _json_dumps(report))
    print(_json_dumps(report).strip())
    return 0


def _cmd_laplace_demo(args) -> int:
    spec = SynthSpec(
        n_per_class=2,
        dim=2,
        class_means=np.array([[-3.0, 0.0], [3.0, 0.0], [0.0, 3.0]]),
        shared_cov_spec=CovPlanted(signal_dims=2, signal_gap=6.0, noise_scale=1.0),
        seed=args.seed,
    )
    n_grid = [int(n) for n in args.n_grid.split(",")]
    rows = lap.contraction_experiment(
        spec, n_grid, prior_precision=args.prior_precision,
        mc_samples=args.mc_samples, seed=args.seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["n_train,mean_epistemic_ood,auroc_epistemic"] + [
        f"{r.n_train},{r.mean_epistemic_ood!r},{r.auroc_epistemic!r}" for r in rows
    ]
    _write_atomic(out / "contraction.csv", "\n".join(lines) + "\n")

    pool_spec = SynthSpec(
        n_per_class=max(n_grid) // 3 + 1, dim=2, class_means=spec.class_means,
        shared_cov_spec=spec.shared_cov_spec, seed=args.seed,
    )
    train, heldout, _ = synth_dataset(pool_spec)
    theta = lap.fit_map(train, args.prior_precision, n_classes=3)
    post = lap.laplace_fit(theta, train, args.prior_precision)
    grid = lap.msp_grid_2d(post, heldout.features.data)
    glines = ["u,v,msp"] + [f"{g['u']!r},{g['v']!r},{g['msp']!r}" for g in grid]
    _write_atomic(out / "msp_grid.csv", "\n".join(glines) + "\n")
    print(f"wrote {out / 'contraction.csv'} and {out / 'msp_grid.csv'}")
    return 0


def _cmd_toy1d(args) -> int:
    cfg = toy.Toy1dConfig(n_mc=args.n_mc, seed=args.seed)
    mu_grid = [float(m) for m in args.mu_grid.split(",")]
    rows = toy.toy1d_sweep(cfg, mu_grid)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["mu,mean_id_loglik,kl_to_truth,auroc"] + [
        f"{r.mu!r},{r.mean_id_loglik!r},{r.kl_to_truth!r},{r.auroc!r}" for r in rows
    ]
    _write_atomic(out / "toy1d.csv", "\n".join(lines) + "\n")
    print(f"wrote {out / 'toy1d.csv'}")
    return 0


def _cmd_gmm_interp(args) -> int:
    stds = [args.wide_std] * args.wide_dims + [1.0] * (args.dim - args.wide_dims)
    spec = SynthSpec(
        n_per_class=args.n_per_class, dim=args.dim,
        class_means=np.zeros((1, args.dim)),
        shared_cov_spec=CovDiagonal(stds=tuple(stds)), seed=args.seed,
    )
    train, heldout, _ = synth_dataset(spec)
    offset = np.zeros(args.dim)
    offset[0] = args.offset
    ood = heldout.features.data.astype(np.float64) + offset

    model = fit_gaussian_class_model(train, shrinkage=args.shrinkage)
    t_grid = tuple(float(t) for t in args.t_grid.split(","))
    cfg = toy.GmmInterpConfig(
        t_grid=t_grid, base_model=model,
        id_heldout=heldout.features.data.astype(np.float64), ood=ood,
    )
    rows = toy.gmm_interp_experiment(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["t,mean_id_loglik,auroc"] + [
        f"{r.t!r},{r.mean_id_loglik!r},{r.auroc!r}" for r in rows
    ]
    _write_atomic(out / "gmm_interp.csv", "\n".join(lines) + "\n")
    print(f"wrote {out / 'gmm_interp.csv'}")
    return 0


def _cmd_typicality(args) -> int:
    feats = load_tensor(args.features).data.astype(np.float64)
    scores = toy.typicality_scores(feats, args.mode)
    save_tensor(TensorF32(scores.astype(np.float32)), args.out)
    print(f"wrote {scores.size} scores to {args.out}")
    return 0


# --- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodlens",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"reports.csv columns: {CSV_COLUMNS}",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="SynthSpec JSON file")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("score", help="score one eval set with one method")
    p.add_argument("--method", required=True, choices=KNOWN_METHODS)
    p.add_argument("--train-features", required=True)
    p.add_argument("--train-labels")
    p.add_argument("--train-logits")
    p.add_argument("--eval-features", required=True)
    p.add_argument("--eval-logits")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--shrinkage", type=float, default=1e-3)
    p.add_argument("--vim-dim", type=int, default=None)
    p.add_argument("--hybrid-ref-split", default="train")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="run a full experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("decompose", help="oracle error decomposition")
    p.add_argument("--config", required=True)
    p.add_argument("--shrinkage", type=float, default=1e-3)
    p.add_argument("--k-grid", default="32,64,128,256")
    p.add_argument("--probe-l2", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("transfer", help="cross-OOD transfer matrix")
    p.add_argument("--train-features", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--ood", nargs="+", required=True)
    p.add_argument("-k", type=int, default=1)
    p.add_argument("--shrinkage", type=float, default=1e-3)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("train", help="train a shallow classifier")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("oe-tradeoff", help="exposure vs generalization runs")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--step-size", type=float, default=0.2)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_oe_tradeoff)

    p = sub.add_parser("kplus1", help="unseen-class locality demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-class", type=int, default=400)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_kplus1)

    p = sub.add_parser("laplace-demo", help="posterior contraction table")
    p.add_argument("--n-grid", default="50,500,5000")
    p.add_argument("--mc-samples", type=int, default=2000)
    p.add_argument("--prior-precision", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_laplace_demo)

    p = sub.add_parser("toy1d", help="1-D Gaussian model sweep")
    p.add_argument("--mu-grid", default="0,-1,-2,-4,-10")
    p.add_argument("--n-mc", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_toy1d)

    p = sub.add_parser("gmm-interp", help="covariance interpolation sweep")
    p.add_argument("--t-grid", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--wide-dims", type=int, default=3)
    p.add_argument("--wide-std", type=float, default=10.0)
    p.add_argument("--offset", type=float, default=25.0)
    p.add_argument("--n-per-class", type=int, default=40000)
    p.add_argument("--shrinkage", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gmm_interp)

    p = sub.add_parser("typicality", help="coarse typicality scores")
    p.add_argument("--features", required=True)
    p.add_argument("--mode", choices=("norm", "mean"), default="norm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_typicality)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OodlensError as exc:
        code = getattr(exc, "exit_code", None)
        if code is None:
            if isinstance(exc, (ConfigInvalid,)):
                code = 2
            elif isinstance(exc, MethodError):
                code = 4
            else:
                code = 3  # treat everything data-shaped as a data error
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return code


if __name__ == "__main__":
    sys.exit(main())
