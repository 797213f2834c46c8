"""Feature/logit extraction from torchvision classifiers into OODT files.

The penultimate representation is architecture-dependent, so each registry
entry names the classifier-head module explicitly; a forward hook on that
module captures its input as the feature vector while the full forward pass
yields the logits. Rows follow sorted file paths. Outputs are written in
the OODT binary format (magic "OODT", u32 version 1, u32 ndim, ndim x u64
little-endian extents, float32 row-major payload) plus a JSON manifest
carrying the model id, transform description, feature width, per-row paths,
sha256 checksums, and any per-file decode failures (which do not abort the
job).

Weight downloads may be unavailable; `pretrained=False` runs the same
architecture with seeded random initialization, which preserves every
shape/ordering/determinism property of the pipeline.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import models
from torchvision import transforms as tvt


class ExtractorError(Exception):
    pass


class ModelUnavailable(ExtractorError):
    """Weights could not be constructed or downloaded."""


class DecodeError(ExtractorError):
    """A single image failed to decode (recorded, not fatal)."""


class EmptyInput(ExtractorError):
    """No decodable images in the input directory."""


_IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp"}

# classifier-head attribute per architecture; the hook captures its input
_REGISTRY = {
    "resnet18": (models.resnet18, "fc", 512),
    "resnet50": (models.resnet50, "fc", 2048),
    "vit_b_16": (models.vit_b_16, "heads", 768),
}


def registry_entries() -> dict[str, int]:
    """Model id -> documented penultimate feature width."""
    return {name: dim for name, (_, _, dim) in _REGISTRY.items()}


@dataclass(frozen=True)
class ExtractionJob:
    model_id: str
    image_dir: str
    out_prefix: str
    batch_size: int = 16
    device: str = "cpu"
    pretrained: bool = True
    init_seed: int = 0  # used only when pretrained=False

    def __post_init__(self):
        if self.model_id not in _REGISTRY:
            raise ModelUnavailable(
                f"unknown model {self.model_id!r}; known: {sorted(_REGISTRY)}"
            )
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _default_transform():
    return tvt.Compose(
        [
            tvt.Resize(256),
            tvt.CenterCrop(224),
            tvt.ToTensor(),
            tvt.Normalize(
                mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]
            ),
        ]
    )


def _load_model(job: ExtractionJob):
    ctor, head_attr, feat_dim = _REGISTRY[job.model_id]
    if job.pretrained:
        try:
            weights = models.get_model_weights(job.model_id).DEFAULT
            model = ctor(weights=weights)
            transform = weights.transforms()
            transform_desc = repr(transform)
        except Exception as exc:  # download/refresh failures included
            raise ModelUnavailable(
                f"pretrained weights for {job.model_id} unavailable: {exc}"
            ) from exc
    else:
        torch.manual_seed(job.init_seed)
        model = ctor(weights=None)
        transform = _default_transform()
        transform_desc = (
            "Resize(256) -> CenterCrop(224) -> ToTensor -> "
            "Normalize(ImageNet mean/std)"
        )
    model.eval()
    model.to(job.device)
    return model, getattr(model, head_attr), feat_dim, transform, transform_desc


def _save_oodt(arr: np.ndarray, path: Path) -> None:
    arr = np.ascontiguousarray(arr.astype(np.float32))
    header = b"OODT" + struct.pack("<II", 1, arr.ndim)
    header += b"".join(struct.pack("<Q", d) for d in arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype("<f4", copy=False).tobytes(order="C"))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass(frozen=True)
class ExtractionResult:
    features_path: Path
    logits_path: Path
    manifest_path: Path
    n_rows: int
    feature_dim: int
    failures: tuple[str, ...] = field(default=())


def extract(job: ExtractionJob) -> ExtractionResult:
    """Run the model over every decodable image and write the three outputs."""
    image_dir = Path(job.image_dir)
    if not image_dir.is_dir():
        raise EmptyInput(f"{image_dir} is not a directory")
    paths = sorted(
        p for p in image_dir.iterdir()
        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )

    model, head, feat_dim, transform, transform_desc = _load_model(job)

    captured: list[torch.Tensor] = []

    def hook(_module, inputs, _output):
        captured.append(inputs[0].detach())

    handle = head.register_forward_hook(hook)

    rows, feature_rows, logit_rows, failures = [], [], [], []
    batch, batch_paths = [], []

    def flush():
        if not batch:
            return
        stacked = torch.stack(batch).to(job.device)
        captured.clear()
        with torch.no_grad():
            logits = model(stacked)
        feats = captured[0]
        feature_rows.append(feats.reshape(feats.shape[0], -1).cpu().numpy())
        logit_rows.append(logits.cpu().numpy())
        rows.extend(batch_paths)
        batch.clear()
        batch_paths.clear()

    try:
        for path in paths:
            try:
                with Image.open(path) as img:
                    tensor = transform(img.convert("RGB"))
            except Exception as exc:
                failures.append(f"{path.name}: {exc}")
                continue
            batch.append(tensor)
            batch_paths.append(path.name)
            if len(batch) == job.batch_size:
                flush()
        flush()
    finally:
        handle.remove()

    if not rows:
        raise EmptyInput(f"no decodable images in {image_dir}")

    features = np.concatenate(feature_rows)
    logits = np.concatenate(logit_rows)
    if features.shape[1] != feat_dim:
        raise ExtractorError(
            f"hook captured width {features.shape[1]}, registry says {feat_dim}"
        )

    prefix = Path(job.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    features_path = prefix.with_name(prefix.name + "_features.oodt")
    logits_path = prefix.with_name(prefix.name + "_logits.oodt")
    manifest_path = prefix.with_name(prefix.name + "_manifest.json")
    _save_oodt(features, features_path)
    _save_oodt(logits, logits_path)

    manifest = {
        "model_id": job.model_id,
        "pretrained": job.pretrained,
        "transform": transform_desc,
        "feature_dim": int(features.shape[1]),
        "n_classes": int(logits.shape[1]),
        "rows": rows,
        "failures": failures,
        "checksums": {
            "features": _sha256(features_path),
            "logits": _sha256(logits_path),
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    return ExtractionResult(
        features_path=features_path,
        logits_path=logits_path,
        manifest_path=manifest_path,
        n_rows=len(rows),
        feature_dim=int(features.shape[1]),
        failures=tuple(failures),
    )
