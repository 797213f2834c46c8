"""Tensor containers, on-disk formats, and the synthetic dataset generator.

On-disk binary layout ("OODT", version 1, all little-endian):

    bytes 0..3    magic b"OODT"
    bytes 4..7    u32 version = 1
    bytes 8..11   u32 ndim (1 or 2)
    then          ndim x u64 extents
    then          prod(extents) x f32 payload, row-major

Values are stored as 32-bit floats; all downstream statistics accumulate in
64-bit. A CSV fallback (header ``dim0,dim1,...``, one sample per row) is
provided for interop. Labels travel as 1-D OODT tensors of exact small
integers.

Random number generation throughout the toolkit uses numpy's PCG64 stream
(seeded, platform-independent); the algorithm name is recorded in run
manifests as ``numpy-PCG64``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    DegenerateSpec,
    IoFailure,
    MagicMismatch,
    NonFiniteValue,
    TruncatedPayload,
)

MAGIC = b"OODT"
VERSION = 1
RNG_ALGORITHM = "numpy-PCG64"


def rng_from_seed(seed: int) -> np.random.Generator:
    """The toolkit-wide generator: PCG64 seeded through a SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class TensorF32:
    """A finite float32 tensor of rank 1 or 2, row-major.

    Raises NonFiniteValue on construction if any entry is NaN/Inf.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim not in (1, 2):
            raise ValueError(f"tensor rank must be 1 or 2, got {arr.ndim}")
        arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            flat = arr.reshape(-1)
            bad = int(np.flatnonzero(~np.isfinite(flat))[0])
            raise NonFiniteValue(f"non-finite value at flat index {bad}")
        object.__setattr__(self, "data", arr)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorF32):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.data, other.data)


def save_tensor(t: TensorF32, path: Union[str, Path]) -> None:
    """Write ``t`` in the OODT binary format. Rejects non-finite data."""
    if not isinstance(t, TensorF32):
        t = TensorF32(np.asarray(t))  # re-validates finiteness
    header = MAGIC + struct.pack("<II", VERSION, t.ndim)
    header += b"".join(struct.pack("<Q", d) for d in t.dims)
    payload = t.data.astype("<f4", copy=False).tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_tensor(path: Union[str, Path]) -> TensorF32:
    """Read an OODT file back into a TensorF32, validating as it goes."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(raw) < 4 or raw[:4] != MAGIC:
        raise MagicMismatch(f"{path}: bad magic at offset 0")
    if len(raw) < 12:
        raise TruncatedPayload(f"{path}: header truncated at offset {len(raw)}")
    version, ndim = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise MagicMismatch(f"{path}: unsupported version {version} at offset 4")
    if ndim not in (1, 2):
        raise MagicMismatch(f"{path}: invalid ndim {ndim} at offset 8")

    dims_end = 12 + 8 * ndim
    if len(raw) < dims_end:
        raise TruncatedPayload(f"{path}: dims truncated at offset {len(raw)}")
    dims = struct.unpack_from("<" + "Q" * ndim, raw, 12)

    count = 1
    for d in dims:
        count *= d
    payload_end = dims_end + 4 * count
    if len(raw) < payload_end:
        raise TruncatedPayload(
            f"{path}: payload ends at offset {len(raw)}, need {payload_end}"
        )

    flat = np.frombuffer(raw, dtype="<f4", count=count, offset=dims_end)
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        offset = dims_end + 4 * int(bad[0])
        raise NonFiniteValue(f"{path}: non-finite value at offset {offset}")
    return TensorF32(flat.reshape(dims).copy())


def save_csv(t: TensorF32, path: Union[str, Path]) -> None:
    """CSV fallback: header dim0,dim1,..., one sample per row."""
    mat = t.data if t.ndim == 2 else t.data.reshape(-1, 1)
    header = ",".join(f"dim{j}" for j in range(mat.shape[1]))
    try:
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in mat:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_csv(path: Union[str, Path]) -> TensorF32:
    """Read the CSV fallback format; always returns a rank-2 tensor."""
    try:
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("dim0"):
                raise MagicMismatch(f"{path}: CSV header missing dim0 column")
            rows = [
                [float(v) for v in line.split(",")]
                for line in fh.read().splitlines()
                if line
            ]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return TensorF32(np.asarray(rows, dtype=np.float32).reshape(len(rows), -1))


def labels_to_tensor(labels: np.ndarray) -> TensorF32:
    """Labels ride in OODT files as exact small integers in f32."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D vector")
    as_f32 = labels.astype(np.float32)
    if not np.array_equal(as_f32.astype(np.int64), labels.astype(np.int64)):
        raise ValueError("labels do not survive the f32 round trip")
    return TensorF32(as_f32)


def tensor_to_labels(t: TensorF32) -> np.ndarray:
    if t.ndim != 1:
        raise ValueError("label tensor must be 1-D")
    rounded = np.rint(t.data)
    if not np.array_equal(rounded, t.data):
        raise ValueError("label tensor holds non-integer values")
    return rounded.astype(np.int64)


@dataclass(frozen=True)
class DatasetBundle:
    """Features plus optional logits/labels for one split.

    Row counts must agree across present members; the ood split never
    carries labels (there is no ID class to name).
    """

    features: TensorF32
    logits: Optional[TensorF32] = None
    labels: Optional[np.ndarray] = None
    split_tag: str = "train"

    def __post_init__(self):
        if self.split_tag not in ("train", "heldout", "ood"):
            raise ValueError(f"unknown split_tag {self.split_tag!r}")
        if self.features.ndim != 2:
            raise ValueError("features must be rank 2 (N x D)")
        n = self.features.dims[0]
        if self.logits is not None:
            if self.logits.ndim != 2 or self.logits.dims[0] != n:
                raise ValueError("logits row count disagrees with features")
        if self.labels is not None:
            if self.split_tag == "ood":
                raise ValueError("ood split must not carry labels")
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError("labels length disagrees with features")
            object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return self.features.dims[0]

    @property
    def dim(self) -> int:
        return self.features.dims[1]

    def with_logits(self, logits: TensorF32) -> "DatasetBundle":
        return DatasetBundle(self.features, logits, self.labels, self.split_tag)


# --- synthetic data ----------------------------------------------------------

@dataclass(frozen=True)
class CovIdentity:
    kind: str = "identity"


@dataclass(frozen=True)
class CovDiagonal:
    stds: tuple[float, ...]
    kind: str = "diagonal"


@dataclass(frozen=True)
class CovPlanted:
    """Signal in the first ``signal_dims`` coordinates, noise elsewhere.

    ID and OOD mixture means end up exactly ``signal_gap`` apart (Euclidean),
    the offset spread evenly over the first ``signal_dims`` coordinates, which
    keep unit noise; the remaining coordinates get i.i.d. noise of scale
    ``noise_scale`` in both populations.
    """

    signal_dims: int
    signal_gap: float
    noise_scale: float
    kind: str = "planted"


CovSpec = Union[CovIdentity, CovDiagonal, CovPlanted]


@dataclass(frozen=True)
class SynthSpec:
    n_per_class: int
    dim: int
    class_means: np.ndarray  # K x D
    shared_cov_spec: CovSpec = CovIdentity()
    seed: int = 0

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.class_means, dtype=np.float64))
        if means.shape[1] != self.dim:
            raise DegenerateSpec(
                f"class_means width {means.shape[1]} != dim {self.dim}"
            )
        object.__setattr__(self, "class_means", means)
        if self.n_per_class < 2:
            raise DegenerateSpec(f"n_per_class must be >= 2, got {self.n_per_class}")
        spec = self.shared_cov_spec
        if isinstance(spec, CovPlanted):
            if spec.signal_dims > self.dim:
                raise DegenerateSpec(
                    f"signal_dims {spec.signal_dims} exceeds dim {self.dim}"
                )
            if spec.signal_gap < 0:
                raise DegenerateSpec("signal_gap must be >= 0")
            if spec.noise_scale <= 0:
                raise DegenerateSpec("noise_scale must be > 0")
        elif isinstance(spec, CovDiagonal):
            if len(spec.stds) != self.dim:
                raise DegenerateSpec("diagonal cov needs one std per dimension")
            if any(s <= 0 for s in spec.stds):
                raise DegenerateSpec("diagonal stds must be > 0")

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]


def _noise_stds(spec: SynthSpec) -> np.ndarray:
    cov = spec.shared_cov_spec
    if isinstance(cov, CovIdentity):
        return np.ones(spec.dim)
    if isinstance(cov, CovDiagonal):
        return np.asarray(cov.stds, dtype=np.float64)
    stds = np.full(spec.dim, cov.noise_scale, dtype=np.float64)
    stds[: cov.signal_dims] = 1.0
    return stds


def _ood_offset(spec: SynthSpec) -> np.ndarray:
    offset = np.zeros(spec.dim)
    cov = spec.shared_cov_spec
    if isinstance(cov, CovPlanted) and cov.signal_dims > 0:
        offset[: cov.signal_dims] = cov.signal_gap / np.sqrt(cov.signal_dims)
    return offset


def synth_dataset(
    spec: SynthSpec,
) -> tuple[DatasetBundle, DatasetBundle, DatasetBundle]:
    """Draw (train, heldout, ood) bundles; a pure function of its argument
    (seed included).

    Train and heldout are disjoint draws from the same ID mixture. The OOD
    split draws from the same class mixture shifted by the planted offset
    (zero offset for identity/diagonal covariances and for signal_dims = 0,
    in which case ID and OOD are identically distributed).
    """
    stds = _noise_stds(spec)
    offset = _ood_offset(spec)
    children = np.random.SeedSequence(spec.seed).spawn(3)
    k, n, d = spec.n_classes, spec.n_per_class, spec.dim

    def draw(seq, shift, tag):
        gen = np.random.Generator(np.random.PCG64(seq))
        feats = np.empty((k * n, d))
        labels = np.repeat(np.arange(k), n)
        for c in range(k):
            noise = gen.standard_normal((n, d)) * stds
            feats[c * n : (c + 1) * n] = spec.class_means[c] + shift + noise
        if tag == "ood":
            return DatasetBundle(TensorF32(feats), split_tag=tag)
        return DatasetBundle(TensorF32(feats), labels=labels, split_tag=tag)

    train = draw(children[0], 0.0, "train")
    heldout = draw(children[1], 0.0, "heldout")
    ood = draw(children[2], offset, "ood")
    return train, heldout, ood
