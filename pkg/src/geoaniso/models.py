"""NF and NV network estimators: definitions, training, inference, persistence.

NF reads a complete 16 x 16 field; NV reads the 13 x 13 semivariogram map of
any grid.  Targets (alpha, lambda, theta) are standardized with training-label
statistics stored in the artifact, and predictions are mapped back without any
clamping.

Model file layout (all integers little-endian)::

    b"GEOANISO"              8-byte magic
    uint32 version           FORMAT_VERSION
    uint64 header_len        length of the UTF-8 JSON header
    header                   spec, normalizer, input kind, manifest
    float64 weights          every layer's W then b, in layer order, '<f8'
    32 bytes                 SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChecksumError, DomainError, ModelFormatError, TrainingDivergedError
from .grids import FieldGrid
from .nn import AdamW, NetworkSpec, backward, conv2d, dense, flatten, forward, init_params, mae_loss, param_shapes
from .simulate import rng_for
from .variogram import NV_MAX_LAG, fill_missing_lags, variogram_maps

logger = logging.getLogger(__name__)

MAGIC = b"GEOANISO"
FORMAT_VERSION = 1
INPUT_KINDS = {"nf": "raw-field-16x16", "nv": "varmap-13x13"}


def nf_spec() -> NetworkSpec:
    return NetworkSpec(
        (16, 16, 1),
        (
            conv2d(128, 9),
            conv2d(256, 5),
            conv2d(512, 4),
            conv2d(1024, 1),
            flatten(),
            dense(300),
            dense(3, "linear"),
        ),
    )


def nv_spec() -> NetworkSpec:
    return NetworkSpec(
        (13, 13, 1),
        (
            conv2d(128, 8),
            conv2d(128, 4),
            conv2d(256, 3),
            conv2d(512, 1),
            flatten(),
            dense(300),
            dense(3, "linear"),
        ),
    )


def spec_for(kind: str) -> NetworkSpec:
    if kind == "nf":
        return nf_spec()
    if kind == "nv":
        return nv_spec()
    raise DomainError(f"unknown network kind {kind!r} (expected 'nf' or 'nv')")


@dataclass(frozen=True)
class TargetNormalizer:
    mean: tuple
    std: tuple

    @classmethod
    def fit(cls, labels: np.ndarray) -> TargetNormalizer:
        labels = np.asarray(labels, dtype=float)
        mean = labels.mean(axis=0)
        std = labels.std(axis=0)
        if np.any(std <= 0.0):
            raise DomainError("every target needs positive spread to be standardized")
        return cls(tuple(float(v) for v in mean), tuple(float(v) for v in std))

    def normalize(self, y):
        return (np.asarray(y, dtype=float) - np.asarray(self.mean)) / np.asarray(self.std)

    def denormalize(self, y):
        return np.asarray(y, dtype=float) * np.asarray(self.std) + np.asarray(self.mean)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 500
    learning_rate: float = 0.01
    weight_decay: float = 0.01
    augment: bool | None = None  # None -> on for NF, off for NV
    seed: int = 0
    validation_fraction: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise DomainError("validation_fraction must lie in [0, 1)")

    def augment_for(self, kind: str) -> bool:
        return (kind == "nf") if self.augment is None else self.augment


@dataclass
class ModelArtifact:
    kind: str
    spec: NetworkSpec
    params: list
    normalizer: TargetNormalizer
    manifest: dict = field(default_factory=dict)

    @property
    def input_kind(self) -> str:
        return INPUT_KINDS[self.kind]


@dataclass(frozen=True)
class NetworkEstimate:
    alpha: float
    lam: float
    theta: float

    @property
    def out_of_domain(self) -> bool:
        return not (0.0 <= self.alpha < math.pi and 0.0 < self.lam <= 1.0 and self.theta > 0.0)

    @property
    def triple(self) -> tuple[float, float, float]:
        return (self.alpha, self.lam, self.theta)


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------


def nv_images(fields: np.ndarray, missing: np.ndarray | None = None) -> np.ndarray:
    """13 x 13 map images for a stack of fields, shape (N, 13, 13)."""
    g, c = variogram_maps(fields, missing, NV_MAX_LAG)
    return fill_missing_lags(g, c)


def prepare_inputs(kind: str, fields: np.ndarray, chunk: int = 2000) -> np.ndarray:
    """Network-ready tensor (N, H, W, 1) from raw fields (N, h, w)."""
    fields = np.asarray(fields, dtype=float)
    if kind == "nf":
        if fields.shape[1:] != (16, 16):
            raise DomainError(f"NF expects 16x16 fields, got {fields.shape[1:]}")
        return fields[..., None]
    if kind == "nv":
        out = [nv_images(fields[i:i + chunk]) for i in range(0, len(fields), chunk)]
        return np.concatenate(out)[..., None]
    raise DomainError(f"unknown network kind {kind!r}")


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _epoch_order(n: int, augment: bool, rng: np.random.Generator) -> np.ndarray:
    # indices >= n refer to the 180-degree rotated copy of sample (i - n)
    total = 2 * n if augment else n
    return rng.permutation(total)


def _gather(X: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n = len(X)
    out = X[idx % n]
    rot = idx >= n
    if rot.any():
        out[rot] = out[rot][:, ::-1, ::-1, :]
    return out


def train(inputs: np.ndarray, labels: np.ndarray, kind: str, config: TrainingConfig = TrainingConfig(),
          manifest: dict | None = None, callback=None) -> ModelArtifact:
    """Train an NF/NV network on prepared inputs (N, H, W, 1) and labels (N, 3).

    Each epoch visits a seeded permutation of the samples (plus their
    rotations when augmenting); the final partial batch is kept.
    ``callback(epoch, loss)`` is called after every epoch when given.
    """
    spec = spec_for(kind)
    X = np.asarray(inputs, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(X) == 0:
        raise DomainError("empty training set")
    if X.shape[1:] != spec.input_shape:
        raise DomainError(f"inputs have shape {X.shape[1:]}, {kind} expects {spec.input_shape}")
    if y.shape != (len(X), 3):
        raise DomainError("labels must have shape (N, 3)")

    n_val = int(round(config.validation_fraction * len(X)))
    split = rng_for(config.seed, 2).permutation(len(X))
    val_idx, tr_idx = np.sort(split[:n_val]), np.sort(split[n_val:])
    Xtr, ytr = X[tr_idx], y[tr_idx]

    normalizer = TargetNormalizer.fit(ytr)
    ytr_n = normalizer.normalize(ytr)
    params = init_params(spec, rng_for(config.seed, 0))
    opt = AdamW(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    shuffle_rng = rng_for(config.seed, 1)
    augment = config.augment_for(kind)

    losses, val_losses, seen = [], [], []
    for epoch in range(config.epochs):
        order = _epoch_order(len(Xtr), augment, shuffle_rng)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = _gather(Xtr, idx)
            yb = ytr_n[idx % len(Xtr)]
            out, cache = forward(spec, params, xb)
            loss, g = mae_loss(out, yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch + 1}")
            grads = backward(spec, params, cache, g)
            opt.step(params, grads)
            total += loss * len(idx)
        epoch_loss = total / len(order)
        losses.append(epoch_loss)
        seen.append(int(len(order)))
        if n_val:
            val_losses.append(mae_loss(predict_normalized(spec, params, X[val_idx]), normalizer.normalize(y[val_idx]))[0])
        logger.info("%s epoch %d/%d  loss %.5f", kind, epoch + 1, config.epochs, epoch_loss)
        if callback is not None:
            callback(epoch + 1, epoch_loss)

    info = {
        "training": {
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "weight_decay": config.weight_decay,
            "augment": augment,
            "seed": config.seed,
            "validation_fraction": config.validation_fraction,
            "n_train": int(len(Xtr)),
            "n_validation": int(n_val),
            "samples_per_epoch": seen,
            "loss_history": losses,
            "validation_loss_history": val_losses,
            "final_loss": losses[-1],
        }
    }
    if manifest:
        info.update(manifest)
    return ModelArtifact(kind, spec, params, normalizer, info)


def predict_normalized(spec: NetworkSpec, params: list, X: np.ndarray, batch: int = 1000) -> np.ndarray:
    return np.concatenate([forward(spec, params, X[i:i + batch])[0] for i in range(0, len(X), batch)])


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def estimate_from_input(artifact: ModelArtifact, x: np.ndarray) -> NetworkEstimate:
    """Estimate from one prepared network input of shape (H, W) or (H, W, 1)."""
    x = np.asarray(x, dtype=float).reshape((1,) + artifact.spec.input_shape)
    out, _ = forward(artifact.spec, artifact.params, x)
    a, l, t = artifact.normalizer.denormalize(out[0])
    return NetworkEstimate(float(a), float(l), float(t))


def estimate(artifact: ModelArtifact, field: FieldGrid) -> NetworkEstimate:
    """Raw (unclamped) estimate of (alpha, lambda, theta) for one field."""
    if artifact.kind == "nf":
        if field.shape != (16, 16):
            raise DomainError(f"NF needs a 16x16 field, got {field.shape}")
        if not field.complete:
            raise DomainError("NF cannot handle missing cells")
        return estimate_from_input(artifact, field.values)
    if field.n_observed < 2:
        raise DomainError("variogram map needs at least two observed cells")
    img = nv_images(field.values[None], field.missing[None])[0]
    return estimate_from_input(artifact, img)


def estimate_batch(artifact: ModelArtifact, fields: np.ndarray) -> np.ndarray:
    """Denormalized predictions (N, 3) for complete fields, computed per field.

    Each row equals :func:`estimate` on that field bitwise.
    """
    X = prepare_inputs(artifact.kind, fields)
    return np.array([estimate_from_input(artifact, x).triple for x in X])


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _header(artifact: ModelArtifact) -> dict:
    return {
        "kind": artifact.kind,
        "input_kind": artifact.input_kind,
        "spec": artifact.spec.to_dict(),
        "normalizer": {"mean": list(artifact.normalizer.mean), "std": list(artifact.normalizer.std)},
        "manifest": artifact.manifest,
    }


def to_bytes(artifact: ModelArtifact) -> bytes:
    header = json.dumps(_header(artifact), sort_keys=True, separators=(",", ":")).encode()
    blobs = [np.ascontiguousarray(a, dtype="<f8").tobytes() for p in artifact.params if p is not None for a in p]
    body = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(blobs)
    return body + hashlib.sha256(body).digest()


def save(artifact: ModelArtifact, path) -> None:
    Path(path).write_bytes(to_bytes(artifact))


def from_bytes(data: bytes) -> ModelArtifact:
    if len(data) < len(MAGIC) + 12 + 32 or data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a geoaniso model file (bad magic)")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("model file checksum mismatch (truncated or corrupted)")
    version, hlen = struct.unpack_from("<IQ", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    off = len(MAGIC) + 12
    header = json.loads(body[off:off + hlen].decode())
    off += hlen
    spec = NetworkSpec.from_dict(header["spec"])
    params = []
    for shp in param_shapes(spec):
        if shp is None:
            params.append(None)
            continue
        pair = []
        for s in shp:
            n = int(np.prod(s))
            if off + 8 * n > len(body):
                raise ModelFormatError("weight section shorter than the layer specs require")
            pair.append(np.frombuffer(body, dtype="<f8", count=n, offset=off).astype(float).reshape(s))
            off += 8 * n
        params.append(tuple(pair))
    if off != len(body):
        raise ModelFormatError("trailing bytes after weight section")
    norm = TargetNormalizer(tuple(header["normalizer"]["mean"]), tuple(header["normalizer"]["std"]))
    return ModelArtifact(header["kind"], spec, params, norm, header["manifest"])


def load(path) -> ModelArtifact:
    return from_bytes(Path(path).read_bytes())
