"""Patch-based convolutional autoencoder and its full-image baseline twin.

A 64x64 range-Doppler image is cut into four 32x32 quadrants that pass
through one shared-weight autoencoder; the loss compares the input image with
the reassembled reconstruction. The baseline applies the same layer stack to
the whole 64x64 image.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dsp import RDI_SIZE, RangeDopplerImage
from .nn import (
    AdamState,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    TConv2D,
    Upsample2D,
    adam_step,
    bce_grad,
    bce_loss,
)
from .radar_sim import SceneLabel

log = logging.getLogger(__name__)

PATCH = 32
LATENT = 128
ENC_FILTERS = (16, 32, 64)
DEC_FILTERS = (64, 32, 16)
N_POOL = 3


class Position(enum.IntEnum):
    TL = 0
    TR = 1
    BL = 2
    BR = 3

    @property
    def origin(self) -> tuple[int, int]:
        return (PATCH * (self // 2), PATCH * (self % 2))


@dataclass
class Patch:
    pixels: np.ndarray
    position: Position

    def __post_init__(self):
        self.position = Position(self.position)
        if self.pixels.shape != (PATCH, PATCH):
            raise ValueError(f"patch must be {PATCH}x{PATCH}, got {self.pixels.shape}")


@dataclass
class LatentCode:
    values: np.ndarray
    position: Position | None = None

    def __post_init__(self):
        if self.values.shape != (LATENT,):
            raise ValueError(f"latent code must have length {LATENT}, got {self.values.shape}")


def split_patches(rdi) -> list[Patch]:
    """Quadrant tiling in TL, TR, BL, BR order."""
    x = rdi.pixels if isinstance(rdi, RangeDopplerImage) else np.asarray(rdi)
    if x.shape != (RDI_SIZE, RDI_SIZE):
        raise ValueError(f"expected a {RDI_SIZE}x{RDI_SIZE} image, got {x.shape}")
    return [Patch(x[r : r + PATCH, c : c + PATCH].copy(), p) for p in Position for r, c in [p.origin]]


def reassemble(patches: Sequence[Patch]) -> np.ndarray:
    positions = [Position(p.position) for p in patches]
    if sorted(positions) != list(Position):
        raise ValueError(f"need each of TL, TR, BL, BR exactly once, got {[p.name for p in positions]}")
    out = np.empty((RDI_SIZE, RDI_SIZE), dtype=np.result_type(*[p.pixels for p in patches]))
    for p in patches:
        r, c = p.position.origin
        out[r : r + PATCH, c : c + PATCH] = p.pixels
    return out


def to_patch_batch(images: np.ndarray) -> np.ndarray:
    """(B, 64, 64) -> (4B, 32, 32, 1), quadrants of each image contiguous in TL, TR, BL, BR order."""
    b = images.shape[0]
    return images.reshape(b, 2, PATCH, 2, PATCH).transpose(0, 1, 3, 2, 4).reshape(4 * b, PATCH, PATCH, 1)


def from_patch_batch(patches: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_patch_batch`."""
    b = patches.shape[0] // 4
    return patches.reshape(b, 2, 2, PATCH, PATCH).transpose(0, 1, 3, 2, 4).reshape(b, RDI_SIZE, RDI_SIZE)


# -- architecture -----------------------------------------------------------------


def encoder_net(input_size: int = PATCH) -> Sequential:
    layers = []
    c_in = 1
    for i, c_out in enumerate(ENC_FILTERS, start=1):
        layers += [Conv2D(f"enc.conv{i}", c_in, c_out), ReLU(), MaxPool2D()]
        c_in = c_out
    side = input_size >> N_POOL
    layers += [Flatten(), Dense("enc.dense", side * side * ENC_FILTERS[-1], LATENT)]
    return Sequential(layers)


def decoder_net(output_size: int = PATCH) -> Sequential:
    side = output_size >> N_POOL
    layers = [Dense("dec.dense", LATENT, side * side * ENC_FILTERS[-1]), Reshape(target=(side, side, ENC_FILTERS[-1]))]
    c_in = ENC_FILTERS[-1]
    for i, c_out in enumerate(DEC_FILTERS, start=1):
        layers += [TConv2D(f"dec.tconv{i}", c_in, c_out), ReLU(), Upsample2D()]
        c_in = c_out
    layers += [TConv2D("dec.tconv4", c_in, 1), Sigmoid()]
    return Sequential(layers)


def autoencoder_net(input_size: int = PATCH) -> Sequential:
    return Sequential(encoder_net(input_size).layers + decoder_net(input_size).layers)


def manifest(input_size: int = PATCH) -> dict[str, tuple[int, ...]]:
    return autoencoder_net(input_size).param_shapes()


def parameter_count(shapes: dict[str, tuple[int, ...]], prefix: str = "") -> int:
    return sum(int(np.prod(s)) for k, s in shapes.items() if k.startswith(prefix))


@dataclass
class ModelWeights:
    tensors: dict[str, np.ndarray]
    seed: int = 0
    epochs: int = 0

    @property
    def input_size(self) -> int:
        """32 for the patch model, 64 for the full-image baseline (inferred from enc.dense)."""
        n_in = self.tensors["enc.dense.kernel"].shape[0]
        side = int(round(np.sqrt(n_in / ENC_FILTERS[-1])))
        return side << N_POOL

    @property
    def is_patch_model(self) -> bool:
        return self.input_size == PATCH

    @property
    def has_decoder(self) -> bool:
        return any(k.startswith("dec.") for k in self.tensors)

    def encoder_only(self) -> "ModelWeights":
        return ModelWeights({k: v for k, v in self.tensors.items() if k.startswith("enc.")}, self.seed, self.epochs)

    def validate(self, require_decoder: bool = True) -> None:
        if "enc.dense.kernel" not in self.tensors:
            raise ValueError("weights lack enc.dense.kernel")
        expected = manifest(self.input_size)
        for name, shape in expected.items():
            if not require_decoder and name.startswith("dec."):
                continue
            if name not in self.tensors:
                raise ValueError(f"missing tensor {name}")
            if self.tensors[name].shape != shape:
                raise ValueError(f"tensor {name} has shape {self.tensors[name].shape}, manifest says {shape}")
        extra = set(self.tensors) - set(expected)
        if extra:
            raise ValueError(f"unexpected tensors {sorted(extra)}")


def init_weights(seed: int, input_size: int = PATCH) -> ModelWeights:
    """He-uniform for ReLU convolutions, Glorot-uniform for dense layers and the sigmoid output conv."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x1417,)))
    tensors = {}
    for name, shape in manifest(input_size).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape)
            continue
        if len(shape) == 4:
            fan_in, fan_out = 9 * shape[2], 9 * shape[3]
            glorot = name.startswith("dec.tconv4")
        else:
            fan_in, fan_out = shape
            glorot = True
        limit = np.sqrt(6.0 / (fan_in + fan_out)) if glorot else np.sqrt(6.0 / fan_in)
        tensors[name] = rng.uniform(-limit, limit, shape)
    return ModelWeights(tensors, seed=int(seed))


# -- inference ---------------------------------------------------------------------


def encode_batch(x: np.ndarray, weights: ModelWeights) -> np.ndarray:
    """(N, s, s) or (N, s, s, 1) images -> (N, 128) latents."""
    weights.validate(require_decoder=False)
    s = weights.input_size
    x = np.asarray(x, dtype=float).reshape(-1, s, s, 1)
    z, _ = encoder_net(s).forward(x, weights.tensors, keep_cache=False)
    return z


def decode_batch(z: np.ndarray, weights: ModelWeights) -> np.ndarray:
    """(N, 128) latents -> (N, s, s) reconstructions in (0, 1)."""
    weights.validate()
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != LATENT:
        raise ValueError(f"latents must be (N, {LATENT}), got {z.shape}")
    s = weights.input_size
    y, _ = decoder_net(s).forward(z, weights.tensors, keep_cache=False)
    return y[..., 0]


def encode(patch: Patch, weights: ModelWeights) -> LatentCode:
    return LatentCode(encode_batch(patch.pixels[None], weights)[0], patch.position)


def decode(latent: LatentCode, weights: ModelWeights) -> Patch:
    return Patch(decode_batch(latent.values[None], weights)[0], latent.position or Position.TL)


def reconstruct(images: np.ndarray, weights: ModelWeights) -> tuple[np.ndarray, np.ndarray]:
    """(B, 64, 64) -> (reconstructions (B, 64, 64), latents (B, q, 128)); q = 4 patch or 1 baseline."""
    images = np.asarray(images, dtype=float)
    if weights.is_patch_model:
        z = encode_batch(to_patch_batch(images), weights)
        recon = from_patch_batch(decode_batch(z, weights)[..., None])
        return recon, z.reshape(len(images), 4, LATENT)
    z = encode_batch(images, weights)
    return decode_batch(z, weights), z[:, None, :]


# -- training ------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_frames: int = 8
    lr: float = 1e-3
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_frames < 1:
            raise ValueError("epochs and batch_frames must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


class ProtocolError(ValueError):
    """Training data violates the ID-only protocol."""


@dataclass
class TrainResult:
    weights: ModelWeights
    history: list[float] = field(default_factory=list)


def _images_of(rdis) -> np.ndarray:
    if isinstance(rdis, np.ndarray):
        return rdis.astype(float, copy=False)
    labels = [r.label for r in rdis]
    if any(SceneLabel(lab) is not SceneLabel.ID_WALK for lab in labels):
        raise ProtocolError("training set contains OOD frames")
    return np.stack([r.pixels for r in rdis]).astype(float)


def epoch_order(seed: int, epoch: int, n: int, shuffle: bool = True) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x5EED, int(epoch)))).permutation(n)


def train_step(net: Sequential, params, images: np.ndarray, patch: bool) -> tuple[float, dict]:
    """Loss and gradients for a batch of (B, 64, 64) target images."""
    x = to_patch_batch(images) if patch else images[..., None]
    y, caches = net.forward(x, params)
    recon = from_patch_batch(y) if patch else y[..., 0]
    loss = bce_loss(recon, images)
    dy = bce_grad(recon, images)
    dy = to_patch_batch(dy) if patch else dy[..., None]
    grads, _ = net.backward(dy, caches, params)
    return loss, grads


def _fit(
    rdis,
    cfg: TrainConfig,
    patch: bool,
    callback: Callable[[int, float], None] | None = None,
) -> TrainResult:
    images = _images_of(rdis)
    if len(images) == 0:
        raise ValueError("training set is empty")
    size = PATCH if patch else RDI_SIZE
    weights = init_weights(cfg.seed, size)
    net = autoencoder_net(size)
    state = AdamState(lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        order = epoch_order(cfg.seed, epoch, len(images), cfg.shuffle)
        total = 0.0
        for start in range(0, len(order), cfg.batch_frames):
            batch = images[order[start : start + cfg.batch_frames]]
            loss, grads = train_step(net, weights.tensors, batch, patch)
            adam_step(weights.tensors, grads, state)
            total += loss * len(batch)
        history.append(total / len(images))
        log.info("epoch %d/%d mean loss %.6f", epoch + 1, cfg.epochs, history[-1])
        if callback is not None:
            callback(epoch, history[-1])
    weights.epochs = cfg.epochs
    return TrainResult(weights, history)


def train(train_rdis, cfg: TrainConfig = TrainConfig(), callback=None) -> TrainResult:
    """Train the patch autoencoder on ID images only."""
    return _fit(train_rdis, cfg, patch=True, callback=callback)


def train_baseline(train_rdis, cfg: TrainConfig = TrainConfig(), callback=None) -> TrainResult:
    """Train the same layer stack on whole 64x64 images."""
    return _fit(train_rdis, cfg, patch=False, callback=callback)


# -- serialization --------------------------------------------------------------------

WEIGHT_MAGIC = b"AEWT"
WEIGHT_VERSION = 1


class WeightFormatError(ValueError):
    pass


def weights_to_bytes(weights: ModelWeights, encoder_only: bool = False) -> bytes:
    w = weights.encoder_only() if encoder_only else weights
    w.validate(require_decoder=not encoder_only)
    order = [k for k in manifest(w.input_size) if k in w.tensors]
    out = [WEIGHT_MAGIC, struct.pack("<HQI", WEIGHT_VERSION, int(w.seed), len(order))]
    for name in order:
        arr = np.ascontiguousarray(w.tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def weights_from_bytes(data: bytes) -> ModelWeights:
    if data[:4] != WEIGHT_MAGIC:
        raise WeightFormatError("not a weight file (bad magic)")
    try:
        version, seed, count = struct.unpack_from("<HQI", data, 4)
        if version != WEIGHT_VERSION:
            raise WeightFormatError(f"unsupported weight file version {version}")
        pos = 4 + struct.calcsize("<HQI")
        tensors = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(dims)) * 4
            if pos + size > len(data):
                raise WeightFormatError(f"truncated tensor {name}")
            tensors[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=pos).astype(float).reshape(dims)
            pos += size
    except struct.error as exc:
        raise WeightFormatError(f"truncated weight file: {exc}") from exc
    if pos != len(data):
        raise WeightFormatError("trailing bytes after last tensor")
    weights = ModelWeights(tensors, seed=seed)
    try:
        weights.validate(require_decoder=weights.has_decoder)
    except (ValueError, KeyError) as exc:
        raise WeightFormatError(f"shape manifest mismatch: {exc}") from exc
    return weights


def save_weights(weights: ModelWeights, path, encoder_only: bool = False) -> int:
    data = weights_to_bytes(weights, encoder_only)
    Path(path).write_bytes(data)
    return len(data)


def load_weights(path) -> ModelWeights:
    return weights_from_bytes(Path(path).read_bytes())


def payload_bytes(weights: ModelWeights) -> int:
    """Bytes of float32 tensor data, headers excluded."""
    return 4 * sum(v.size for v in weights.tensors.values())
