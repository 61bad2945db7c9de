"""Reconstruction and latent-energy OOD scores, threshold calibration.

Both scores follow the convention higher == more OOD.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .patch_ae import LATENT, ModelWeights, reconstruct, encode_batch, to_patch_batch
from .radar_sim import SceneLabel


class ScoreKind(str, enum.Enum):
    REC = "REC"
    ENERGY = "ENERGY"


@dataclass(frozen=True)
class ScoreRecord:
    frame_id: int
    label: SceneLabel
    s_rec: float
    s_energy: float

    @property
    def is_id(self) -> bool:
        return SceneLabel(self.label) is SceneLabel.ID_WALK

    def score(self, kind: ScoreKind) -> float:
        return self.s_rec if ScoreKind(kind) is ScoreKind.REC else self.s_energy


@dataclass(frozen=True)
class Threshold:
    value: float
    score_kind: ScoreKind
    calibration_quantile: float


def logsumexp(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    m = v.max(axis=axis, keepdims=True)
    return (np.log(np.exp(v - m).sum(axis=axis, keepdims=True)) + m).squeeze(axis)


def energy_from_latents(latents: np.ndarray) -> np.ndarray:
    """(..., q, k) per-patch latents -> LSE over k of their element-wise sum over q."""
    latents = np.asarray(latents, dtype=float)
    if latents.shape[-1] != LATENT:
        raise ValueError(f"latent length must be {LATENT}, got {latents.shape[-1]}")
    if not np.all(np.isfinite(latents)):
        raise FloatingPointError("non-finite latent code")
    return logsumexp(latents.sum(axis=-2))


def _images(rdis) -> np.ndarray:
    if isinstance(rdis, np.ndarray):
        x = rdis
    else:
        x = np.stack([getattr(r, "pixels", r) for r in rdis])
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != (64, 64):
        raise ValueError(f"expected 64x64 images, got {x.shape[1:]}")
    return x


def score_rec_batch(images: np.ndarray, weights: ModelWeights) -> np.ndarray:
    x = _images(images)
    recon, _ = reconstruct(x, weights)
    # patches tile the image, so the mean of per-patch MSEs is the full-image MSE
    return np.mean((recon - x) ** 2, axis=(1, 2))


def score_energy_batch(images: np.ndarray, weights: ModelWeights) -> np.ndarray:
    """Needs only the encoder tensors."""
    x = _images(images)
    if weights.is_patch_model:
        z = encode_batch(to_patch_batch(x), weights).reshape(len(x), 4, LATENT)
    else:
        z = encode_batch(x, weights)[:, None, :]
    return energy_from_latents(z)


def score_rec(rdi, weights: ModelWeights) -> float:
    return float(score_rec_batch(rdi, weights)[0])


def score_energy(rdi, weights: ModelWeights) -> float:
    return float(score_energy_batch(rdi, weights)[0])


def score_dataset(rdis: Sequence, weights: ModelWeights, chunk: int = 64) -> list[ScoreRecord]:
    """Both scores for every image, in input order."""
    records: list[ScoreRecord] = []
    for start in range(0, len(rdis), chunk):
        part = rdis[start : start + chunk]
        x = _images(part)
        recon, z = reconstruct(x, weights)
        s_rec = np.mean((recon - x) ** 2, axis=(1, 2))
        s_energy = energy_from_latents(z)
        for r, a, b in zip(part, s_rec, s_energy):
            records.append(ScoreRecord(int(r.frame_id), SceneLabel(r.label), float(a), float(b)))
    return records


def calibrate_threshold(id_validation_scores, quantile: float = 0.95, kind: ScoreKind = ScoreKind.ENERGY) -> Threshold:
    """Linear-interpolated empirical quantile of ID validation scores."""
    scores = np.asarray(list(id_validation_scores), dtype=float)
    if scores.size == 0:
        raise ValueError("cannot calibrate on an empty score list")
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    return Threshold(float(np.quantile(scores, quantile, method="linear")), ScoreKind(kind), float(quantile))


def classify(score: float, threshold: Threshold) -> str:
    """'ID' iff score < tau, else 'OOD'."""
    return "ID" if score < threshold.value else "OOD"
