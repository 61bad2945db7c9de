"""Binary and text file formats shared by the pipeline stages.

RADC  raw ADC frames      magic, u16 version, u32 n_frames, u16 n_rx, u16 n_c, u16 n_s, u64 seed,
                          then per frame (u8 label, u64 scene seed, float32 samples)
RDIF  range-Doppler images magic, u16 version, u32 n_images,
                          then per image (u8 label, u32 frame_id, 64*64 float32 pixels)
Everything is little-endian and unpadded.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dsp import RDI_SIZE, RangeDopplerImage
from .radar_sim import AdcFrameSet, RadarConfig, SceneLabel
from .scoring import ScoreKind, ScoreRecord, Threshold

ADC_MAGIC = b"RADC"
RDI_MAGIC = b"RDIF"
VERSION = 1

_ADC_HEADER = struct.Struct("<4sHIHHHQ")
_RDI_HEADER = struct.Struct("<4sHI")


class FormatError(ValueError):
    """File does not match the expected format."""


def _adc_record_dtype(n_rx: int, n_c: int, n_s: int) -> np.dtype:
    return np.dtype([("label", "u1"), ("seed", "<u8"), ("samples", "<f4", (n_rx, n_c, n_s))])


def _rdi_record_dtype() -> np.dtype:
    return np.dtype([("label", "u1"), ("frame_id", "<u4"), ("pixels", "<f4", (RDI_SIZE, RDI_SIZE))])


# -- ADC ------------------------------------------------------------------------------


class AdcWriter:
    """Streams frame sets into a RADC file; the frame count is patched on close."""

    def __init__(self, path, config: RadarConfig, seed: int):
        self.path = Path(path)
        self.config = config
        self.seed = int(seed)
        self.count = 0
        self._dtype = _adc_record_dtype(*config.frame_shape)
        self._fh = open(self.path, "wb")
        self._fh.write(_ADC_HEADER.pack(ADC_MAGIC, VERSION, 0, *config.frame_shape, self.seed))

    def write(self, frames: AdcFrameSet) -> None:
        if frames.frames.shape[1:] != self.config.frame_shape:
            raise ValueError("frame dimensions do not match the file header")
        rec = np.zeros(len(frames), dtype=self._dtype)
        rec["label"] = frames.labels
        rec["seed"] = frames.scene_seeds
        rec["samples"] = frames.frames
        self._fh.write(rec.tobytes())
        self.count += len(frames)

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(0)
        self._fh.write(_ADC_HEADER.pack(ADC_MAGIC, VERSION, self.count, *self.config.frame_shape, self.seed))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_adc(path, frames: AdcFrameSet) -> None:
    with AdcWriter(path, frames.config, frames.seed) as w:
        w.write(frames)


def read_adc(path, config: RadarConfig | None = None) -> AdcFrameSet:
    """Memory-maps the sample payload; frames come back as float32."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_ADC_HEADER.size)
    if len(head) < _ADC_HEADER.size or head[:4] != ADC_MAGIC:
        raise FormatError(f"{path}: not a RADC file")
    _, version, n, n_rx, n_c, n_s, seed = _ADC_HEADER.unpack(head)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported RADC version {version}")
    dtype = _adc_record_dtype(n_rx, n_c, n_s)
    if path.stat().st_size != _ADC_HEADER.size + n * dtype.itemsize:
        raise FormatError(f"{path}: size does not match {n} frames of {n_rx}x{n_c}x{n_s}")
    if config is None:
        config = RadarConfig(n_rx=n_rx, n_c=n_c, n_s=n_s)
    elif config.frame_shape != (n_rx, n_c, n_s):
        raise FormatError(f"{path}: frame shape {(n_rx, n_c, n_s)} does not match config {config.frame_shape}")
    if n == 0:
        rec = np.zeros(0, dtype=dtype)
    else:
        rec = np.memmap(path, dtype=dtype, mode="r", offset=_ADC_HEADER.size, shape=(n,))
    return AdcFrameSet(config, rec["samples"], np.asarray(rec["label"]), np.asarray(rec["seed"]), seed=seed)


# -- RDI ------------------------------------------------------------------------------


def rdis_to_bytes(rdis: Sequence[RangeDopplerImage]) -> bytes:
    rec = np.zeros(len(rdis), dtype=_rdi_record_dtype())
    for i, r in enumerate(rdis):
        rec[i] = (int(r.label), int(r.frame_id), r.pixels)
    return _RDI_HEADER.pack(RDI_MAGIC, VERSION, len(rdis)) + rec.tobytes()


def write_rdis(path, rdis: Sequence[RangeDopplerImage]) -> None:
    Path(path).write_bytes(rdis_to_bytes(rdis))


def read_rdis(path) -> list[RangeDopplerImage]:
    data = Path(path).read_bytes()
    if len(data) < _RDI_HEADER.size or data[:4] != RDI_MAGIC:
        raise FormatError(f"{path}: not a RDIF file")
    _, version, n = _RDI_HEADER.unpack_from(data)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported RDIF version {version}")
    dtype = _rdi_record_dtype()
    if len(data) != _RDI_HEADER.size + n * dtype.itemsize:
        raise FormatError(f"{path}: size does not match {n} images")
    rec = np.frombuffer(data, dtype=dtype, count=n, offset=_RDI_HEADER.size)
    return [RangeDopplerImage(rec["pixels"][i].astype(float), int(rec["label"][i]), int(rec["frame_id"][i])) for i in range(n)]


def sniff(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read(4)


# -- text tables ----------------------------------------------------------------------

SCORE_HEADER = ["frame_id", "label", "score_rec", "score_energy"]


def _comment_lines(text: str) -> Iterable[str]:
    return (line for line in text.splitlines() if line and not line.startswith("#"))


def scores_to_csv(records: Sequence[ScoreRecord], manifest: str | None = None) -> str:
    buf = io.StringIO()
    if manifest:
        buf.write(f"# {manifest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for r in records:
        w.writerow([r.frame_id, SceneLabel(r.label).name, f"{r.s_rec:.9g}", f"{r.s_energy:.9g}"])
    return buf.getvalue()


def write_scores(path, records: Sequence[ScoreRecord], manifest: str | None = None) -> None:
    Path(path).write_text(scores_to_csv(records, manifest))


def read_scores(path) -> list[ScoreRecord]:
    rows = list(csv.reader(_comment_lines(Path(path).read_text())))
    if not rows or rows[0] != SCORE_HEADER:
        raise FormatError(f"{path}: missing score table header")
    try:
        return [ScoreRecord(int(a), SceneLabel[b], float(c), float(d)) for a, b, c, d in rows[1:]]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed score row: {exc}") from exc


def write_threshold(path, threshold: Threshold, manifest: str | None = None) -> None:
    head = f"# {manifest}\n" if manifest else ""
    Path(path).write_text(f"{head}{threshold.score_kind.value},{threshold.calibration_quantile:.9g},{threshold.value:.9g}\n")


def read_threshold(path) -> Threshold:
    lines = list(_comment_lines(Path(path).read_text()))
    try:
        (line,) = lines
        kind, q, tau = line.split(",")
        return Threshold(float(tau), ScoreKind(kind), float(q))
    except ValueError as exc:
        raise FormatError(f"{path}: expected one 'kind,quantile,tau' line") from exc


def write_loss_history(path, history: Sequence[float], manifest: str | None = None) -> None:
    lines = [f"# {manifest}"] if manifest else []
    lines.append("epoch,mean_loss")
    lines += [f"{i + 1},{loss:.9g}" for i, loss in enumerate(history)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_history(path) -> list[float]:
    rows = list(csv.reader(_comment_lines(Path(path).read_text())))
    if not rows or rows[0] != ["epoch", "mean_loss"]:
        raise FormatError(f"{path}: missing loss table header")
    return [float(r[1]) for r in rows[1:]]
