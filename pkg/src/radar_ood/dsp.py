"""ADC frame -> range-Doppler image preprocessing.

Chain per frame: fast-time mean removal, Chebyshev window, real-input range FFT
(64 non-negative bins kept), coherent Rx average, slow-time mean removal (MTI),
Chebyshev-windowed Doppler FFT with zero Doppler centred, then 60 dB log scaling
into [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy.signal.windows import chebwin

RDI_SIDELOBE_DB = 100.0
DYNAMIC_RANGE_DB = 60.0
LOG_EPS = 1e-12
RDI_SIZE = 64


@dataclass
class RangeDopplerImage:
    pixels: np.ndarray  # (64, 64): Doppler rows x range columns
    label: int
    frame_id: int

    def __post_init__(self):
        if self.pixels.shape != (RDI_SIZE, RDI_SIZE):
            raise ValueError(f"RDI must be {RDI_SIZE}x{RDI_SIZE}, got {self.pixels.shape}")


def chebyshev_window(length: int, sidelobe_db: float) -> np.ndarray:
    """Symmetric Dolph-Chebyshev window with unit peak."""
    if length < 2:
        raise ValueError("window length must be >= 2")
    if sidelobe_db <= 0:
        raise ValueError("sidelobe attenuation must be positive")
    return _chebwin(int(length), float(sidelobe_db)).copy()


@lru_cache(maxsize=16)
def _chebwin(length: int, sidelobe_db: float) -> np.ndarray:
    w = chebwin(length, sidelobe_db, sym=True)
    return w / w.max()


def remove_mean(x: np.ndarray, axis: int) -> np.ndarray:
    """Subtract the mean along ``axis``; exactly zero for constant input.

    The mean is taken relative to the first sample so identical samples cancel
    bit-exactly instead of leaving rounding residue.
    """
    ref = np.take(x, [0], axis=axis)
    d = x - ref
    return d - d.mean(axis=axis, keepdims=True)


def range_fft(frame: np.ndarray, window: np.ndarray) -> np.ndarray:
    """(n_rx, n_c, n_s) real frame -> (n_c, n_s // 2) complex range spectrum."""
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 3:
        raise ValueError(f"frame must be (n_rx, n_c, n_s), got shape {frame.shape}")
    n_s = frame.shape[-1]
    if window.shape != (n_s,):
        raise ValueError(f"window length {window.shape} does not match n_s={n_s}")
    x = remove_mean(frame, axis=-1) * window
    spec = np.fft.fft(x, axis=-1)[..., : n_s // 2]
    return spec.mean(axis=0)


def mti_filter(spectrum: np.ndarray) -> np.ndarray:
    """Remove the slow-time mean of every range bin (nulls zero Doppler)."""
    return remove_mean(np.asarray(spectrum), axis=0)


def doppler_fft(spectrum: np.ndarray, window: np.ndarray) -> np.ndarray:
    """(n_c, n_r) range spectrum -> (n_c, n_r) Doppler map, zero Doppler at row n_c // 2."""
    n_c = spectrum.shape[0]
    if spectrum.ndim != 2 or window.shape != (n_c,):
        raise ValueError(f"window length {window.shape} does not match spectrum {spectrum.shape}")
    return np.fft.fftshift(np.fft.fft(spectrum * window[:, None], axis=0), axes=0)


def normalize_rdi(magnitudes: np.ndarray, label: int = 0, frame_id: int = 0) -> RangeDopplerImage:
    """Log-scale to dB relative to the frame peak, clip to 60 dB, map to [0, 1]."""
    m = np.abs(np.asarray(magnitudes, dtype=float))
    peak = m.max()
    if peak == 0:
        return RangeDopplerImage(np.zeros(m.shape), label, frame_id)
    # relative magnitude first so uniform scaling cancels exactly
    db = 20.0 * np.log10(m / peak + LOG_EPS)
    pixels = (np.clip(db, -DYNAMIC_RANGE_DB, 0.0) + DYNAMIC_RANGE_DB) / DYNAMIC_RANGE_DB
    return RangeDopplerImage(pixels, label, frame_id)


def range_doppler_map(frame: np.ndarray) -> np.ndarray:
    """Complex (Doppler, range) map of one (n_rx, n_c, n_s) frame."""
    n_c, n_s = frame.shape[-2:]
    spec = range_fft(frame, chebyshev_window(n_s, RDI_SIDELOBE_DB))
    return doppler_fft(mti_filter(spec), chebyshev_window(n_c, RDI_SIDELOBE_DB))


def preprocess_frame(frame: np.ndarray, label: int = 0, frame_id: int = 0) -> RangeDopplerImage:
    return normalize_rdi(np.abs(range_doppler_map(frame)), label, frame_id)


def iter_preprocess(frames, labels, start_id: int = 0) -> Iterator[RangeDopplerImage]:
    for k, (frame, label) in enumerate(zip(frames, labels)):
        yield preprocess_frame(frame, int(label), start_id + k)


def preprocess(frames) -> list[RangeDopplerImage]:
    """Run the full chain over an AdcFrameSet; frame ids are positions in the set."""
    return list(iter_preprocess(frames.frames, frames.labels))


def stack_pixels(rdis) -> np.ndarray:
    return np.stack([r.pixels for r in rdis]) if len(rdis) else np.zeros((0, RDI_SIZE, RDI_SIZE))
