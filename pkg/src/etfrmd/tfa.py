"""Gaussian-window STFT and magnitude spectrogram.

The transform follows the absolute-time phase convention

    STFT[n, v] = sum_l x[l] g[l - n] exp(-j 2 pi l v / nfft)

with zero padding outside the signal.  Internally frames are transformed
around their centre and the phase ramp ``exp(-j 2 pi n v / nfft)`` is applied
afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

_CHUNK = 512


@dataclass(frozen=True)
class StftConfig:
    """STFT settings.

    ``sigma`` is in seconds; ``None`` means 0.04 of the signal duration.
    ``nfft`` of ``None`` picks the smallest power of two that is at least
    1024 and holds the window.  ``half_width`` defaults to ceil(3*sigma*fs).
    """

    sigma: Optional[float] = None
    nfft: Optional[int] = None
    hop: int = 1
    half_width: Optional[int] = None

    def resolve(self, n: int, fs: float) -> "StftConfig":
        sigma = self.sigma if self.sigma is not None else 0.04 * n / fs
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        half = self.half_width if self.half_width is not None else math.ceil(3 * sigma * fs)
        nfft = self.nfft
        if nfft is None:
            nfft = max(1024, 1 << (2 * half).bit_length())
        cfg = StftConfig(sigma=sigma, nfft=int(nfft), hop=int(self.hop), half_width=int(half))
        cfg.validate()
        return cfg

    def validate(self):
        if self.sigma is None or not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.half_width is None or self.half_width < 0:
            raise ValueError("window half-width must be >= 0")
        if self.nfft is None or self.nfft < 2 * self.half_width + 1:
            raise ValueError(
                f"nfft={self.nfft} is shorter than the window ({2 * self.half_width + 1})")

    @property
    def window_length(self) -> int:
        return 2 * self.half_width + 1


@dataclass
class TFMatrix:
    """Complex STFT grid, rows are time slices and columns DFT bins."""

    data: np.ndarray
    fs: float
    hop: int
    sigma: float
    gain: float
    n_samples: int

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def nfft(self) -> int:
        return self.data.shape[1]

    @property
    def n_bins(self) -> int:
        """Bins searched for ridges: [0, nfft/2)."""
        return self.nfft // 2

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.nfft) * self.fs / self.nfft

    @property
    def slice_times(self) -> np.ndarray:
        return np.arange(self.n_slices) * self.hop

    def bin_to_hz(self, bins):
        return np.asarray(bins) * self.fs / self.nfft

    def hz_to_bin(self, hz):
        return np.floor(np.asarray(hz) * self.nfft / self.fs + 0.5).astype(int)

    def with_data(self, data) -> "TFMatrix":
        return TFMatrix(data, self.fs, self.hop, self.sigma, self.gain, self.n_samples)


def gaussian_window(cfg: StftConfig, fs: float) -> np.ndarray:
    """g[m] = exp(-pi m^2 T^2 / sigma^2) / sigma for |m| <= half_width.

    Index ``half_width`` of the returned array is the centre sample.
    """
    if cfg.sigma is None or not cfg.sigma > 0:
        raise ValueError(f"sigma must be positive, got {cfg.sigma}")
    half = cfg.half_width if cfg.half_width is not None else math.ceil(3 * cfg.sigma * fs)
    m = np.arange(-half, half + 1) / fs
    return np.exp(-np.pi * m ** 2 / cfg.sigma ** 2) / cfg.sigma


def _centered_chunks(x: np.ndarray, cfg: StftConfig, fs: float):
    """Yield (slice indices, centred spectra) chunk by chunk.

    The centred spectrum of slice n is sum_m x[n+m] g[m] exp(-j 2 pi m v / nfft).
    """
    g = gaussian_window(cfg, fs)
    half, nfft = cfg.half_width, cfg.nfft
    xp = np.concatenate([np.zeros(half, x.dtype), x, np.zeros(half, x.dtype)])
    frames = np.lib.stride_tricks.sliding_window_view(xp, g.size)[::cfg.hop]
    # window sample m sits at buffer index m mod nfft
    order = np.r_[np.arange(half, g.size), np.arange(half)]
    positions = np.r_[np.arange(half + 1), nfft - half + np.arange(half)]
    gw = g[order]
    n_slices = frames.shape[0]
    for start in range(0, n_slices, _CHUNK):
        stop = min(start + _CHUNK, n_slices)
        buf = np.zeros((stop - start, nfft), dtype=complex)
        buf[:, positions] = frames[start:stop][:, order] * gw
        yield np.arange(start, stop), np.fft.fft(buf, axis=1)


def stft(x, cfg: StftConfig, fs: Optional[float] = None) -> TFMatrix:
    """Gaussian-window STFT of a (typically analytic) series.

    ``x`` may be a TimeSeries or an array (then ``fs`` is required).  The
    config is resolved against the signal length first.
    """
    samples, fs = _unpack(x, fs)
    if samples.size == 0:
        raise ValueError("empty series")
    cfg = cfg.resolve(samples.size, fs)
    data = np.empty((math.ceil(samples.size / cfg.hop), cfg.nfft), dtype=complex)
    ramp_bins = np.arange(cfg.nfft)
    for idx, spec in _centered_chunks(samples.astype(complex), cfg, fs):
        n = idx * cfg.hop
        data[idx] = spec * np.exp(-2j * np.pi * np.outer(n, ramp_bins) / cfg.nfft)
    g = gaussian_window(cfg, fs)
    return TFMatrix(data, fs, cfg.hop, cfg.sigma, float(g.sum()), samples.size)


def peak_bins(x, cfg: StftConfig, fs: Optional[float] = None,
              max_bin: Optional[int] = None, centre=None,
              halfwidth: Optional[int] = None) -> np.ndarray:
    """Per-slice argmax of |STFT| over bins [0, max_bin), without storing the grid.

    With ``centre`` (one bin per slice) and ``halfwidth`` the search is
    limited to ``centre +- halfwidth`` in every slice.
    """
    samples, fs = _unpack(x, fs)
    cfg = cfg.resolve(samples.size, fs)
    max_bin = cfg.nfft // 2 if max_bin is None else max_bin
    n_slices = math.ceil(samples.size / cfg.hop)
    out = np.empty(n_slices, dtype=int)
    banded = centre is not None and halfwidth is not None
    if banded:
        centre = np.asarray(centre, dtype=int)
        if centre.shape != (n_slices,):
            raise ValueError(f"centre needs {n_slices} entries, got {centre.shape}")
        cols = np.arange(max_bin)
    for idx, spec in _centered_chunks(samples.astype(complex), cfg, fs):
        mag = np.abs(spec[:, :max_bin])
        if banded:
            mag = np.where(np.abs(cols[None, :] - centre[idx, None]) <= halfwidth, mag, -1.0)
        out[idx] = np.argmax(mag, axis=1)
    return out


def spectrogram(tf: TFMatrix) -> np.ndarray:
    return np.abs(tf.data)


def _unpack(x, fs):
    if hasattr(x, "samples"):
        return np.asarray(x.samples), float(x.fs)
    if fs is None:
        raise ValueError("fs is required when passing a bare array")
    return np.asarray(x), float(fs)
