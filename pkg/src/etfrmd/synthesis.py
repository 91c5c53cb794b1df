"""Synchroextracting mask, enhanced TFR, ridge reconstruction and metrics.

Each mode is rebuilt from the single STFT coefficient on its ridge.  Two
adjustments make the coefficient a waveform sample:

* the absolute-time phase ramp of the STFT is undone with
  exp(+j 2 pi v n / nfft), so the coefficient carries the instantaneous
  phase at slice n;
* the value is divided by the window DC gain G = sum g, so a unit tone
  comes back with unit amplitude.

Where two tracks share a cell both modes read the same coefficient; energy
is not split between them, which is a known error source near crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ridge import IFTrack
from .signals import TimeSeries
from .tfa import TFMatrix

OUTPUT_SNR_CAP_DB = 300.0


@dataclass
class SeoMask:
    mask: np.ndarray
    bins: list

    @property
    def shape(self):
        return self.mask.shape


@dataclass
class ModeEstimate:
    track: IFTrack
    samples: np.ndarray
    ridge: np.ndarray


def track_bins(track, nfft: int, fs: float) -> np.ndarray:
    f = track.freqs_hz if isinstance(track, IFTrack) else np.asarray(track, dtype=float)
    return np.floor(f * nfft / fs + 0.5).astype(int)


def seo(tracks: Sequence, n_slices: int, nfft: int, fs: float) -> SeoMask:
    """Binary mask with one active cell per slice for every track."""
    mask = np.zeros((n_slices, nfft), dtype=bool)
    rows = np.arange(n_slices)
    bins = []
    for tr in tracks:
        f = tr.freqs_hz if isinstance(tr, IFTrack) else np.asarray(tr, dtype=float)
        if f.size != n_slices:
            raise ValueError(f"track length {f.size} != {n_slices} slices")
        if np.any(f < 0) or np.any(f >= fs / 2):
            raise ValueError("track leaves the band [0, fs/2)")
        b = track_bins(f, nfft, fs)
        mask[rows, b] = True
        bins.append(b)
    return SeoMask(mask, bins)


def seo_for(tf: TFMatrix, tracks: Sequence) -> SeoMask:
    return seo(tracks, tf.n_slices, tf.nfft, tf.fs)


def etfr(tf: TFMatrix, mask: SeoMask) -> TFMatrix:
    """STFT with every off-ridge cell set to zero."""
    m = mask.mask if isinstance(mask, SeoMask) else np.asarray(mask)
    if m.shape != tf.data.shape:
        raise ValueError(f"mask shape {m.shape} != STFT shape {tf.data.shape}")
    return tf.with_data(tf.data * m)


def _demodulated(tf: TFMatrix, bins: np.ndarray) -> np.ndarray:
    rows = np.arange(tf.n_slices)
    n = rows * tf.hop
    coef = tf.data[rows, bins]
    return coef, coef * np.exp(2j * np.pi * bins * n / tf.nfft) / tf.gain


def reconstruct_mode(tf: TFMatrix, track) -> ModeEstimate:
    """Mode samples from the STFT coefficients on the track's ridge."""
    f = track.freqs_hz if isinstance(track, IFTrack) else np.asarray(track, dtype=float)
    if f.size != tf.n_slices:
        raise ValueError(f"track length {f.size} != {tf.n_slices} slices")
    bins = np.clip(track_bins(f, tf.nfft, tf.fs), 0, tf.nfft - 1)
    coef, value = _demodulated(tf, bins)
    if not isinstance(track, IFTrack):
        track = IFTrack(f, bins)
    return ModeEstimate(track, value.real, coef)


def reconstruct_signal(modes: Sequence) -> TimeSeries | np.ndarray:
    """Sample-wise sum of reconstructed modes."""
    arrays = [m.samples if isinstance(m, ModeEstimate) else np.asarray(m) for m in modes]
    if not arrays:
        raise ValueError("no modes")
    if len({a.size for a in arrays}) != 1:
        raise ValueError("modes differ in length")
    return np.sum(arrays, axis=0)


def reconstruct_from_etfr(enhanced: TFMatrix, tracks: Sequence) -> np.ndarray:
    """Whole-signal reconstruction read straight off the enhanced TFR."""
    total = np.zeros(enhanced.n_slices, dtype=complex)
    for tr in tracks:
        f = tr.freqs_hz if isinstance(tr, IFTrack) else np.asarray(tr, dtype=float)
        _, value = _demodulated(enhanced, track_bins(f, enhanced.nfft, enhanced.fs))
        total += value
    return total.real


def _pair(x, xhat, edge):
    x = np.asarray(getattr(x, "samples", x), dtype=float)
    xhat = np.asarray(getattr(xhat, "samples", xhat), dtype=float)
    if x.shape != xhat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {xhat.shape}")
    if edge:
        if 2 * edge >= x.size:
            raise ValueError("edge exclusion leaves no samples")
        x, xhat = x[edge:-edge], xhat[edge:-edge]
    return x, xhat


def mse(x, xhat, edge: int = 0) -> float:
    x, xhat = _pair(x, xhat, edge)
    return float(np.mean((x - xhat) ** 2))


def output_snr(x, xhat, edge: int = 0) -> float:
    """10 log10(|x|^2 / |x - xhat|^2) in dB, capped at +300 dB for a perfect match."""
    x, xhat = _pair(x, xhat, edge)
    ref = float(np.sum(x ** 2))
    if ref == 0:
        raise ValueError("reference signal is all zero")
    err = float(np.sum((x - xhat) ** 2))
    if err == 0:
        return OUTPUT_SNR_CAP_DB
    return min(10 * math.log10(ref / err), OUTPUT_SNR_CAP_DB)


def default_edge(sigma: float, fs: float) -> int:
    return int(math.ceil(3 * sigma * fs))
