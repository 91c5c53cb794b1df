"""Reading and writing signals, grids, tracks and result files."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile

from .ridge import IFTrack
from .signals import TimeSeries
from .tfa import TFMatrix

WAV_FULL_SCALE = 0.9
_INT16_MAX = 32767


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------- signals ---

def write_series_csv(path, series: TimeSeries) -> None:
    """One sample per line under the header ``t,s``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s"])
        for t, s in zip(series.t, np.real(series.samples)):
            w.writerow([repr(float(t)), repr(float(s))])


def read_series_csv(path, fs: Optional[float] = None) -> TimeSeries:
    """Read a ``t,s`` CSV; the sampling rate comes from the time column unless given."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    if data.dtype.names is None or not {"t", "s"} <= set(data.dtype.names):
        raise ValueError(f"{path}: expected a header with columns t,s")
    t, s = np.atleast_1d(data["t"]), np.atleast_1d(data["s"])
    if not np.all(np.isfinite(s)):
        raise ValueError(f"{path}: non-numeric or missing samples")
    if fs is None:
        if t.size < 2:
            raise ValueError(f"{path}: need at least 2 samples to infer fs")
        dt = np.diff(t)
        if np.any(dt <= 0) or np.ptp(dt) > 1e-6 * np.mean(dt):
            raise ValueError(f"{path}: time column is not uniformly increasing")
        fs = 1.0 / float(np.mean(dt))
    return TimeSeries(s, float(fs))


def write_wav(path, series: TimeSeries) -> float:
    """16-bit PCM mono, peak at 0.9 full scale; returns the amplitude scale.

    The scale (sample value per unit of the original signal) goes to a JSON
    sidecar ``<name>.json`` so the amplitudes can be restored.
    """
    path = Path(path)
    x = np.real(series.samples).astype(float)
    peak = float(np.max(np.abs(x)))
    scale = WAV_FULL_SCALE * _INT16_MAX / peak if peak > 0 else 1.0
    pcm = np.round(x * scale).astype(np.int16)
    fs = series.fs
    if fs != int(fs):
        raise ValueError(f"WAV needs an integer sampling rate, got {fs}")
    wavfile.write(path, int(fs), pcm)
    write_json(_sidecar(path), {"fs": float(fs), "scale": scale,
                                "full_scale_fraction": WAV_FULL_SCALE})
    return scale


def read_wav(path) -> TimeSeries:
    """Read a mono WAV; amplitudes are restored from the sidecar if present."""
    path = Path(path)
    fs, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono WAV files are supported")
    if np.issubdtype(data.dtype, np.integer):
        x = data.astype(float)
        side = _sidecar(path)
        if side.exists():
            x /= float(read_json(side)["scale"])
        else:
            x /= float(np.iinfo(data.dtype).max)
    else:
        x = data.astype(float)
    return TimeSeries(x, float(fs))


# ------------------------------------------------------------------ grids ---

def write_tf(path, tf: TFMatrix) -> None:
    """Little-endian float32 (re, im) pairs, row-major [slices x bins], plus sidecar."""
    path = Path(path)
    inter = np.empty(tf.data.shape + (2,), dtype="<f4")
    inter[..., 0] = tf.data.real
    inter[..., 1] = tf.data.imag
    inter.tofile(path)
    write_json(_sidecar(path), {"n_slices": tf.n_slices, "nfft": tf.nfft, "fs": tf.fs,
                                "hop": tf.hop, "sigma": tf.sigma, "gain": tf.gain,
                                "n_samples": tf.n_samples})


def read_tf(path) -> TFMatrix:
    path = Path(path)
    meta = read_json(_sidecar(path))
    raw = np.fromfile(path, dtype="<f4")
    shape = (int(meta["n_slices"]), int(meta["nfft"]))
    if raw.size != 2 * shape[0] * shape[1]:
        raise ValueError(f"{path}: size does not match sidecar shape {shape}")
    raw = raw.reshape(shape + (2,)).astype(float)
    data = raw[..., 0] + 1j * raw[..., 1]
    gain = meta.get("gain", 1.0)
    n_samples = meta.get("n_samples", shape[0] * int(meta["hop"]))
    return TFMatrix(data, float(meta["fs"]), int(meta["hop"]), float(meta["sigma"]),
                    float(gain), int(n_samples))


def write_magnitude_csv(path, mag: np.ndarray) -> None:
    np.savetxt(path, np.asarray(mag), delimiter=",", fmt="%.9g")


def write_pgm(path, mag: np.ndarray) -> None:
    """Binary 8-bit PGM, max-normalised; rows are frequency bins, high bins on top."""
    mag = np.asarray(mag, dtype=float)
    peak = float(mag.max()) if mag.size else 0.0
    img = np.zeros(mag.shape) if peak <= 0 else mag / peak
    img = np.round(255 * img.T[::-1]).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


# ----------------------------------------------------------------- tracks ---

def write_track_csv(path, track: IFTrack) -> None:
    """Header ``slice,bin,freq_hz``, one row per time slice."""
    bins = track.bins if track.bins is not None else np.full(len(track), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slice", "bin", "freq_hz"])
        for k, (b, f) in enumerate(zip(bins, track.freqs_hz)):
            w.writerow([k, int(b), repr(float(f))])


def read_track_csv(path, hop: int = 1) -> IFTrack:
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    return IFTrack(np.atleast_1d(data["freq_hz"]), np.atleast_1d(data["bin"]).astype(int),
                   hop=hop)


def write_values_csv(path, values) -> None:
    """Header ``n,value``, one row per sample."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "value"])
        for k, v in enumerate(np.asarray(values, dtype=float)):
            w.writerow([k, repr(float(v))])


def read_values_csv(path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    return np.atleast_1d(data["value"])


def write_columns_csv(path, header, columns) -> None:
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v == int(v) and abs(v) < 1e15 and not math.copysign(1, v) < 0:
        return str(int(v))
    return repr(v)
