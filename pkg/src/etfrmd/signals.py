"""Multi-mode FM test signals with ground truth, seeded AWGN and analytic signals.

Every mode follows the discrete model

    x[m] = rho[m] * cos(2*pi*T * sum_{k<=m} f[k] + theta)

so the IF track handed back with each mode is exactly the one integrated
into the phase.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import hilbert


class ModeKind(str, enum.Enum):
    LFM = "LFM"
    SFM = "SFM"
    DAMPED_SFM = "DampedSFM"
    NONLINEAR_FM = "NonlinearFM"


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real (or complex) signal."""

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("a TimeSeries needs a 1-D array with at least 2 samples")
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def T(self) -> float:
        return 1.0 / self.fs

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.fs


@dataclass(frozen=True)
class ModeSpec:
    """Parameters of one FM mode.

    Only the fields relevant to ``kind`` are read:

    * LFM: ``f0`` (Hz) and ``rate`` (Hz/s).
    * SFM / DampedSFM: ``carrier`` (Hz), ``depth`` (Hz), ``mod_rate`` (Hz),
      ``mod_phase`` (rad); DampedSFM also uses ``damping`` (1/s) for the
      envelope ``amplitude * exp(-damping * t)``.
    * NonlinearFM: ``coeffs``, polynomial IF coefficients in ascending
      powers of ``(t - t_ref)``.
    """

    kind: ModeKind
    amplitude: float = 1.0
    phase: float = 0.0
    f0: float = 0.0
    rate: float = 0.0
    carrier: float = 0.0
    depth: float = 0.0
    mod_rate: float = 0.0
    mod_phase: float = 0.0
    damping: float = 0.0
    coeffs: tuple = ()
    t_ref: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModeKind(self.kind))
        if not self.amplitude > 0:
            raise ValueError("mode amplitude must be positive")
        if self.kind is ModeKind.NONLINEAR_FM and not self.coeffs:
            raise ValueError("NonlinearFM needs polynomial IF coefficients")

    def frequency(self, t: np.ndarray) -> np.ndarray:
        """Instantaneous frequency in Hz at times ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind is ModeKind.LFM:
            return self.f0 + self.rate * t
        if self.kind in (ModeKind.SFM, ModeKind.DAMPED_SFM):
            return self.carrier + self.depth * np.cos(
                2 * np.pi * self.mod_rate * t + self.mod_phase)
        # numpy wants highest power first
        return np.polyval(list(self.coeffs)[::-1], t - self.t_ref)

    def envelope(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind is ModeKind.DAMPED_SFM:
            return self.amplitude * np.exp(-self.damping * t)
        return np.full(t.shape, float(self.amplitude))


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = math.inf
    seed: int = 0


@dataclass
class GroundTruth:
    """Per-mode IF tracks (Hz per sample) and clean samples."""

    tracks: list = field(default_factory=list)
    modes: list = field(default_factory=list)

    @property
    def clean(self) -> np.ndarray:
        return np.sum(self.modes, axis=0)


def synthesize_mode(spec: ModeSpec, n: int, fs: float):
    """Render one mode.

    Returns
    -------
    (TimeSeries, ndarray)
        The samples and the exact IF track (Hz) integrated into the phase.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    t = np.arange(n) / fs
    freq = spec.frequency(t)
    if np.any(freq <= 0) or np.any(freq >= fs / 2):
        raise ValueError(
            f"{spec.kind.value} IF spans [{freq.min():.3f}, {freq.max():.3f}] Hz, "
            f"outside the open band (0, {fs / 2}) Hz")
    phase = 2 * np.pi / fs * np.cumsum(freq) + spec.phase
    samples = spec.envelope(t) * np.cos(phase)
    return TimeSeries(samples, fs), freq


def awgn(clean: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    """White Gaussian noise scaled to hit ``snr_db`` against ``clean`` exactly.

    The draw is rescaled to the target power so that the realized SNR equals
    the requested one; the seed alone fixes the noise realisation.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return np.zeros_like(clean, dtype=float)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(clean.shape)
    noise -= noise.mean()
    target = np.mean(clean ** 2) / 10 ** (snr_db / 10)
    return noise * math.sqrt(target / np.mean(noise ** 2))


def synthesize_multimode(specs: Sequence[ModeSpec], noise: NoiseSpec, n: int, fs: float):
    """Sum of modes plus AWGN; SNR is measured against the clean sum."""
    if not specs:
        raise ValueError("at least one mode spec is required")
    truth = GroundTruth()
    for spec in specs:
        ts, freq = synthesize_mode(spec, n, fs)
        truth.modes.append(ts.samples)
        truth.tracks.append(freq)
    clean = truth.clean
    noisy = clean + awgn(clean, noise.snr_db, noise.seed)
    return TimeSeries(noisy, fs), truth


def analytic(x) -> np.ndarray:
    """DFT-domain analytic signal; the real part is the input, bit for bit."""
    samples = x.samples if isinstance(x, TimeSeries) else np.asarray(x)
    if samples.size < 2:
        raise ValueError("need at least 2 samples")
    z = hilbert(np.real(samples))
    z.real = np.real(samples)
    return z


def realized_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    noise = noisy - clean
    return 10 * math.log10(np.sum(clean ** 2) / np.sum(noise ** 2))


# Mode layouts for the three signal families.  Durations scale with n/fs, the
# parameters below are laid out for the default 1 s at 1024 Hz.
def _fig1a():
    return [
        ModeSpec(ModeKind.LFM, amplitude=1.0, phase=0.4, f0=60.0, rate=40.0),
        ModeSpec(ModeKind.SFM, amplitude=1.0, phase=1.1, carrier=170.0,
                 depth=15.0, mod_rate=2.0),
        ModeSpec(ModeKind.SFM, amplitude=1.0, phase=2.3, carrier=260.0,
                 depth=15.0, mod_rate=3.0, mod_phase=1.0),
        ModeSpec(ModeKind.DAMPED_SFM, amplitude=1.5, phase=0.7, carrier=350.0,
                 depth=12.0, mod_rate=2.0, mod_phase=2.0, damping=1.0),
        # cubic IF law: 425 + 40 * (2t - 1)^3
        ModeSpec(ModeKind.NONLINEAR_FM, amplitude=1.0, phase=5.0,
                 coeffs=(425.0, 0.0, 0.0, 320.0), t_ref=0.5),
    ]


def _fig1b():
    return [
        ModeSpec(ModeKind.SFM, amplitude=1.0, phase=0.5, carrier=250.0,
                 depth=80.0, mod_rate=0.5),
        ModeSpec(ModeKind.SFM, amplitude=0.7, phase=2.0, carrier=250.0,
                 depth=80.0, mod_rate=0.5, mod_phase=np.pi),
    ]


def _fig1c():
    return [
        ModeSpec(ModeKind.SFM, amplitude=1.0, phase=0.5, carrier=250.0,
                 depth=110.0, mod_rate=1.5),
        ModeSpec(ModeKind.SFM, amplitude=1.0, phase=2.0, carrier=250.0,
                 depth=110.0, mod_rate=1.5, mod_phase=np.pi),
    ]


PRESETS = {"fig1a": _fig1a, "fig1b": _fig1b, "fig1c": _fig1c}


def preset(name: str) -> list:
    """Mode specs of a named signal family (``fig1a``, ``fig1b``, ``fig1c``)."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def synthesize_preset(name: str, snr_db: float = math.inf, seed: int = 0,
                      n: int = 1024, fs: float = 1024.0):
    return synthesize_multimode(preset(name), NoiseSpec(snr_db, seed), n, fs)
