"""Signal encoding and kernel phase averaging (KPA).

A real signal s is encoded as the IF of a unit-modulus analytic signal,
z[n] = exp(j * Phi[n]) with Phi[n] = 2 pi T mu sum_{m<=n} s[m].  A mode of
pivot frequency f is recovered by averaging, over a symmetric lag window,
the phase of a two-term sinusoidal kernel

    b1 * (Psi[n+l] - Psi[n-l]) + b2 * (Psi[n+l+a2] - Psi[n-l-a2])

divided by 2 pi l T mu.  Phases are differenced directly, so no wrapping
ever happens.

Discretisation
--------------
``Psi`` is the cumulative phase referred to sample centres (trapezoidal
sum), which makes the phase differences symmetric about n.  The textbook
coefficients b1 = pi f l T sin(2 pi f l T), b2 = pi f l T cos(2 pi f l T)
assume a continuous integral and a shift a2 of exactly a quarter period.
With a rounded integer a2 and a discrete sum those are off by several
percent (and worse near fs/4), so by default the coefficients are solved
so that a constant-IF tone is recovered exactly:

    k  = l * tan(pi f T)
    b1 = k * (sin(w l) - cos(w l) * cot(w a2))
    b2 = k * cos(w l) / sin(w a2),          w = 2 pi f T

which reduce to the textbook ones when w a2 = pi/2 and f T -> 0.
``exact=False`` selects the textbook form.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ridge import IFTrack, TrackSource
from .signals import TimeSeries, analytic
from .tfa import StftConfig, peak_bins

logger = logging.getLogger(__name__)


class Boundary(str, enum.Enum):
    REFLECT = "reflect"
    CLAMP = "clamp"
    SKIP = "skip"


@dataclass(frozen=True)
class EncodedSignal:
    """Cumulative phase of the encoded signal, stored unwrapped."""

    phase: np.ndarray
    mu: float
    fs: float

    @property
    def z(self) -> np.ndarray:
        return np.exp(1j * self.phase)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.phase, prepend=0.0)

    def __len__(self):
        return self.phase.size


@dataclass(frozen=True)
class KpaConfig:
    """KPA settings.

    ``L`` is the (even) lag-window length; ``None`` selects it per mode from
    the coarse chirp rate of its track (see ``select_window_length``).
    ``mu`` of ``None`` means fs / (8 max|s|).
    ``search_halfwidth`` limits each refinement peak search to that many
    bins around the previous track; ``None`` searches the whole band.  The
    extraction kernel is built from running sums of the input and so passes
    low frequencies, which an unrestricted search can lock onto.
    """

    L: Optional[int] = 32
    K: int = 3
    mu: Optional[float] = None
    epsilon2: float = 1e-2
    L_max: int = 256
    boundary: Boundary = Boundary.REFLECT
    exact: bool = True
    search_halfwidth: Optional[int] = 30

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.L is not None and (self.L < 2 or self.L % 2):
            raise ValueError(f"L must be an even integer >= 2, got {self.L}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.epsilon2 > 0:
            raise ValueError("epsilon2 must be positive")
        if self.L_max < 2:
            raise ValueError("L_max must be >= 2")
        if self.search_halfwidth is not None and self.search_halfwidth < 0:
            raise ValueError("search_halfwidth must be >= 0")


def default_mu(x: TimeSeries) -> float:
    peak = float(np.max(np.abs(x.samples)))
    return x.fs / (8 * peak) if peak > 0 else 1.0


def encode(x: TimeSeries, mu: Optional[float] = None) -> EncodedSignal:
    """Encode ``x`` into the cumulative phase of a unit-modulus signal."""
    if mu is None:
        mu = default_mu(x)
    peak = float(np.max(np.abs(x.samples)))
    if peak > 0 and not abs(mu) * peak < x.fs / 2:
        raise ValueError(
            f"mu={mu} pushes the encoded IF past Nyquist; "
            f"the largest admissible mu is below {x.fs / (2 * peak)}")
    phase = 2 * np.pi / x.fs * mu * np.cumsum(x.samples)
    return EncodedSignal(phase, float(mu), x.fs)


def quarter_shift(f, fs) -> np.ndarray:
    """Integer lag a2 = round(fs / 4f), never below 1."""
    f = np.asarray(f, dtype=float)
    return np.maximum(np.floor(fs / (4 * f) + 0.5), 1).astype(int)


def kernel_coefficients(f, l, fs, exact=True):
    """(a2, b1, b2) for pivot frequency ``f`` and lag ``l`` (broadcasting)."""
    f = np.asarray(f, dtype=float)
    l = np.asarray(l, dtype=float)
    a2 = quarter_shift(f, fs)
    w = 2 * np.pi * f / fs
    if not exact:
        scale = np.pi * f * l / fs
        return a2, scale * np.sin(w * l), scale * np.cos(w * l)
    beta = w * a2
    k = l * np.tan(w / 2)
    b1 = k * (np.sin(w * l) - np.cos(w * l) / np.tan(beta))
    b2 = k * np.cos(w * l) / np.sin(beta)
    return a2, b1, b2


def lag_window(L: int) -> np.ndarray:
    """Symmetric lags -L/2..-1, 1..L/2 (zero excluded)."""
    half = np.arange(1, L // 2 + 1)
    return np.concatenate([-half[::-1], half])


class _CentredPhase:
    """Sample-centred cumulative phase with boundary extension."""

    def __init__(self, z: EncodedSignal, pad: int, boundary: Boundary):
        self.n = len(z)
        self.pad = pad
        self.boundary = boundary
        inc = z.increments
        if boundary is Boundary.REFLECT:
            ext = np.pad(inc, pad, mode="reflect")
            phi = np.cumsum(ext)
            phi -= phi[pad] - z.phase[0]
            self.values = phi - 0.5 * ext
        else:
            self.values = np.pad(z.phase - 0.5 * inc, pad, mode="edge")

    def __call__(self, idx):
        if self.boundary is Boundary.CLAMP:
            idx = np.clip(idx, 0, self.n - 1)
        return self.values[idx + self.pad]

    def inside(self, idx):
        return (idx >= 0) & (idx < self.n)


def _pad_for(L, a2max):
    return int(L // 2 + a2max + 2)


def kernel_phase(z: EncodedSignal, n, l, f, boundary=Boundary.REFLECT, exact=True):
    """Kernel phase at sample(s) ``n``, lag ``l`` and pivot frequency ``f`` (Hz).

    Returns radians; ``/ (2 pi l T mu)`` turns it into a signal estimate.
    """
    if np.any(np.asarray(f) <= 0):
        raise ValueError("pivot frequency must be positive")
    if np.any(np.asarray(l) == 0):
        raise ValueError("lag 0 is excluded from the kernel")
    boundary = Boundary(boundary)
    n = np.asarray(n)
    a2, b1, b2 = kernel_coefficients(f, l, z.fs, exact)
    pad = _pad_for(2 * np.max(np.abs(l)), np.max(a2)) + int(np.max(np.abs(n))) + len(z)
    psi = _CentredPhase(z, pad, boundary)
    lo = n - l
    hi = n + l
    return (b1 * (psi(hi) - psi(lo))
            + b2 * (psi(hi + a2) - psi(lo - a2)))


def kpa_extract_mode(z: EncodedSignal, track, cfg: KpaConfig = KpaConfig(),
                     L: Optional[int] = None) -> TimeSeries:
    """Recover the mode pivoted on ``track`` (IFTrack or Hz per sample).

    The estimate at sample n is the mean over the lag window of
    kernel_phase / (2 pi l T mu) with the pivot held at track[n].
    """
    N = len(z)
    f = track.per_sample(N) if isinstance(track, IFTrack) else np.asarray(track, dtype=float)
    if f.size != N:
        raise ValueError(f"track has {f.size} samples, signal has {N}")
    if np.any(f <= 0):
        raise ValueError("track contains non-positive frequencies")
    L = L if L is not None else cfg.L
    if L is None or L < 2 or L % 2:
        raise ValueError(f"L must be an even integer >= 2, got {L}")
    if np.any(f > z.fs / 4):
        warnings.warn("pivot frequency above fs/4: the quarter-period shift rounds to 1 sample",
                      RuntimeWarning, stacklevel=2)
    a2 = quarter_shift(f, z.fs)
    psi = _CentredPhase(z, _pad_for(L, a2.max()), cfg.boundary)
    n = np.arange(N)
    scale = 2 * np.pi / z.fs * z.mu
    total = np.zeros(N)
    count = np.zeros(N)
    for l in lag_window(L):
        _, b1, b2 = kernel_coefficients(f, l, z.fs, cfg.exact)
        lo, hi = n - l, n + l
        val = (b1 * (psi(hi) - psi(lo)) + b2 * (psi(hi + a2) - psi(lo - a2))) / (scale * l)
        if cfg.boundary is Boundary.SKIP:
            ok = (psi.inside(lo - a2) & psi.inside(hi + a2)
                  & psi.inside(lo) & psi.inside(hi))
            total += np.where(ok, val, 0.0)
            count += ok
        else:
            total += val
            count += 1
    out = np.divide(total, count, out=np.zeros(N), where=count > 0)
    return TimeSeries(out, z.fs)


def edge_width(L: int, track, fs: float) -> int:
    """Samples at each end whose lag window reaches past the signal."""
    f = track.freqs_hz if isinstance(track, IFTrack) else np.asarray(track)
    return int(L // 2 + quarter_shift(np.min(f), fs) + 1)


def refine_if(mode: TimeSeries, stft_cfg: StftConfig = StftConfig(),
              around: Optional[IFTrack] = None,
              halfwidth: Optional[int] = None) -> IFTrack:
    """IF track from the per-slice STFT peak of the mode's analytic signal.

    By default the peak is taken over the whole band [0, fs/2).  Passing a
    previous track in ``around`` together with ``halfwidth`` (bins) limits
    the search to that band around it.
    """
    cfg = stft_cfg.resolve(len(mode), mode.fs)
    samples = np.asarray(mode.samples)
    n_slices = math.ceil(len(mode) / cfg.hop)
    if not np.any(samples):
        bins = np.zeros(n_slices, dtype=int)
        return IFTrack.from_bins(bins, mode.fs, cfg.nfft, TrackSource.REFINED, cfg.hop,
                                 warning="all-zero mode; track pinned to bin 0")
    centre = None
    if around is not None and halfwidth is not None:
        centre = np.floor(around.per_sample(len(mode))[::cfg.hop] * cfg.nfft / mode.fs
                          + 0.5).astype(int)
    bins = peak_bins(analytic(mode), cfg, mode.fs, centre=centre, halfwidth=halfwidth)
    return IFTrack.from_bins(bins, mode.fs, cfg.nfft, TrackSource.REFINED, cfg.hop)


def _off_dc(track: IFTrack, nfft: int, fs: float) -> IFTrack:
    """Lift slices sitting at or below DC to the first bin so the kernel is defined."""
    low = fs / nfft
    if np.all(track.freqs_hz >= low):
        return track
    bins = track.bins if track.bins is not None else np.floor(
        track.freqs_hz * nfft / fs + 0.5).astype(int)
    return IFTrack.from_bins(np.maximum(bins, 1), fs, nfft, track.source, track.hop,
                             warning=track.warning)


def window_for(track: IFTrack, cfg: KpaConfig, fs: float) -> int:
    if cfg.L is not None:
        return cfg.L
    rate = estimate_chirp_rate(track, fs)
    return select_window_length(rate, cfg.epsilon2, fs, cfg.L_max)


def enhance(s: TimeSeries, initial: Sequence[IFTrack], cfg: KpaConfig = KpaConfig(),
            stft_cfg: StftConfig = StftConfig()):
    """K rounds of {extract every mode by KPA, re-estimate its IF from the STFT}.

    Returns the final tracks and the mode estimates of the last round.
    """
    if not initial:
        raise ValueError("need at least one initial track")
    z = encode(s, cfg.mu)
    N = len(s)
    nfft = stft_cfg.resolve(N, s.fs).nfft
    tracks = [_off_dc(tr, nfft, s.fs) for tr in initial]
    modes = []
    for _ in range(cfg.K):
        modes = [kpa_extract_mode(z, tr, cfg, window_for(tr, cfg, s.fs)) for tr in tracks]
        refined = []
        for tr, mode in zip(tracks, modes):
            new = refine_if(mode, stft_cfg, tr, cfg.search_halfwidth)
            bad = new.bins < 1
            if np.any(bad):
                # keep the previous estimate where the refined peak collapsed to DC
                prev = np.floor(tr.per_sample(N)[::new.hop] * nfft / s.fs + 0.5).astype(int)
                new = IFTrack.from_bins(np.where(bad, np.maximum(prev, 1), new.bins), s.fs,
                                        nfft, TrackSource.REFINED, new.hop, warning=new.warning)
            refined.append(new)
        tracks = refined
    return tracks, modes


def select_window_length(r0: float, eps2: float, fs: float, cap: int = 256) -> int:
    """Largest even L <= cap with pi |r0| (L/2)^2 / fs^2 < eps2."""
    if not eps2 > 0 or not fs > 0:
        raise ValueError("eps2 and fs must be positive")
    cap = int(cap) - int(cap) % 2
    if r0 == 0:
        return cap
    bound = 2 * fs * math.sqrt(eps2 / (math.pi * abs(r0)))
    L = min(cap, int(math.floor(bound)))
    L -= L % 2
    while L > 2 and not math.pi * abs(r0) * (L / 2) ** 2 / fs ** 2 < eps2:
        L -= 2
    return max(L, 2)


def estimate_chirp_rate(track, fs: float, smooth: Optional[int] = None) -> float:
    """Coarse chirp rate (Hz/s): median |slope| of a moving-average smoothed track."""
    f = track.per_sample(len(track) * track.hop) if isinstance(track, IFTrack) else np.asarray(track, float)
    if f.size < 8:
        raise ValueError("need at least 8 track samples")
    if smooth is None:
        smooth = int(np.clip(f.size // 8, 3, 128))
    smoothed = np.convolve(f, np.ones(smooth) / smooth, mode="valid")
    if smoothed.size < 2:
        smoothed = f
    return float(np.median(np.abs(np.diff(smoothed))) * fs)
