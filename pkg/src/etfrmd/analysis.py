"""Closed-form oracles for kernel phase averaging: cross-mode interference,
bias under IF error and under a linear chirp, and the curves built on them.

Every expectation over the lag ``l`` is the plain mean over the symmetric
window ``l in [-L/2, L/2]`` with ``l = 0`` left out, the same window the
extractor in :mod:`etfrmd.kpa` averages over.  Curves over many window
lengths are computed from cumulative sums over the lag, so one pass serves
every ``L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kpa import kernel_coefficients, lag_window, quarter_shift, select_window_length

FIG4_F1 = 200.0
FIG4_FS = 1024.0
FIG4_N = 10240
FIG4_NA = 256
FIG4_DELTAS = (1.0, 5.0, 10.0, 50.0, 100.0, 200.0)

FIG4B_F0 = 50.0
FIG4B_FS = 1024.0
FIG4B_N = 1024
FIG4B_RATES = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
FIG4B_LMAX = 256

TABLE_RATES = FIG4B_RATES
TABLE_EPS2 = (1e-3, 1e-2, 1e-1)


def _as_tuple(v) -> tuple:
    return tuple(float(x) for x in np.atleast_1d(np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class InterferenceQuery:
    """One mode of interest (``f_i``) and the modes that leak into it.

    ``f_iprime``, ``amplitudes`` and ``phases`` hold one entry per other
    mode (scalars are accepted for a single one).  Frequencies are in Hz;
    ``n`` is the sample at which the other modes' waveforms are read.
    """

    f_i: float
    f_iprime: Sequence[float] = ()
    amplitudes: Optional[Sequence[float]] = None
    phases: Optional[Sequence[float]] = None
    n: int = 0
    L: int = 32
    fs: float = 1024.0
    epsilon1: float = 0.05

    def __post_init__(self):
        others = _as_tuple(self.f_iprime) if np.size(self.f_iprime) else ()
        amps = (_as_tuple(self.amplitudes) if self.amplitudes is not None
                else (1.0,) * len(others))
        phases = (_as_tuple(self.phases) if self.phases is not None
                  else (0.0,) * len(others))
        if not (len(amps) == len(phases) == len(others)):
            raise ValueError("f_iprime, amplitudes and phases differ in length")
        for f in (self.f_i,) + others:
            if not 0 < f < self.fs / 2:
                raise ValueError(f"frequency {f} Hz outside (0, fs/2)")
        if self.L < 2 or self.L % 2:
            raise ValueError(f"L must be an even integer >= 2, got {self.L}")
        object.__setattr__(self, "f_iprime", others)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phases)

    def waveform_values(self) -> np.ndarray:
        """A_i' = rho_i' cos(2 pi f_i' n T + theta_i')."""
        f = np.asarray(self.f_iprime)
        return (np.asarray(self.amplitudes)
                * np.cos(2 * np.pi * f * self.n / self.fs + np.asarray(self.phases)))


def _exact_terms(f, fp, l, fs, rounded=True):
    """Per-lag summand of the printed interference expression (unit A).

    ``rounded`` uses the integer quarter-period lag of the kernel; otherwise
    the lag is the real number fs / 4f.
    """
    T = 1.0 / fs
    a2 = np.floor(fs / (4 * f) + 0.5) if rounded else fs / (4 * f)
    return (f / fp) * (np.sin(2 * np.pi * f * l * T) * np.sin(2 * np.pi * fp * l * T)
                       + np.cos(2 * np.pi * f * l * T)
                       * np.sin(2 * np.pi * fp * T * (l + a2)))


def _approx_terms(f, fp, l, fs):
    return (f / fp) * np.cos(2 * np.pi * (fp - f) * l / fs)


def _discrete_terms(f, fp, l, fs):
    """Per-lag response of the implemented extractor to a unit tone at ``fp``.

    A tone rho cos(w' m + phi) has a sample-centred running phase whose
    difference over [n - d, n + d] is 2 pi T mu rho cos(w' n + phi)
    sin(w' d) / tan(w' / 2); the extractor combines two such differences
    with its kernel coefficients and divides by 2 pi T mu l.
    """
    a2, b1, b2 = kernel_coefficients(f, l, fs, exact=True)
    wp = 2 * np.pi * fp / fs
    cot = 1.0 / np.tan(wp / 2)
    return (b1 * np.sin(wp * l) + b2 * np.sin(wp * (l + a2))) * cot / l


def _interference(q: InterferenceQuery, terms) -> float:
    if not q.f_iprime:
        return 0.0
    l = lag_window(q.L)
    gains = np.array([np.mean(terms(q.f_i, fp, l, q.fs)) for fp in q.f_iprime])
    return float(np.sum(q.waveform_values() * gains))


def interference_exact(q: InterferenceQuery, rounded: bool = True) -> float:
    """Interference on mode i from the others, full trigonometric form.

    By default the quarter-period lag is rounded, as it is inside the
    kernel.  With ``rounded=False`` it is the real quarter period fs / 4f_i,
    the form that tends to :func:`interference_approx` as f_delta -> 0.
    """
    if rounded:
        return _interference(q, _exact_terms)
    return _interference(q, lambda f, fp, l, fs: _exact_terms(f, fp, l, fs, False))


def interference_approx(q: InterferenceQuery) -> float:
    """Small-separation form: sum A_i' (f_i / f_i') mean_l cos(2 pi f_delta l T)."""
    return _interference(q, _approx_terms)


def interference_discrete(q: InterferenceQuery) -> float:
    """Interference predicted for the discrete extractor in :mod:`etfrmd.kpa`.

    The closed forms above describe a continuous-phase kernel; this one
    follows the sampled running phase the extractor actually uses, so it is
    the quantity a measurement on synthetic tones should be compared with.
    """
    return _interference(q, _discrete_terms)


def interference_envelope(q: InterferenceQuery) -> float:
    """sum |A_i'| f_i / f_i' -- the largest value either form can reach."""
    if not q.f_iprime:
        return 0.0
    return float(np.sum(np.abs(q.waveform_values()) * q.f_i / np.asarray(q.f_iprime)))


def mean_cos(f_delta: float, L: int, fs: float) -> float:
    """mean_l cos(2 pi f_delta l / fs) over the symmetric lag window."""
    return float(np.mean(np.cos(2 * np.pi * f_delta * lag_window(L) / fs)))


def separation_check(f_delta: float, L: int, fs: float, eps1: float) -> bool:
    """True when the lag-averaged cross term stays below ``eps1``."""
    if L < 2:
        raise ValueError("L must be >= 2")
    if L % 2:
        raise ValueError("L must be even")
    return abs(mean_cos(f_delta, L, fs)) < eps1


def resonant_lengths(f_delta: float, fs: float, count: int = 4) -> np.ndarray:
    """Window lengths n0 fs / f_delta (n0 = 1..count) that null the cross term."""
    if not f_delta > 0:
        raise ValueError("f_delta must be positive")
    return np.arange(1, count + 1) * fs / f_delta


# ---------------------------------------------------------------- curves ---

def _lag_means(terms_pos, terms_neg, L_grid):
    """Means over symmetric windows for every L in ``L_grid``.

    ``terms_pos[..., k]`` and ``terms_neg[..., k]`` hold the summand at lags
    +(k+1) and -(k+1).
    """
    L_grid = np.asarray(L_grid, dtype=int)
    if np.any(L_grid < 2) or np.any(L_grid % 2):
        raise ValueError("window lengths must be even and >= 2")
    cum = np.cumsum(terms_pos + terms_neg, axis=-1)
    return cum[..., L_grid // 2 - 1] / L_grid


def interference_curve(f1: float, f_delta: float, L_grid, fs: float,
                       form: str = "exact") -> np.ndarray:
    """Interference (unit amplitude, A = 1) on a 200-Hz-style mode versus L."""
    terms = {"exact": _exact_terms, "approx": _approx_terms,
             "discrete": _discrete_terms}[form]
    L_grid = np.asarray(L_grid, dtype=int)
    l = np.arange(1, L_grid.max() // 2 + 1, dtype=float)
    fp = f1 + f_delta
    return _lag_means(terms(f1, fp, l, fs), terms(f1, fp, -l, fs), L_grid)


def block_mean(values, size: int) -> np.ndarray:
    """Means of consecutive blocks of ``size`` samples (last block may be short)."""
    values = np.asarray(values, dtype=float)
    if size < 1:
        raise ValueError("block size must be >= 1")
    return np.array([values[i:i + size].mean() for i in range(0, values.size, size)])


def fig4_curves(f1: float = FIG4_F1, deltas: Sequence[float] = FIG4_DELTAS,
                fs: float = FIG4_FS, n_max: int = FIG4_N, na: int = FIG4_NA) -> dict:
    """Absolute amplitude error versus window length, both forms, per f_delta.

    Returns ``{f_delta: {"L", "exact", "approx", "L_avg", "exact_avg",
    "approx_avg"}}``; the ``_avg`` entries are means over blocks of ``na``
    consecutive window lengths, placed at each block's first L.
    """
    L = np.arange(2, n_max + 1, 2)
    out = {}
    for d in deltas:
        ex = np.abs(interference_curve(f1, d, L, fs, "exact"))
        ap = np.abs(interference_curve(f1, d, L, fs, "approx"))
        out[float(d)] = {
            "L": L, "exact": ex, "approx": ap,
            "L_avg": L[::na], "exact_avg": block_mean(ex, na),
            "approx_avg": block_mean(ap, na),
        }
    return out


# ------------------------------------------------------------------ bias ---

@dataclass(frozen=True)
class BiasQuery:
    """LFM segment f[n] = f0 + r0 n T probed at sample ``n``.

    ``delta`` holds IF-error samples (Hz); alternatively ``sigma_e`` (Hz)
    asks for ``draws`` seeded Gaussian samples.
    """

    f0: float
    r0: float = 0.0
    delta: Optional[Sequence[float]] = None
    sigma_e: Optional[float] = None
    L: int = 32
    fs: float = 1024.0
    n: int = 0
    draws: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError("f0 must be positive")
        if self.L < 2 or self.L % 2:
            raise ValueError(f"L must be an even integer >= 2, got {self.L}")
        if self.sigma_e is not None and self.sigma_e < 0:
            raise ValueError("sigma_e must be >= 0")

    def errors(self) -> np.ndarray:
        if self.delta is not None:
            return np.atleast_1d(np.asarray(self.delta, dtype=float))
        if self.sigma_e is None:
            return np.zeros(1)
        rng = np.random.default_rng(self.seed)
        return rng.normal(0.0, self.sigma_e, self.draws)

    def phase(self, n=None) -> np.ndarray:
        n = self.n if n is None else n
        T = 1.0 / self.fs
        n = np.asarray(n, dtype=float)
        return 2 * np.pi * self.f0 * n * T + np.pi * self.r0 * n ** 2 * T ** 2


def bias_constant_if(q: BiasQuery) -> float:
    """Small-error bias for a constant IF estimated with error Delta.

    x[n] * E{1 - (f_hat / f0) mean_l cos(2 pi Delta l T)} with the outer
    expectation over the supplied (or drawn) errors.
    """
    if q.r0 != 0:
        raise ValueError("the constant-IF bias needs r0 = 0")
    delta = q.errors()
    l = lag_window(q.L)
    c = np.cos(2 * np.pi * np.outer(delta, l) / q.fs).mean(axis=1)
    x = math.cos(float(q.phase()))
    return float(x * np.mean(1 - (q.f0 + delta) / q.f0 * c))


def _lfm_terms(f0, r0, n, l, fs, exact):
    """Per-(n, l) summand of the chirp bias expectation; ``n`` is a column."""
    T = 1.0 / fs
    f = f0 + r0 * n * T
    phi = 2 * np.pi * f0 * n * T + np.pi * r0 * n ** 2 * T ** 2
    d1 = f ** 2 / ((f + r0 * l * T) * (f - r0 * l * T))
    if not exact:
        return d1 * np.cos(phi + np.pi * r0 * l ** 2 * T ** 2)
    a2 = quarter_shift(f, fs)
    shift = r0 * T * (l + a2)
    d2 = f ** 2 / ((f + shift) * (f - shift))
    s2 = np.sin(2 * np.pi * l * T * f) ** 2
    return (d1 * s2 * np.cos(phi + np.pi * r0 * l ** 2 * T ** 2)
            + d2 * (1 - s2) * np.cos(phi + np.pi * r0 * T ** 2 * (l + a2) ** 2))


def bias_lfm(q: BiasQuery, exact: bool = True) -> float:
    """Bias at sample ``q.n`` of a perfectly tracked linear chirp.

    ``exact`` keeps the quarter-period lag terms; otherwise only the
    zero-offset term survives (the small fs / 4f form).  Both vanish for
    r0 = 0.
    """
    if q.delta is not None and np.any(np.asarray(q.delta) != 0):
        raise ValueError("the chirp bias assumes a perfect IF (delta = 0)")
    l = lag_window(q.L).astype(float)
    n = float(q.n)
    x = math.cos(float(q.phase()))
    return float(x - np.mean(_lfm_terms(q.f0, q.r0, np.array([[n]]), l[None, :], q.fs, exact)))


def mab_curve(f0: float, r0: float, L_grid, fs: float = FIG4B_FS,
              n_samples: int = FIG4B_N, exact: bool = True) -> np.ndarray:
    """Mean absolute chirp bias over n = 0..n_samples-1 for every L in the grid."""
    L_grid = np.asarray(L_grid, dtype=int)
    n = np.arange(n_samples, dtype=float)[:, None]
    l = np.arange(1, L_grid.max() // 2 + 1, dtype=float)[None, :]
    means = _lag_means(_lfm_terms(f0, r0, n, l, fs, exact),
                       _lfm_terms(f0, r0, n, -l, fs, exact), L_grid)
    T = 1.0 / fs
    x = np.cos(2 * np.pi * f0 * n * T + np.pi * r0 * n ** 2 * T ** 2)
    return np.mean(np.abs(x - means), axis=0)


def fig4b_curves(f0: float = FIG4B_F0, rates: Sequence[float] = FIG4B_RATES,
                 fs: float = FIG4B_FS, n_samples: int = FIG4B_N,
                 L_max: int = FIG4B_LMAX) -> dict:
    """MAB versus L for each chirp rate: ``{r0: {"L", "exact", "approx"}}``."""
    L = np.arange(2, L_max + 1, 2)
    return {float(r): {"L": L,
                       "exact": mab_curve(f0, r, L, fs, n_samples, True),
                       "approx": mab_curve(f0, r, L, fs, n_samples, False)}
            for r in rates}


def elementary_phase(r0: float, L: int, fs: float) -> float:
    """max_l pi |r0| l^2 / fs^2 over the window -- the term the bias budget caps."""
    return math.pi * abs(r0) * (L / 2) ** 2 / fs ** 2


def window_table(rates: Sequence[float] = TABLE_RATES,
                 eps2_values: Sequence[float] = TABLE_EPS2,
                 fs: float = 1024.0, cap: int = 1 << 16) -> list:
    """Rows (r0, eps2, L, elementary phase) of the window-length rule."""
    rows = []
    for r0 in rates:
        for eps2 in eps2_values:
            L = select_window_length(r0, eps2, fs, cap)
            rows.append((float(r0), float(eps2), int(L), elementary_phase(r0, L, fs)))
    return rows
