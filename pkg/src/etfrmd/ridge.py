"""Initial multi-mode IF estimation by penalised optimal-path search.

A path visits one bin per time slice.  Its cost is

    sum P1(rank)  +  sum P2(step)  +  sum P3(gradient change)

where P1 is the per-slice magnitude rank (0 for the largest), P2 charges
per-slice jumps beyond ``delta1`` bins at ``c1`` per bin, and P3 charges
changes of segment gradient beyond ``delta2`` bins/slice at ``c2`` per unit.
The path is a chain of linear segments whose nodes lie every ``segment``
slices; ``segment=1`` gives the plain per-step formulation with a
(bin, previous bin) Viterbi state.  Segment gradients are therefore
``displacement / segment_length`` and can be fractional.

Modes are peeled off one at a time: find the best path, zero a band of
``+-delta`` bins around it, repeat until little energy is left.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


class NoEnergyError(ValueError):
    """Raised when the magnitude grid has no energy to track."""

    def __init__(self, msg="no energy"):
        super().__init__(msg)


class TrackSource(str, enum.Enum):
    INITIAL = "initial"
    REFINED = "refined"


@dataclass(frozen=True)
class PenaltyConfig:
    c1: float = 50.0
    c2: float = 5000.0
    delta1: float = 3.0
    delta2: float = 0.3
    delta: int = 30
    epsilon0: float = 0.1
    max_transition: Optional[int] = None
    max_modes: int = 8
    segment: int = 16

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")
        if self.delta1 < 0 or self.delta2 < 0 or self.delta < 0:
            raise ValueError("tolerances and erase half-band must be non-negative")
        if not 0 < self.epsilon0 < 1:
            raise ValueError("epsilon0 must lie in (0, 1)")
        if self.max_transition is not None and self.max_transition < self.delta1:
            raise ValueError("max_transition must be >= delta1")
        if self.max_modes < 1 or self.segment < 1:
            raise ValueError("max_modes and segment must be >= 1")

    @property
    def transition(self) -> int:
        """Largest bin displacement allowed between consecutive path nodes."""
        if self.max_transition is not None:
            return int(self.max_transition)
        return int(np.ceil(3 * self.delta1))


@dataclass
class IFTrack:
    """Frequency trajectory, one value per time slice."""

    freqs_hz: np.ndarray
    bins: Optional[np.ndarray] = None
    source: TrackSource = TrackSource.INITIAL
    hop: int = 1
    warning: Optional[str] = None
    cost: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        self.freqs_hz = np.asarray(self.freqs_hz, dtype=float)
        if self.bins is not None:
            self.bins = np.asarray(self.bins, dtype=int)
        self.source = TrackSource(self.source)

    def __len__(self):
        return self.freqs_hz.size

    @classmethod
    def from_bins(cls, bins, fs, nfft, source=TrackSource.INITIAL, hop=1, **kw):
        bins = np.asarray(bins, dtype=int)
        return cls(bins * fs / nfft, bins, source, hop, **kw)

    def per_sample(self, n: int) -> np.ndarray:
        """IF in Hz at every sample, linearly interpolating between slices."""
        if self.hop == 1 and self.freqs_hz.size == n:
            return self.freqs_hz
        t = np.arange(self.freqs_hz.size) * self.hop
        return np.interp(np.arange(n), t, self.freqs_hz)


def rank_columns(mag: np.ndarray) -> np.ndarray:
    """Rank of every bin within its time slice, 0 for the largest magnitude.

    ``mag`` is indexed [slice, bin].  Ties go to the lower bin index.
    """
    mag = np.asarray(mag, dtype=float)
    if mag.size == 0:
        raise ValueError("empty grid")
    order = np.argsort(-mag, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(mag.shape[0])[:, None]
    ranks[rows, order] = np.arange(mag.shape[1])[None, :]
    return ranks


def _nodes(n_slices: int, segment: int) -> np.ndarray:
    nodes = list(range(0, n_slices, segment))
    if nodes[-1] != n_slices - 1:
        nodes.append(n_slices - 1)
    return np.asarray(nodes)


def _offsets(d: np.ndarray, length: int) -> np.ndarray:
    """Rounded bin offsets of a linear segment, shape (len(d), length + 1)."""
    j = np.arange(length + 1)
    return np.floor(np.outer(d, j) / length + 0.5).astype(int)


def _p2(steps, cfg):
    return cfg.c1 * np.maximum(np.abs(steps) - cfg.delta1, 0.0)


def _p3(g_prev, g_next, cfg):
    return cfg.c2 * np.maximum(np.abs(g_next - g_prev) - cfg.delta2, 0.0)


def _segment_tables(ranks, start, length, disp, cfg):
    """Cost and bin sum of every (start bin, displacement) segment.

    The start node's own rank is excluded.  Entries whose end bin leaves the
    grid are +inf.
    """
    n_bins = ranks.shape[1]
    off = _offsets(disp, length)                       # (D, length+1)
    a = np.arange(n_bins)
    bins = a[:, None, None] + off[None, :, :]          # (B, D, length+1)
    valid = (bins[:, :, -1] >= 0) & (bins[:, :, -1] < n_bins)
    safe = np.clip(bins, 0, n_bins - 1)
    rows = start + np.arange(1, length + 1)
    p1 = ranks[rows[None, None, :], safe[:, :, 1:]].sum(axis=2)
    p2 = _p2(np.diff(off, axis=1), cfg).sum(axis=1)
    cost = np.where(valid, p1 + p2[None, :], np.inf)
    binsum = np.where(valid, safe[:, :, 1:].sum(axis=2), 0)
    return cost, binsum


def find_optimal_path(mag: np.ndarray, cfg: PenaltyConfig = PenaltyConfig(),
                      fs: Optional[float] = None, nfft: Optional[int] = None) -> IFTrack:
    """Minimum-cost path through a magnitude grid indexed [slice, bin].

    Ties are broken towards the lower total bin sum, then the lower first
    bin.  ``fs`` and ``nfft`` only label the returned track in Hz; without
    them ``freqs_hz`` holds bin indices.
    """
    mag = np.asarray(mag, dtype=float)
    n_slices, n_bins = mag.shape
    if n_slices < 2:
        raise ValueError("need at least 2 time slices")
    if not np.any(mag > 0):
        raise NoEnergyError()
    ranks = rank_columns(mag)
    nodes = _nodes(n_slices, cfg.segment)
    M = min(cfg.transition, n_bins - 1)
    disp = np.arange(-M, M + 1)
    D = disp.size
    b = np.arange(n_bins)

    # state: (end bin, displacement index of the segment that ended there)
    length = nodes[1] - nodes[0]
    seg_cost, seg_sum = _segment_tables(ranks, nodes[0], length, disp, cfg)
    cost = np.full((n_bins, D), np.inf)
    bsum = np.zeros((n_bins, D))
    first = np.zeros((n_bins, D), dtype=int)
    for k, d in enumerate(disp):
        src = b - d
        ok = (src >= 0) & (src < n_bins)
        cost[ok, k] = ranks[0, src[ok]] + seg_cost[src[ok], k]
        bsum[ok, k] = src[ok] + seg_sum[src[ok], k]
        first[ok, k] = src[ok]
    grad = disp / length
    back = []

    for s in range(1, len(nodes) - 1):
        length = nodes[s + 1] - nodes[s]
        seg_cost, seg_sum = _segment_tables(ranks, nodes[s], length, disp, cfg)
        new_grad = disp / length
        p3 = _p3(grad[:, None], new_grad[None, :], cfg)  # (prev d, next d)
        new_cost = np.full((n_bins, D), np.inf)
        new_bsum = np.zeros((n_bins, D))
        new_first = np.zeros((n_bins, D), dtype=int)
        ptr = np.zeros((n_bins, D), dtype=np.int16)
        for k, d in enumerate(disp):
            cand = cost + p3[None, :, k]                    # (start bin, prev d)
            choice = _lex_argmin(cand, bsum, first)
            rows = np.arange(n_bins)
            best = cand[rows, choice]
            src = b - d
            ok = (src >= 0) & (src < n_bins)
            s_ok = src[ok]
            total = best[s_ok] + seg_cost[s_ok, k]
            new_cost[ok, k] = total
            new_bsum[ok, k] = bsum[s_ok, choice[s_ok]] + seg_sum[s_ok, k]
            new_first[ok, k] = first[s_ok, choice[s_ok]]
            ptr[ok, k] = choice[s_ok]
        back.append(ptr)
        cost, bsum, first, grad = new_cost, new_bsum, new_first, new_grad

    flat = _lex_argmin(cost.reshape(1, -1), bsum.reshape(1, -1), first.reshape(1, -1))[0]
    end_bin, k = divmod(int(flat), D)
    total = float(cost[end_bin, k])
    if not np.isfinite(total):
        raise NoEnergyError("no admissible path")

    node_bins = [end_bin]
    ks = [k]
    for ptr in reversed(back):
        prev_k = int(ptr[node_bins[-1], ks[-1]])
        node_bins.append(node_bins[-1] - disp[ks[-1]])
        ks.append(prev_k)
    node_bins.append(node_bins[-1] - disp[ks[-1]])
    node_bins = node_bins[::-1]

    path = _expand(node_bins, nodes)
    if fs is not None and nfft is not None:
        track = IFTrack.from_bins(path, fs, nfft)
    else:
        track = IFTrack(path.astype(float), path)
    track.cost = total
    return track


def _lex_argmin(cost, bsum, first):
    """Row-wise argmin of (cost, bin sum, first bin) in lexicographic order."""
    best = np.min(cost, axis=1, keepdims=True)
    tol = 1e-9 * np.maximum(1.0, np.abs(np.where(np.isfinite(best), best, 0.0)))
    tie = cost <= best + tol
    bs = np.where(tie, bsum, np.inf)
    tie &= bs <= np.min(bs, axis=1, keepdims=True)
    fb = np.where(tie, first, np.iinfo(np.int64).max)
    return np.argmin(fb, axis=1)


def _expand(node_bins, nodes) -> np.ndarray:
    path = np.empty(nodes[-1] + 1, dtype=int)
    path[0] = node_bins[0]
    for s in range(len(nodes) - 1):
        length = nodes[s + 1] - nodes[s]
        d = node_bins[s + 1] - node_bins[s]
        path[nodes[s]:nodes[s + 1] + 1] = node_bins[s] + _offsets(np.array([d]), length)[0]
    return path


def path_cost(mag: np.ndarray, path, cfg: PenaltyConfig, nodes=None) -> float:
    """Cost of an explicit per-slice path; P3 is evaluated between node segments."""
    ranks = rank_columns(mag)
    path = np.asarray(path, dtype=int)
    if nodes is None:
        nodes = _nodes(path.size, cfg.segment)
    cost = ranks[np.arange(path.size), path].sum()
    cost += _p2(np.diff(path), cfg).sum()
    grads = np.diff(path[nodes]) / np.diff(nodes)
    cost += _p3(grads[:-1], grads[1:], cfg).sum()
    return float(cost)


def erase_band(mag: np.ndarray, track, delta: int) -> np.ndarray:
    """Copy of ``mag`` with bins within +-delta of the track zeroed in every slice."""
    mag = np.array(mag, dtype=float, copy=True)
    bins = track.bins if isinstance(track, IFTrack) else np.asarray(track, dtype=int)
    if bins.size != mag.shape[0]:
        raise ValueError("track length must equal the number of slices")
    cols = np.arange(mag.shape[1])
    mask = np.abs(cols[None, :] - bins[:, None]) <= delta
    mag[mask] = 0.0
    return mag


def noise_floor(power: np.ndarray, tau: float = math.log(10.0),
                iterations: int = 50) -> float:
    """Mean noise power per cell, robust to ridge cells.

    Cells of complex Gaussian noise have exponentially distributed power.
    Starting from the median, cells above ``tau`` times the current mean are
    dropped and the mean is re-solved from the truncated-exponential mean of
    the remaining cells, until it settles.
    """
    power = np.asarray(power, dtype=float).ravel()
    mu = float(np.median(power) / math.log(2.0))
    if mu <= 0:
        return 0.0
    shrink = (1 - math.exp(-tau)) / (1 - (1 + tau) * math.exp(-tau))
    for _ in range(iterations):
        kept = power[power <= tau * mu]
        new = float(kept.mean()) * shrink if kept.size else mu
        if abs(new - mu) <= 1e-9 * mu:
            break
        mu = new
    return mu


def estimate_initial_ifs(tf, cfg: PenaltyConfig = PenaltyConfig()) -> list:
    """Peel off optimal paths until the residual energy ratio drops below epsilon0.

    Energy is magnitude squared minus an estimated noise floor, so the
    stopping rule is not fooled by broadband noise.  Tracks come back in
    extraction order, strongest first.
    """
    mag = np.abs(tf.data[:, :tf.n_bins])
    if not np.any(mag > 0):
        raise NoEnergyError()
    power = mag ** 2
    floor = noise_floor(power)
    original = float(np.sum(power - floor))
    erased = np.zeros(mag.shape, dtype=bool)
    tracks = []
    current = mag
    while len(tracks) < cfg.max_modes:
        try:
            track = find_optimal_path(current, cfg)
        except NoEnergyError:
            if not tracks:
                raise
            break
        track = IFTrack.from_bins(track.bins, tf.fs, tf.nfft, hop=tf.hop, cost=track.cost)
        tracks.append(track)
        current = erase_band(current, track, cfg.delta)
        cols = np.arange(mag.shape[1])
        erased |= np.abs(cols[None, :] - track.bins[:, None]) <= cfg.delta
        residual = float(np.sum((power - floor)[~erased]))
        ratio = residual / original if original > 0 else 0.0
        logger.debug("mode %d: residual energy ratio %.4f", len(tracks), ratio)
        if ratio < cfg.epsilon0:
            break
    return tracks
