"""End-to-end runner: STFT, ridge tracking, KPA enhancement, ridge
reconstruction and metrics, with every intermediate written to disk.

Configuration is a JSON object::

    {
      "input":  {"preset": "fig1b", "snr_db": 5, "n": 1024, "fs": 1024}
                | {"csv": "signal.csv"} | {"wav": "signal.wav"}
                | {"modes": [{"kind": "SFM", "carrier": 250, ...}], "snr_db": 5},
      "seed":   0,
      "output": "out/",
      "stft":   {"sigma": null, "nfft": null, "hop": 1},
      "ridge":  {"c1": 50, "c2": 5000, "delta1": 3, "delta2": 0.3, "delta": 30,
                 "epsilon0": 0.1, "max_transition": null, "max_modes": 8,
                 "segment": 16},
      "kpa":    {"L": 32, "K": 3, "mu": null, "epsilon2": 0.01, "L_max": 256,
                 "boundary": "reflect", "exact": true, "search_halfwidth": 30},
      "edge":   null
    }

Relative paths are taken relative to the config file.  ``edge`` is the
number of samples dropped at each end before computing metrics (default
ceil(3 sigma fs)).
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__
from . import analysis
from . import io
from .kpa import Boundary, KpaConfig, window_for, encode, enhance
from .ridge import NoEnergyError, PenaltyConfig, estimate_initial_ifs
from .signals import (GroundTruth, ModeSpec, NoiseSpec, TimeSeries, analytic,
                      preset as preset_specs, synthesize_multimode)
from .synthesis import (default_edge, etfr, mse, output_snr, reconstruct_mode,
                        reconstruct_signal, seo_for)
from .tfa import StftConfig, stft


class InputError(Exception):
    """Bad configuration or unreadable input (CLI exit code 2)."""


class StageError(Exception):
    """A pipeline stage failed (CLI exit code 3)."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class InputSpec:
    preset: Optional[str] = None
    csv: Optional[Path] = None
    wav: Optional[Path] = None
    modes: Optional[list] = None
    snr_db: float = math.inf
    n: int = 1024
    fs: float = 1024.0

    def validate(self):
        given = [k for k in ("preset", "csv", "wav", "modes") if getattr(self, k) is not None]
        if len(given) != 1:
            raise InputError(f"input needs exactly one of preset/csv/wav/modes, got {given or 'none'}")
        if self.n < 2 or not self.fs > 0:
            raise InputError("input n must be >= 2 and fs positive")

    @property
    def kind(self) -> str:
        return next(k for k in ("preset", "csv", "wav", "modes") if getattr(self, k) is not None)


@dataclass
class PipelineConfig:
    input: InputSpec
    output: Path
    stft: StftConfig = field(default_factory=StftConfig)
    ridge: PenaltyConfig = field(default_factory=PenaltyConfig)
    kpa: KpaConfig = field(default_factory=KpaConfig)
    seed: int = 0
    edge: Optional[int] = None


def _build(cls, raw, section):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise InputError(f"'{section}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise InputError(f"unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid '{section}': {exc}") from None


def parse_config(raw: dict, base: Path = Path(".")) -> PipelineConfig:
    """Validate a config mapping; relative paths resolve against ``base``."""
    if not isinstance(raw, dict):
        raise InputError("config must be a JSON object")
    unknown = set(raw) - {"input", "output", "stft", "ridge", "kpa", "seed", "edge"}
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    if "input" not in raw or "output" not in raw:
        raise InputError("config needs 'input' and 'output'")
    inp = dict(raw["input"]) if isinstance(raw["input"], dict) else None
    if inp is None:
        raise InputError("'input' must be an object")
    for key in ("csv", "wav"):
        if inp.get(key) is not None:
            inp[key] = (base / inp[key]).resolve()
    if "snr_db" in inp and inp["snr_db"] is None:
        inp["snr_db"] = math.inf
    spec = _build(InputSpec, inp, "input")
    spec.validate()
    stft_cfg = _build(StftConfig, raw.get("stft"), "stft")
    ridge = _build(PenaltyConfig, raw.get("ridge"), "ridge")
    kpa = _build(KpaConfig, raw.get("kpa"), "kpa")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise InputError("seed must be a non-negative integer")
    edge = raw.get("edge")
    if edge is not None and (not isinstance(edge, int) or edge < 0):
        raise InputError("edge must be a non-negative integer")
    return PipelineConfig(spec, (base / raw["output"]).resolve(), stft_cfg, ridge, kpa,
                          seed, edge)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw, path.parent)


def load_input(spec: InputSpec, seed: int):
    """Return (signal, ground truth or None)."""
    try:
        if spec.kind == "preset":
            return synthesize_multimode(preset_specs(spec.preset),
                                        NoiseSpec(spec.snr_db, seed), spec.n, spec.fs)
        if spec.kind == "modes":
            specs = [ModeSpec(**m) for m in spec.modes]
            return synthesize_multimode(specs, NoiseSpec(spec.snr_db, seed), spec.n, spec.fs)
        path = spec.csv if spec.kind == "csv" else spec.wav
        if path is not None and not Path(path).is_file():
            raise InputError(f"input file not found: {path}")
        if spec.kind == "csv":
            return io.read_series_csv(spec.csv), None
        return io.read_wav(spec.wav), None
    except OSError as exc:
        raise InputError(f"cannot read input: {exc}") from None
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(f"bad input: {exc}") from None


@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except NoEnergyError as exc:
        raise StageError(name, f"no modes found ({exc})") from exc
    except Exception as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
    finally:
        timings[name] = time.perf_counter() - t0


def _config_dict(cfg: PipelineConfig, stft_cfg: StftConfig) -> dict:
    def plain(obj):
        d = dataclasses.asdict(obj)
        return {k: (v.value if isinstance(v, Boundary) else v) for k, v in d.items()}
    inp = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in dataclasses.asdict(cfg.input).items() if v is not None}
    if math.isinf(inp.get("snr_db", 0.0)):
        inp["snr_db"] = None
    return {"input": inp, "seed": cfg.seed, "stft": plain(stft_cfg),
            "ridge": plain(cfg.ridge), "kpa": plain(cfg.kpa), "edge": cfg.edge}


def match_tracks(tracks, truth_tracks, n: int, edge: int) -> list:
    """Pair estimated tracks with true IF laws by minimum total RMS IF error.

    Returns one truth index (or None) per estimated track.
    """
    if not tracks or not truth_tracks:
        return [None] * len(tracks)
    sl = slice(edge, n - edge) if 2 * edge < n else slice(None)
    cost = np.array([[math.sqrt(float(np.mean((t.per_sample(n)[sl] - g[sl]) ** 2)))
                      for g in truth_tracks] for t in tracks])
    rows, cols = linear_sum_assignment(cost)
    out = [None] * len(tracks)
    for r, c in zip(rows, cols):
        out[r] = int(c)
    return out


def _rms(a, b, edge):
    a, b = np.asarray(a), np.asarray(b)
    sl = slice(edge, a.size - edge) if 2 * edge < a.size else slice(None)
    return math.sqrt(float(np.mean((a[sl] - b[sl]) ** 2)))


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage, write all artifacts under ``cfg.output`` and return the report.

    Input problems raise :class:`InputError` before anything is written;
    failures inside a stage raise :class:`StageError` naming the stage.
    """
    signal, truth = load_input(cfg.input, cfg.seed)
    if not np.all(np.isfinite(signal.samples)):
        raise InputError("input contains NaN or infinite samples")
    n = len(signal)
    try:
        stft_cfg = cfg.stft.resolve(n, signal.fs)
    except ValueError as exc:
        raise InputError(f"invalid 'stft': {exc}") from None
    edge = cfg.edge if cfg.edge is not None else default_edge(stft_cfg.sigma, signal.fs)
    if 2 * edge >= n:
        edge = 0

    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None

    timings = {}
    notes = []
    io.write_series_csv(out / "input.csv", signal)

    with _stage("stft", timings):
        tf = stft(analytic(signal), stft_cfg, signal.fs)
        io.write_tf(out / "stft.bin", tf)
        io.write_pgm(out / "spectrogram.pgm", np.abs(tf.data[:, :tf.n_bins]))

    with _stage("initial_if", timings):
        initial = estimate_initial_ifs(tf, cfg.ridge)
        for i, tr in enumerate(initial):
            io.write_track_csv(out / f"mode_{i}_if_initial.csv", tr)

    with _stage("enhance", timings):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            windows = [window_for(tr, cfg.kpa, signal.fs) for tr in initial]
            mu = encode(signal, cfg.kpa.mu).mu
            enhanced, kpa_modes = enhance(signal, initial, cfg.kpa, stft_cfg)
        for w in caught:
            msg = f"enhance: {w.message}"
            if msg not in notes:
                notes.append(msg)
        for i, (tr, mode) in enumerate(zip(enhanced, kpa_modes)):
            io.write_track_csv(out / f"mode_{i}_if_enhanced.csv", tr)
            io.write_values_csv(out / f"mode_{i}_kpa.csv", mode.samples)
            if tr.warning:
                notes.append(f"mode {i}: {tr.warning}")

    with _stage("reconstruct", timings):
        mask = seo_for(tf, enhanced)
        enhanced_tf = etfr(tf, mask)
        io.write_tf(out / "etfr.bin", enhanced_tf)
        recon = [reconstruct_mode(tf, tr) for tr in enhanced]
        for i, m in enumerate(recon):
            io.write_values_csv(out / f"mode_{i}_recon.csv", m.samples)
        total_recon = reconstruct_signal(recon)
        io.write_values_csv(out / "recon_total.csv", total_recon)

    with _stage("metrics", timings):
        metrics, mode_rows = _metrics(signal, truth, initial, enhanced, recon,
                                      total_recon, edge)
        io.write_json(out / "metrics.json", metrics)

    for i, row in enumerate(mode_rows):
        row.update({"index": i, "window_length": int(windows[i]),
                    "initial_path_cost": initial[i].cost,
                    "mean_if_hz": float(np.mean(enhanced[i].freqs_hz))})
    report = {
        "version": __version__,
        "n_samples": n,
        "fs": signal.fs,
        "n_modes": len(enhanced),
        "edge": edge,
        "mu": mu,
        "modes": mode_rows,
        "total": metrics["total"],
        "config": _config_dict(cfg, stft_cfg),
        "warnings": notes,
        "timings_s": timings,
    }
    io.write_json(out / "report.json", report)
    return report


def _metrics(signal, truth: Optional[GroundTruth], initial, enhanced, recon,
             total_recon, edge):
    n = len(signal)
    rows = [{"truth_index": None, "mse": None, "output_snr_db": None,
             "if_rms_initial_hz": None, "if_rms_enhanced_hz": None} for _ in enhanced]
    total = {"mse": None, "output_snr_db": None, "input_snr_db": None}
    if truth is not None:
        pairs = match_tracks(enhanced, truth.tracks, n, edge)
        for i, k in enumerate(pairs):
            if k is None:
                continue
            rows[i].update({
                "truth_index": k,
                "mse": mse(truth.modes[k], recon[i].samples, edge),
                "output_snr_db": output_snr(truth.modes[k], recon[i].samples, edge),
                "if_rms_initial_hz": _rms(initial[i].per_sample(n), truth.tracks[k], edge),
                "if_rms_enhanced_hz": _rms(enhanced[i].per_sample(n), truth.tracks[k], edge),
            })
        clean = truth.clean
        noise = signal.samples - clean
        in_snr = (math.inf if not np.any(noise)
                  else 10 * math.log10(float(np.sum(clean ** 2)) / float(np.sum(noise ** 2))))
        total = {"mse": mse(clean, total_recon, edge),
                 "output_snr_db": output_snr(clean, total_recon, edge),
                 "input_snr_db": None if math.isinf(in_snr) else in_snr}
    metrics = {"per_mode": [{"mse": r["mse"], "output_snr_db": r["output_snr_db"]}
                            for r in rows],
               "total": total}
    return metrics, rows


# ------------------------------------------------------------ synthesis ---

def write_synthetic(preset_name: str, snr_db: float, seed: int, out,
                    n: int = 1024, fs: float = 1024.0) -> list:
    """Render a preset with noise and write the signal plus its ground truth."""
    try:
        signal, truth = synthesize_multimode(preset_specs(preset_name),
                                             NoiseSpec(snr_db, seed), n, fs)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    written = [out / "signal.csv", out / "signal.wav", out / "clean.csv"]
    io.write_series_csv(written[0], signal)
    io.write_wav(written[1], signal)
    io.write_series_csv(written[2], TimeSeries(truth.clean, fs))
    for i, (mode, track) in enumerate(zip(truth.modes, truth.tracks)):
        io.write_values_csv(out / f"mode_{i}_truth.csv", mode)
        io.write_values_csv(out / f"mode_{i}_if_truth.csv", track)
        written += [out / f"mode_{i}_truth.csv", out / f"mode_{i}_if_truth.csv"]
    io.write_json(out / "synth.json", {"preset": preset_name, "seed": seed,
                                       "snr_db": None if math.isinf(snr_db) else snr_db,
                                       "n": n, "fs": fs, "n_modes": len(truth.modes)})
    written.append(out / "synth.json")
    return written


# -------------------------------------------------------- reproductions ---

REPRODUCTION_TARGETS = ("fig4", "fig4b", "table_window")


def run_reproduction(target: str, out) -> list:
    """Write the curve CSVs of one analysis target; returns the file paths."""
    if target not in REPRODUCTION_TARGETS:
        raise InputError(f"unknown target {target!r}; choose from {REPRODUCTION_TARGETS}")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    written = []
    if target == "fig4":
        for d, c in analysis.fig4_curves().items():
            p = out / f"fig4_fdelta_{d:g}.csv"
            io.write_columns_csv(p, ["L", "exact", "approx"], [c["L"], c["exact"], c["approx"]])
            q = out / f"fig4_avg_fdelta_{d:g}.csv"
            io.write_columns_csv(q, ["L", "exact", "approx"],
                                 [c["L_avg"], c["exact_avg"], c["approx_avg"]])
            written += [p, q]
    elif target == "fig4b":
        for r, c in analysis.fig4b_curves().items():
            p = out / f"fig4b_r0_{r:g}.csv"
            io.write_columns_csv(p, ["L", "exact", "approx"], [c["L"], c["exact"], c["approx"]])
            written.append(p)
    else:
        rows = analysis.window_table()
        p = out / "table_window.csv"
        io.write_columns_csv(p, ["r0", "epsilon2", "L", "elementary_phase"],
                             list(zip(*rows)))
        written.append(p)
    return written
