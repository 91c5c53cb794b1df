"""Tracking, enhancement and reconstruction of the modes of multi-mode FM
signals, including modes whose instantaneous frequencies cross.

The stages, each in its own module:

* :mod:`etfrmd.signals` -- test signals with ground truth, AWGN, analytic signal;
* :mod:`etfrmd.tfa` -- Gaussian-window STFT;
* :mod:`etfrmd.ridge` -- penalised ridge tracking, one mode at a time;
* :mod:`etfrmd.kpa` -- kernel phase averaging and iterative IF refinement;
* :mod:`etfrmd.synthesis` -- ridge mask, enhanced TFR, reconstruction, metrics;
* :mod:`etfrmd.analysis` -- closed-form interference and bias oracles;
* :mod:`etfrmd.pipeline` / :mod:`etfrmd.cli` -- end-to-end runner and CLI.
"""

__version__ = "0.1.0"

from .signals import (GroundTruth, ModeKind, ModeSpec, NoiseSpec, TimeSeries, analytic,
                      preset, synthesize_multimode, synthesize_preset)
from .tfa import StftConfig, TFMatrix, stft
from .ridge import IFTrack, NoEnergyError, PenaltyConfig, estimate_initial_ifs, find_optimal_path
from .kpa import KpaConfig, enhance, encode, kpa_extract_mode, refine_if, select_window_length
from .synthesis import etfr, output_snr, reconstruct_mode, reconstruct_signal, seo

__all__ = [
    "GroundTruth", "ModeKind", "ModeSpec", "NoiseSpec", "TimeSeries", "analytic", "preset",
    "synthesize_multimode", "synthesize_preset", "StftConfig", "TFMatrix", "stft", "IFTrack",
    "NoEnergyError", "PenaltyConfig", "estimate_initial_ifs", "find_optimal_path",
    "KpaConfig", "enhance", "encode", "kpa_extract_mode", "refine_if",
    "select_window_length", "etfr", "output_snr", "reconstruct_mode", "reconstruct_signal",
    "seo", "__version__",
]
