import json
import math
import subprocess
import sys

import numpy as np
import pytest

from etfrmd import __version__, io
from etfrmd.cli import main
from etfrmd.pipeline import (InputError, StageError, load_config, match_tracks,
                             parse_config, run_pipeline, run_reproduction)
from etfrmd.ridge import IFTrack
from etfrmd.signals import TimeSeries


def write_config(tmp_path, **cfg):
    cfg.setdefault("output", "out")
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return p


def test_crossing_preset_at_5db_reports_two_modes(tmp_path):
    p = write_config(tmp_path, input={"preset": "fig1b", "snr_db": 5}, seed=3)
    report = run_pipeline(load_config(p))
    assert report["n_modes"] == 2
    out = tmp_path / "out"
    for name in ("input.csv", "stft.bin", "stft.bin.json", "spectrogram.pgm", "etfr.bin",
                 "recon_total.csv", "metrics.json", "report.json"):
        assert (out / name).exists(), name
    for i in range(2):
        for stem in ("if_initial", "if_enhanced", "kpa", "recon"):
            assert (out / f"mode_{i}_{stem}.csv").exists()
    metrics = io.read_json(out / "metrics.json")
    assert len(metrics["per_mode"]) == 2
    assert set(metrics["per_mode"][0]) == {"mse", "output_snr_db"}
    assert set(report["timings_s"]) == {"stft", "initial_if", "enhance", "reconstruct",
                                        "metrics"}
    assert report["version"] == __version__


def test_noiseless_single_tone_is_rebuilt_cleanly(tmp_path):
    p = write_config(tmp_path, input={"modes": [{"kind": "LFM", "f0": 200.0}]})
    report = run_pipeline(load_config(p))
    assert report["n_modes"] == 1
    assert report["modes"][0]["output_snr_db"] > 40
    assert report["total"]["output_snr_db"] > 40


def test_csv_input_has_no_metrics(tmp_path):
    t = np.arange(512) / 512.0
    io.write_series_csv(tmp_path / "sig.csv",
                        TimeSeries(np.cos(2 * np.pi * 60 * t), 512.0))
    p = write_config(tmp_path, input={"csv": "sig.csv"})
    report = run_pipeline(load_config(p))
    assert report["n_modes"] == 1
    assert report["fs"] == pytest.approx(512.0)
    assert report["modes"][0]["output_snr_db"] is None


def test_missing_input_fails_without_output(tmp_path):
    p = write_config(tmp_path, input={"csv": "nope.csv"})
    with pytest.raises(InputError, match="not found"):
        run_pipeline(load_config(p))
    assert not (tmp_path / "out").exists()


def test_config_errors(tmp_path):
    with pytest.raises(InputError):
        parse_config({"input": {"preset": "fig1a", "csv": "x"}, "output": "o"})
    with pytest.raises(InputError):
        parse_config({"input": {}, "output": "o"})
    with pytest.raises(InputError):
        parse_config({"input": {"preset": "fig1a"}})
    with pytest.raises(InputError, match="unknown"):
        parse_config({"input": {"preset": "fig1a"}, "output": "o", "extra": 1})
    with pytest.raises(InputError, match="ridge"):
        parse_config({"input": {"preset": "fig1a"}, "output": "o", "ridge": {"c1": -1}})
    with pytest.raises(InputError):
        parse_config({"input": {"preset": "fig1a"}, "output": "o", "kpa": {"L": 3}})
    with pytest.raises(InputError):
        parse_config({"input": {"preset": "fig1a"}, "output": "o", "seed": -1})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        load_config(bad)
    with pytest.raises(InputError):
        load_config(tmp_path / "missing.json")


def test_defaults_are_the_published_parameters():
    cfg = parse_config({"input": {"preset": "fig1a"}, "output": "o"})
    r, k = cfg.ridge, cfg.kpa
    assert (r.c1, r.c2, r.delta1, r.delta2, r.delta) == (50, 5000, 3, 0.3, 30)
    assert (k.K, k.L) == (3, 32)
    assert cfg.input.snr_db == math.inf


def test_silent_input_is_a_stage_error(tmp_path):
    io.write_series_csv(tmp_path / "zero.csv",
                        TimeSeries(np.zeros(256), 256.0))
    p = write_config(tmp_path, input={"csv": "zero.csv"})
    with pytest.raises(StageError) as err:
        run_pipeline(load_config(p))
    assert err.value.stage == "initial_if"


def test_match_tracks_pairs_by_rms():
    truth = [np.full(100, 50.0), np.full(100, 150.0)]
    tracks = [IFTrack(np.full(100, 149.0)), IFTrack(np.full(100, 52.0))]
    assert match_tracks(tracks, truth, 100, 10) == [1, 0]
    assert match_tracks(tracks, [], 100, 10) == [None, None]


def test_reproduction_targets(tmp_path):
    files = run_reproduction("fig4b", tmp_path / "b")
    assert len(files) == 7
    assert files[0].read_text().splitlines()[0] == "L,exact,approx"
    table = run_reproduction("table_window", tmp_path / "t")[0]
    rows = [line.split(",") for line in table.read_text().splitlines()]
    assert rows[0] == ["r0", "epsilon2", "L", "elementary_phase"]
    assert ["10", "0.01", "36"] in [r[:3] for r in rows[1:]]
    with pytest.raises(InputError):
        run_reproduction("fig9", tmp_path)


def test_fig4_reproduction_schema(tmp_path):
    files = run_reproduction("fig4", tmp_path)
    names = {f.name for f in files}
    for d in (1, 5, 10, 50, 100, 200):
        assert f"fig4_fdelta_{d}.csv" in names and f"fig4_avg_fdelta_{d}.csv" in names
    lines = (tmp_path / "fig4_fdelta_5.csv").read_text().splitlines()
    assert lines[0] == "L,exact,approx"
    assert len(lines) == 1 + 10240 // 2


# ------------------------------------------------------------------- cli ---

def test_cli_exit_codes(tmp_path, capsys):
    assert main(["synth", "--preset", "fig1b", "--snr", "5", "--seed", "1",
                 "--out", str(tmp_path / "syn")]) == 0
    assert (tmp_path / "syn" / "signal.csv").exists()
    assert (tmp_path / "syn" / "signal.wav.json").exists()
    assert (tmp_path / "syn" / "mode_1_if_truth.csv").exists()

    p = write_config(tmp_path, input={"csv": "syn/signal.csv"})
    assert main(["decompose", "--config", str(p)]) == 0
    assert "mode(s) found" in capsys.readouterr().out

    missing = write_config(tmp_path, input={"csv": "absent.csv"}, output="gone")
    assert main(["decompose", "--config", str(missing)]) == 2
    assert not (tmp_path / "gone").exists()

    io.write_series_csv(tmp_path / "zero.csv",
                        TimeSeries(np.zeros(256), 256.0))
    silent = write_config(tmp_path, input={"csv": "zero.csv"}, output="z")
    assert main(["decompose", "--config", str(silent)]) == 3
    assert "initial_if" in capsys.readouterr().err

    assert main(["analyze", "--target", "table_window", "--out", str(tmp_path / "a")]) == 0


def test_cli_version_and_help():
    out = subprocess.run([sys.executable, "-m", "etfrmd", "--version"], capture_output=True,
                         text=True, check=True).stdout
    assert __version__ in out
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--target", "nope", "--out", "x"])
    assert exc.value.code == 2
