import subprocess
import sys

import numpy as np
import pytest

from nlanc.acoustics import build_plant, read_rir_csv
from nlanc.cli import main
from nlanc.harness import read_results_csv

CONFIG = """
[experiment]
eta2_grid = inf
noise_sources = pink
duration = 1
output_dir = {out}

[algorithm:w]
type = wiener
taps = 128

[algorithm:td]
type = td_fxlms
taps = 64
mu = 1e-3
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "grid.ini"
    path.write_text(CONFIG.format(out=tmp_path / "out"))
    return path


def test_rir(tmp_path, capsys):
    assert main(["rir", "--output-dir", str(tmp_path), "--wav"]) == 0
    plant = build_plant()
    np.testing.assert_array_equal(read_rir_csv(tmp_path / "primary.csv"), plant.primary)
    np.testing.assert_array_equal(read_rir_csv(tmp_path / "secondary.csv"), plant.secondary)
    assert (tmp_path / "secondary.wav").is_file()


def test_run(config, tmp_path, capsys):
    assert main(["run", str(config)]) == 0
    rows = read_results_csv(tmp_path / "out" / "results.csv")
    assert [r["algorithm"] for r in rows] == ["TD-FxLMS(64)", "Wiener(128)"]
    assert "dBA / NMSE" in capsys.readouterr().out


def test_wiener(tmp_path, capsys):
    weights = tmp_path / "w.csv"
    assert main(["wiener", "--duration", "1", "--taps", "64", "256",
                 "--weights", str(weights)]) == 0
    assert len(read_rir_csv(weights)) == 64
    out = capsys.readouterr().out
    assert "Wiener(64)" in out and "Wiener(256)" in out


def test_train_eval_spectrogram(config, tmp_path, capsys):
    ckpt = tmp_path / "m.wvnn"
    assert main(["train", "--output", str(ckpt), "--noises", "pink", "--seconds", "3",
                 "--channels", "2", "--layers", "3", "--epochs", "2", "--crop", "2000"]) == 0
    assert "epoch   2" in capsys.readouterr().out
    assert main(["eval", str(ckpt), "--duration", "1", "--eta2", "0.5",
                 "--output-dir", str(tmp_path / "ev")]) == 0
    assert read_results_csv(tmp_path / "ev" / "eval.csv")[0]["algorithm"] == "WaveNet-VNN"
    assert main(["spectrogram", str(config), "--algorithm", "w", "--output-dir",
                 str(tmp_path / "sp")]) == 0
    assert (tmp_path / "sp" / "w_pink_inf_anc_on.csv").is_file()


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nbogus = 1\n[algorithm:a]\ntype = wiener\n")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    assert main(["eval", str(tmp_path / "none.wvnn")]) == 2
    assert main(["wiener", "--eta2", "-1"]) == 2
    assert main(["train", "--output", str(tmp_path / "x"), "--noises", "brown"]) == 2
    assert "error:" in capsys.readouterr().err


def test_numerical_failure(tmp_path, capsys):
    cfg = tmp_path / "div.ini"
    cfg.write_text("[experiment]\nduration = 0.5\neta2_grid = inf\n"
                   "[step_search]\nbracket = 50, 1000\niterations = 4\nsearch_passes = 1\n"
                   "[algorithm:td]\ntype = td_fxlms\ntaps = 64\n")
    assert main(["spectrogram", str(cfg), "--algorithm", "td",
                 "--output-dir", str(tmp_path)]) == 3
    assert main(["run", str(cfg), "--strict", "--output-dir", str(tmp_path)]) == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nlanc", "--version"], capture_output=True,
                          text=True, check=True)
    assert proc.stdout.startswith("nlanc ")
