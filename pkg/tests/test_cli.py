import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from levyrd.cli import compute_run, fmt, main
from levyrd.config import ConfigError, load_run_config
from levyrd.records import decode_ensemble

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[run]
seed = 3
[domain]
modes = 4
[model]
name = gierer_meinhardt
diffusion = 0.01, 0.2
sigma = multiplicative
sigma_coeffs = 0.1
jump = multiplicative
jump_coeffs = 0.1
[initial]
values = 2.0
perturb_amplitude = 0.1
[noise]
intensity = compound_poisson
intensity_params = rate=2, law=rademacher
[solver]
level = 3
paths = 8
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_error(out):
    return dict(line.split("=", 1) for line in (out / "error.txt").read_text().splitlines())


def test_unknown_model_exit_code(tmp_path):
    cfg = write(tmp_path, SMALL.replace("gierer_meinhardt", "brusselator"))
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 2
    assert read_error(out)["field"] == "model.name"


@pytest.mark.parametrize("edit,field", [
    (("[solver]", "[solver]\nbogus = 1"), "solver.bogus"),
    (("level = 3", "level = 40"), "solver.level"),
    (("level = 3", "level = three"), "solver.level"),
    (("[run]", "[nonsense]\nx = 1\n[run]"), "nonsense"),
    (("values = 2.0", "values = 1, 2, 3"), "initial.values"),
    (("intensity = compound_poisson", "intensity = cauchy"), "noise.intensity"),
])
def test_config_errors_name_the_field(tmp_path, edit, field):
    cfg = write(tmp_path, SMALL.replace(*edit))
    with pytest.raises(ConfigError) as info:
        load_run_config(cfg)
    assert info.value.field == field


def test_missing_config_is_io_error(tmp_path):
    assert main(["run", str(tmp_path / "none.ini"), "--out-dir", str(tmp_path)]) == 4


def test_failure_rate_exit_code(tmp_path):
    text = """
[run]
max_failure_rate = 0.0
[domain]
modes = 2
[model]
name = newell_whitehead
diffusion = 0
[initial]
values = 1e120
[solver]
level = 2
paths = 2
"""
    out = tmp_path / "out"
    assert main(["run", str(write(tmp_path, text)), "--out-dir", str(out)]) == 3
    assert read_error(out)["field"] == "run.max_failure_rate"


def test_run_outputs_match_library(tmp_path):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 0
    result = compute_run(load_run_config(cfg))
    with open(out / "moments.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["moment"] for r in rows] == ["x_m", "xprime_m0", "x_m1"]
    for row, lib in zip(rows, result.moments):
        assert row["mean"] == fmt(lib.mean) and float(row["mean"]) == lib.mean
    manifest = dict(line.split("=", 1) for line in (out / "manifest.txt").read_text().splitlines())
    assert manifest["seed"] == "3" and manifest["paths"] == "8"
    assert float(manifest["self_consistency_residual"]) <= 1e-10


def test_seed_override_and_binary_snapshot(tmp_path):
    cfg = write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg), "--out-dir", str(a), "--format", "binary"]) == 0
    assert main(["run", str(cfg), "--out-dir", str(b), "--seed", "4"]) == 0
    assert (a / "moments.csv").read_bytes() != (b / "moments.csv").read_bytes()
    ens = decode_ensemble((a / "ensemble.bin").read_bytes())
    config = load_run_config(cfg)
    assert np.array_equal(ens.values, compute_run(config).ensemble.values)
    assert not (b / "ensemble.bin").exists()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LEVYRD_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", str(write(tmp_path, SMALL))]) == 0
    assert (tmp_path / "env" / "tightness.csv").exists()


def test_picard_mode_writes_trace(tmp_path):
    text = SMALL.replace("[run]", "[run]\nmode = picard") + "max_sweeps = 2\nradius = 100\n"
    out = tmp_path / "out"
    assert main(["run", str(write(tmp_path, text)), "--out-dir", str(out)]) == 0
    with open(out / "law_distance.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert 1 <= len(rows) <= 2 and all(float(r["distance"]) >= 0 for r in rows)


def test_small_projection_suite(tmp_path):
    cfg = write(tmp_path, "[projections]\npaths = 6\nlevels = 1, 2\nms = 2\nalphas = 0.25\n")
    assert main(["suite", "projections", str(cfg), "--out-dir", str(tmp_path)]) == 0
    with open(tmp_path / "inequality_summary.csv", newline="") as fh:
        assert all(r["violations"] == "0" for r in csv.DictReader(fh))


def test_plot_writes_png(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert main(["run", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert main(["plot", str(tmp_path / "tightness.csv")]) == 0
    assert (tmp_path / "tightness.png").read_bytes()[:4] == b"\x89PNG"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "levyrd", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()


def test_shipped_configs_parse():
    for name in ("kpp_deterministic.ini", "gierer_meinhardt.ini", "gierer_meinhardt_picard.ini"):
        load_run_config(CONFIGS / name)
