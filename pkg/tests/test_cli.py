import json
import subprocess
import sys

import pytest

from kelvinlab.cli import main, parse_config
from kelvinlab.config import DEFAULT_OUT, OUT_ENV, ConfigError, config_file_load, resolve


def _run(argv, capsys):
    status = main(argv)
    captured = capsys.readouterr()
    return status, captured.out, captured.err


def _report(out_dir, name):
    return json.loads((out_dir / f"{name}.json").read_text())


def test_verify_bubble_example(tmp_path, capsys):
    status, out, _ = _run(["verify-bubble", "--n", "3", "--alpha", "2", "--d", "1", "--grid", "64", "--radius", "40",
                           "--out", str(tmp_path)], capsys)
    assert status == 0
    assert json.loads(out)["pass"] is True
    rep = _report(tmp_path, "verify-bubble")
    res = rep["results"]
    assert res["calibration"]["a"] == pytest.approx(0.488603, rel=1e-5)
    assert res["max_residual"] <= 2e-2
    assert "tail_bound" in res["calibration"]
    assert rep["config"]["grid"] == 64 and rep["config"]["radius"] == 40.0
    assert rep["seed"] == 0 and "tolerances" in rep and "tail_bounds" in rep
    lines = (tmp_path / "verify-bubble-residuals.csv").read_text().splitlines()
    assert len(lines) == 1 + 7


def test_moving_spheres_example(tmp_path, capsys):
    status, _, _ = _run(["moving-spheres", "--n", "1", "--alpha", "0.5", "--d", "1", "--x", "0", "--sweep", "5",
                         "--out", str(tmp_path)], capsys)
    assert status == 0
    rows = [json.loads(line) for line in (tmp_path / "moving-spheres.jsonl").read_text().splitlines()]
    assert len(rows) == 1
    assert rows[0]["lambda_bar"] == pytest.approx(1.0, rel=1e-3)
    sweep = (tmp_path / "moving-spheres-sweep.csv").read_text().splitlines()
    assert sweep[0] == "base_index,base_point,lambda,violated" and len(sweep) == 6


@pytest.mark.parametrize("argv", [
    ["geometry-check", "--samples", "500"],
    ["verify-singular", "--n", "2", "--alpha", "1"],
    ["verify-poly", "--n", "1", "--p", "2"],
    ["invariance-check", "--n", "1", "--alpha", "0.5", "--samples", "2"],
    ["invariance-check", "--mode", "power", "--n", "1", "--p", "2", "--samples", "2"],
    ["local-estimate", "--n", "1", "--draws", "3", "--grid", "128"],
    ["iterate", "--n", "1", "--alpha", "0.5"],
    ["iterate", "--mode", "power", "--n", "1", "--p", "2", "--family", "poly"],
])
def test_subcommands_pass(argv, tmp_path, capsys):
    status, out, err = _run(argv + ["--out", str(tmp_path)], capsys)
    assert status == 0, err
    assert json.loads(out)["pass"] is True


def test_iterate_linear_exponent_reports_non_convergence(tmp_path, capsys):
    status, out, _ = _run(["iterate", "--n", "1", "--alpha", "0.5", "--mu", "1", "--out", str(tmp_path)], capsys)
    assert status == 0
    res = _report(tmp_path, "iterate")["results"]
    assert res["classification"] != "converged" and res["demonstrative"] is True
    assert (tmp_path / "iterate-trace.csv").read_text().startswith("step,sup_norm,lr_norm,residual")


@pytest.mark.parametrize("argv", [
    ["geometry-check", "--samples", "300", "--seed", "7"],
    ["local-estimate", "--n", "1", "--draws", "3", "--grid", "64", "--seed", "3"],
    ["invariance-check", "--n", "2", "--alpha", "1", "--samples", "1", "--seed", "5"],
])
def test_determinism_byte_identical(argv, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(argv + ["--out", str(a)], capsys)[0] == 0
    assert _run(argv + ["--out", str(b)], capsys)[0] == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_flag_overrides_file(tmp_path):
    cfg_file = tmp_path / "run.ini"
    cfg_file.write_text("[verify-bubble]\nn = 2\nalpha = 1\ngrid = 32\n")
    cfg = parse_config(["verify-bubble", "--config", str(cfg_file), "--grid", "64"])
    assert cfg["grid"] == 64 and cfg["n"] == 2 and cfg["alpha"] == 1.0
    assert parse_config(["verify-bubble", "--config", str(cfg_file)])["grid"] == 32


def test_common_section_and_subcommand_precedence(tmp_path):
    cfg_file = tmp_path / "run.ini"
    cfg_file.write_text("[common]\nseed = 4\n[geometry-check]\nseed = 9\nsamples = 12\n")
    cfg = parse_config(["geometry-check", "--config", str(cfg_file)])
    assert cfg.seed == 9 and cfg["samples"] == 12


def test_empty_file_equals_flags_only(tmp_path):
    cfg_file = tmp_path / "empty.ini"
    cfg_file.write_text("")
    flags = ["verify-poly", "--n", "1", "--p", "2", "--d", "2"]
    assert parse_config(flags + ["--config", str(cfg_file)]) == parse_config(flags)


def test_duplicate_key_is_config_error(tmp_path, capsys):
    cfg_file = tmp_path / "dup.ini"
    cfg_file.write_text("[geometry-check]\nsamples = 10\nsamples = 20\n")
    status, _, err = _run(["geometry-check", "--config", str(cfg_file), "--out", str(tmp_path)], capsys)
    assert status == 2
    assert json.loads(err)["error"]["kind"] == "config"


def test_unknown_key_and_section_are_errors(tmp_path, capsys):
    bad_key = tmp_path / "k.ini"
    bad_key.write_text("[geometry-check]\nsamplez = 10\n")
    status, _, err = _run(["geometry-check", "--config", str(bad_key)], capsys)
    assert status == 2 and json.loads(err)["error"]["flag"] == "samplez"
    bad_section = tmp_path / "s.ini"
    bad_section.write_text("[nonsense]\nn = 1\n")
    with pytest.raises(ConfigError):
        config_file_load(bad_section)
    with pytest.raises(ConfigError):
        config_file_load(tmp_path / "missing.ini")


def test_missing_required_flag(capsys):
    status, out, err = _run(["verify-bubble", "--n", "3"], capsys)
    assert status == 2 and out == ""
    error = json.loads(err)["error"]
    assert error["flag"] == "alpha" and error["status"] == 2


def test_bad_values_are_config_errors(capsys):
    assert _run(["verify-bubble", "--n", "three", "--alpha", "1"], capsys)[0] == 2
    assert _run(["invariance-check", "--n", "1", "--mode", "other"], capsys)[0] == 2
    assert _run(["no-such-command"], capsys)[0] == 2
    assert _run([], capsys)[0] == 2


def test_precondition_errors(tmp_path, capsys):
    status, _, err = _run(["verify-bubble", "--n", "3", "--alpha", "3", "--out", str(tmp_path)], capsys)
    assert status == 3 and json.loads(err)["error"]["kind"] == "precondition"
    assert _run(["local-estimate", "--n", "4", "--out", str(tmp_path)], capsys)[0] == 3
    assert _run(["iterate", "--n", "1", "--alpha", "0.5", "--steps", "2", "--out", str(tmp_path)], capsys)[0] == 3


def test_numerical_failures(tmp_path, capsys):
    status, _, err = _run(["local-estimate", "--n", "1", "--draws", "2", "--grid", "128", "--delta-bar", "100",
                           "--delta-target", "50", "--out", str(tmp_path)], capsys)
    assert status == 4 and json.loads(err)["error"]["kind"] == "numerical"
    status, _, _ = _run(["moving-spheres", "--n", "1", "--alpha", "0.5", "--lambda-max", "0.5",
                         "--out", str(tmp_path)], capsys)
    assert status == 4


def test_output_dir_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env-out"))
    assert _run(["geometry-check", "--samples", "100"], capsys)[0] == 0
    assert (tmp_path / "env-out" / "geometry-check.json").is_file()
    monkeypatch.delenv(OUT_ENV)
    monkeypatch.chdir(tmp_path)
    assert _run(["geometry-check", "--samples", "100"], capsys)[0] == 0
    assert (tmp_path / DEFAULT_OUT / "geometry-check.json").is_file()


def test_resolve_defaults():
    cfg = resolve("moving-spheres", {"n": "2", "alpha": "1"})
    assert cfg["directions"] == 64 and cfg["x"] is None and cfg.seed == 0
    assert "out" not in cfg.echo()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kelvinlab.cli", "geometry-check", "--samples", "100",
                           "--out", str(tmp_path)], capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["pass"] is True
