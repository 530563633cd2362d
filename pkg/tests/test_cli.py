import json

import pytest

from fbmavg.cli import main

TINY_NOFEEDBACK = {"n_mc": 8, "n_steps": 256, "n_grid": [4, 16], "chunk": 4}


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_sample_fbm_writes_manifest_and_is_reproducible(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"n": 256, "n_paths": 20})
    assert main(["sample-fbm", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "a")]) == 0
    assert main(["sample-fbm", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["seed"] == 3 and ma["config"]["n"] == 256
    assert ma["files"] == mb["files"]
    assert (tmp_path / "a" / "fbm.bin").read_bytes() == (tmp_path / "b" / "fbm.bin").read_bytes()


def test_sample_fbm_brownian_increments_uncorrelated(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"n": 512, "n_paths": 200})
    assert main(["sample-fbm", "--H", "0.5", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "manifest.json").read_text())["summary"]
    assert abs(summary["lag1_correlation"]) < 0.02


def test_check_kernels_default_passes(capsys):
    assert main(["check-kernels"]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True


def test_check_kernels_negative_control_fails(tmp_path, capsys):
    assert main(["check-kernels", "--corrupt-c1", "1.1", "--out", str(tmp_path)]) == 1
    res = json.loads((tmp_path / "kernels.json").read_text())["results"][0]
    assert not res["checks"]["d2R_vs_finite_difference"]
    assert res["checks"]["rkhs_bound"]


@pytest.mark.parametrize("argv", [
    ["run", "feedback", "--out", "{tmp}", "--config", "{bad}"],
    ["sample-fbm", "--config", "{bad}", "--out", "{tmp}"],
    ["run", "nofeedback"],
    ["run", "nofeedback", "--out", "{tmp}", "--jobs", "0"],
])
def test_configuration_errors_exit_2(tmp_path, argv, capsys):
    bad = _write(tmp_path / "bad.json", {"no_such_key": 1})
    argv = [a.format(tmp=tmp_path / "o", bad=bad) for a in argv]
    assert main(argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_run_resume_and_report(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", TINY_NOFEEDBACK)
    out = tmp_path / "run"
    code = main(["run", "nofeedback", "--config", cfg, "--out", str(out)])
    first = {p: (out / p).read_bytes() for p in ("report.json", "report.csv", "report.dat")}
    assert json.loads((out / "manifest.json").read_text())["resumed_points"] == []
    assert main(["run", "nofeedback", "--config", cfg, "--out", str(out), "--resume"]) == code
    assert json.loads((out / "manifest.json").read_text())["resumed_points"] == [0, 1]
    assert {p: (out / p).read_bytes() for p in first} == first
    capsys.readouterr()
    assert main(["report", str(out)]) == code
    assert "nofeedback" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "missing")]) == 2


def test_run_output_independent_of_jobs(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", TINY_NOFEEDBACK)
    main(["run", "nofeedback", "--config", cfg, "--out", str(tmp_path / "a"), "--jobs", "1"])
    main(["run", "nofeedback", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"])
    for name in ("report.json", "report.csv", "report.dat"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sewing_equivalence_command(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"n_paths": 8, "n_steps": 256})
    assert main(["run", "sewing-equiv", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    rep = json.loads((tmp_path / "s" / "report.json").read_text())
    assert rep["checks"]["finest_level_exact"]
