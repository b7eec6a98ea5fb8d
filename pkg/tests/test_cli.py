"""Command-line interface end to end."""

import json

import pytest

from gossipavg.cli import main

BASE_CONFIG = {
    "n": 40,
    "init": {"kind": "uniform", "lo": 0.0, "hi": 10.0},
    "scheduler": "sequential",
    "noise": {"kind": "gaussian", "sigma2": 1.0},
    "rule": {"kind": "real"},
    "steps": 1000,
    "master_seed": 5,
    "record_every": 250,
    "decomposition_intervals": [[0, 100]],
    "runs": 2,
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(BASE_CONFIG))
    return path


def test_run_writes_outputs(tmp_path, config_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_path), "--out", str(out), "--jobs", "1"]) == 0
    assert (out / "trace_run0000.csv").exists()
    assert (out / "trace_run0001.csv").exists()
    assert (out / "decomposition_run0000.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["metadata"]["master_seed"] == 5
    assert len(summary["runs"]) == 2


def test_run_twice_byte_identical(tmp_path, config_path):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    main(["run", "--config", str(config_path), "--out", str(out1), "--jobs", "1"])
    main(["run", "--config", str(config_path), "--out", str(out2), "--jobs", "1"])
    for name in ("trace_run0000.csv", "trace_run0001.csv", "summary.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_seed_override_changes_output(tmp_path, config_path):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    main(["run", "--config", str(config_path), "--out", str(out1), "--jobs", "1"])
    main(["run", "--config", str(config_path), "--out", str(out2), "--seed", "6", "--jobs", "1"])
    assert (out1 / "trace_run0000.csv").read_bytes() != (out2 / "trace_run0000.csv").read_bytes()
    assert json.loads((out2 / "summary.json").read_text())["metadata"]["master_seed"] == 6


def test_set_override(tmp_path, config_path):
    out = tmp_path / "out"
    assert (
        main(
            [
                "run", "--config", str(config_path), "--out", str(out),
                "--set", "steps=500", "--set", "noise.sigma2=4.0",
                "--set", "decomposition_intervals=[]", "--jobs", "1",
            ]
        )
        == 0
    )
    summary = json.loads((out / "summary.json").read_text())
    assert summary["metadata"]["config"]["steps"] == 500
    assert summary["metadata"]["config"]["noise"]["sigma2"] == 4.0


def test_set_unknown_path_is_an_error(tmp_path, config_path):
    assert (
        main(["run", "--config", str(config_path), "--out", str(tmp_path / "x"),
              "--set", "bogus.path=1"])
        == 2
    )


def test_bad_config_value_exits_2(tmp_path, config_path):
    assert (
        main(["run", "--config", str(config_path), "--out", str(tmp_path / "x"),
              "--set", "steps=-5"])
        == 2
    )


def test_unknown_flag_exits_2(config_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", str(config_path), "--definitely-not-a-flag"])
    assert exc.value.code == 2


def test_missing_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_absent_seed_is_drawn_printed_and_recorded(tmp_path, capsys):
    config = dict(BASE_CONFIG)
    del config["master_seed"]
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out), "--jobs", "1"]) == 0
    printed = capsys.readouterr().out
    assert "master_seed not given; chose" in printed
    chosen = int(printed.split("chose")[1].split()[0])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["metadata"]["master_seed"] == chosen


def test_bounds_zero_noise(capsys):
    assert main(["bounds", "--noise", "zero", "--n", "100", "--t", "1000"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["b_prime"] == 0.0
    assert payload["z"] == 1.0
    assert payload["convergence_time"] is None


def test_bounds_gaussian_keys(capsys):
    assert (
        main(
            ["bounds", "--noise", "gaussian:1.0", "--n", "1000", "--t", "10000",
             "--delta", "0.1", "--phi0", "1e6", "--gamma", "0.5"]
        )
        == 0
    )
    payload = json.loads(capsys.readouterr().out)
    for key in ("b_prime", "z", "b_star", "s_minus_tail", "convergence_time", "smooth"):
        assert key in payload


def test_histogram_command(tmp_path, config_path):
    out = tmp_path / "hist"
    assert main(["histogram", "--config", str(config_path), "--out", str(out),
                 "--bins", "20", "--set", "n=400", "--set", "steps=4000",
                 "--set", "record_every=4000", "--set", "decomposition_intervals=[]",
                 "--jobs", "1"]) == 0
    lines = (out / "histogram.csv").read_text().strip().splitlines()
    assert lines[0] == "bin_left,bin_right,count"
    total = sum(int(line.split(",")[2]) for line in lines[1:])
    assert total == 400


def test_replicate_fig_a_small(tmp_path):
    out = tmp_path / "figa"
    assert main(["replicate-fig-a", "--n", "2000", "--out", str(out)]) == 0
    assert (out / "trace.csv").exists()
    assert (out / "histogram.csv").exists()
    fit = json.loads((out / "fit.json").read_text())
    assert fit["slope"] < 0


def test_verify_passes():
    assert main(["verify"]) == 0
