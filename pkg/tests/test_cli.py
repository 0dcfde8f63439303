import hashlib
import json

import numpy as np
import pytest

from uqpinn import cli
from uqpinn.cli import ConfigError, ExperimentConfig, apply_overrides, main, run_experiment

QUICK = ["--set", "grid.nx=16", "--set", "grid.ny=8"]


def test_presets_fill_defaults():
    cfg = ExperimentConfig.from_dict({"problem": "ns-forward", "method": "hmc"})
    assert cfg["network"] == {"hidden_layers": 10, "hidden_width": 20}
    assert cfg["hmc"]["initial_step_size"] == 0.01
    assert cfg["hmc"]["burn_in_steps"] == 5000
    inv = ExperimentConfig.from_dict({"problem": "ns-inverse"})
    assert inv["network"]["hidden_width"] == 40
    desk = ExperimentConfig.from_dict({"problem": "burgers-forward", "scale": "desk"})
    assert desk["network"] == {"hidden_layers": 4, "hidden_width": 20}
    assert desk["de"]["n_members"] == 5


def test_config_round_trip():
    cfg = ExperimentConfig.from_dict({"problem": "ns-inverse", "method": "mcd", "seed": 4})
    again = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert again.values == cfg.values


@pytest.mark.parametrize("bad", [
    {"method": "bogus"}, {"problem": "heat"}, {"scale": "huge"}, {"colour": 1},
])
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_overrides():
    out = apply_overrides({"de": {"n_members": 5}}, ["de.n_members=3", "data.sigma_u=0.2",
                                                     "ns.drift=[1, 0]", "method=mcd"])
    assert out == {"de": {"n_members": 3}, "data": {"sigma_u": 0.2}, "ns": {"drift": [1, 0]},
                   "method": "mcd"}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_unknown_method_exit_code(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--method", "bogus"])
    assert info.value.code == 2
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"method": "bogus"}))
    assert main(["run", "--config", str(conf), "--output-dir", str(tmp_path / "o")]) == 2
    assert "unknown method" in capsys.readouterr().err


def test_missing_config_and_data_files(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == 2
    code = main(["generate-data", "--output-dir", str(tmp_path / "o"),
                 "--set", f"data.state_csv={tmp_path / 'missing.csv'}"])
    assert code == 3


def test_wrong_dataset_kind(tmp_path):
    state = tmp_path / "s.csv"
    state.write_text("x,t,u\n0,0,0\n")
    code = main(["generate-data", "--problem", "ns-forward", "--output-dir", str(tmp_path / "o"),
                 "--set", f"data.state_csv={state}"])
    assert code == 3


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = ExperimentConfig.from_dict({"problem": "ns-forward", "method": "de"})
    assert cfg.output_dir == tmp_path / "ns-forward-de"
    assert main(["generate-data", "--problem", "ns-forward", "--set", "data.n_state=10",
                 "--set", "data.n_residual=10"]) == 0
    assert (tmp_path / "ns-forward-de" / "state.csv").exists()


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    cfg = ExperimentConfig.from_dict({
        "problem": "burgers-forward", "method": "de", "scale": "desk", "seed": 0,
        "output_dir": str(out), "de": {"n_members": 3}, "train": {"iterations": 500},
    })
    return cfg, run_experiment(cfg)


def test_smoke_run_report(smoke_run):
    cfg, report = smoke_run
    m = report.metrics
    assert np.isfinite(m["relative_l2"]["u"])
    assert 0.0 <= m["coverage_2sigma"] <= 1.0
    assert m["n_realizations"] == 3
    for name in ("field.csv", "error.csv", "metrics.json", "mean_u.svg", "std_u.svg",
                 "error_u.svg", "loss_member002.csv", "model.bin", "manifest.json", "config.json"):
        assert name in report.files


def test_manifest_hashes(smoke_run):
    _, report = smoke_run
    out = report.output_dir
    manifest = json.loads((out / "manifest.json").read_text())["files"]
    assert set(manifest) == set(report.files) - {"manifest.json"}
    for name, digest in manifest.items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_rerun_identical_metrics(smoke_run, tmp_path):
    cfg, report = smoke_run
    values = dict(cfg.values, output_dir=str(tmp_path / "again"))
    again = run_experiment(ExperimentConfig.from_dict(values), render=False)
    first = (report.output_dir / "metrics.json").read_bytes()
    assert (again.output_dir / "metrics.json").read_bytes() == first


def test_evaluate_from_saved_model(smoke_run, tmp_path):
    _, report = smoke_run
    out = report.output_dir
    before = json.loads((out / "metrics.json").read_text())
    code = main(["evaluate", "--problem", "burgers-forward", "--method", "de", "--scale", "desk",
                 "--output-dir", str(out), "--no-render"])
    assert code == 0
    assert json.loads((out / "metrics.json").read_text()) == before


def test_render_subcommand(smoke_run, tmp_path):
    _, report = smoke_run
    svg = tmp_path / "x.svg"
    assert main(["render", str(report.output_dir / "field.csv"), str(svg), "--column", "std_u",
                 "--colormap", "magma"]) == 0
    assert svg.read_text().count("<rect") == 256 * 100 + 32
    assert main(["render", str(report.output_dir / "field.csv"), str(svg), "--column", "nope"]) == 5


def test_sample_requires_hmc(tmp_path):
    assert main(["sample", "--method", "de", "--output-dir", str(tmp_path)]) == 2


@pytest.mark.parametrize("problem", ["burgers-forward", "ns-inverse"])
def test_mcd_and_hmc_pipelines(tmp_path, problem):
    small = ["--scale", "desk", "--set", "data.n_state=40", "--set", "data.n_residual=40",
             "--set", "network.hidden_layers=1", "--set", "network.hidden_width=8"] + QUICK
    out = tmp_path / "mcd"
    assert main(["run", "--problem", problem, "--method", "mcd", "--output-dir", str(out),
                 "--set", "train.iterations=30", "--set", "mcd.n_passes=6", "--no-render"] + small) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["n_realizations"] == 6
    out = tmp_path / "hmc"
    assert main(["run", "--problem", problem, "--method", "hmc", "--output-dir", str(out),
                 "--set", "hmc.pretrain_iterations=50", "--set", "hmc.burn_in_steps=40",
                 "--set", "hmc.n_samples=5", "--set", "hmc.leapfrog_steps=5",
                 "--set", "hmc.initial_step_size=0.001", "--no-render"] + small) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["n_realizations"] == 5 and "acceptance_rate" in metrics
    assert (out / "chain.csv").read_text().startswith("sample,log_posterior\n")
    assert (out / "model.json").exists()
    if problem == "ns-inverse":
        assert (out / "lambda.csv").exists() and "lambda" in metrics
