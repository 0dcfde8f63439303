"""Experiment runner: ``python -m uqpinn <subcommand>``.

Subcommands ``generate-data``, ``train``, ``sample``, ``evaluate``,
``render`` and ``run`` share one JSON experiment config; ``--set a.b=v``
overrides individual keys.  Exit codes: 0 success, 2 usage or config
error, 3 data error, 4 training/sampling failure, 5 rendering error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import heatmap, inverse, mlp, oracles, pde, stats, training
from .hmc import HmcConfig, HmcError, PosteriorSamples, hmc_sample, save_samples
from .oracles import CsvParseError, SchemaError

log = logging.getLogger("uqpinn")

OUTPUT_ROOT_ENV = "UQPINN_OUTPUT_ROOT"
PROBLEMS = ("burgers-forward", "ns-forward", "ns-inverse")
METHODS = ("hmc", "de", "mcd")

EXIT_USAGE, EXIT_DATA, EXIT_MODEL, EXIT_RENDER = 2, 3, 4, 5


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, code: int, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage, self.code = stage, code


# Full-size presets; "desk" shrinks counts and sizes.
FULL_PRESETS = {
    "burgers-forward": {
        "network": {"hidden_layers": 8, "hidden_width": 20},
        "data": {"n_state": 2000, "n_residual": 2000, "sigma_u": 0.1, "sigma_f": 0.1},
        "hmc": {"leapfrog_steps": 50, "initial_step_size": 0.1, "burn_in_steps": 1000,
                "n_samples": 100},
        "de": {"n_members": 100},
        "mcd": {"dropout_rate": 0.01, "n_passes": 100},
    },
    "ns-forward": {
        "network": {"hidden_layers": 10, "hidden_width": 20},
        "data": {"n_state": 5000, "n_residual": 5000, "sigma_u": 0.1, "sigma_f": 0.1},
        "hmc": {"leapfrog_steps": 50, "initial_step_size": 0.01, "burn_in_steps": 5000,
                "n_samples": 100},
        "de": {"n_members": 200},
        "mcd": {"dropout_rate": 0.01, "n_passes": 200},
    },
    "ns-inverse": {
        "network": {"hidden_layers": 10, "hidden_width": 40},
        "data": {"n_state": 5000, "n_residual": 5000, "sigma_u": 0.1, "sigma_f": 0.1},
        "hmc": {"leapfrog_steps": 50, "initial_step_size": 0.01, "burn_in_steps": 5000,
                "n_samples": 100},
        "de": {"n_members": 200},
        "mcd": {"dropout_rate": 0.01, "n_passes": 200},
    },
}

DESK_PRESETS = {
    "burgers-forward": {
        "network": {"hidden_layers": 4, "hidden_width": 20},
        "data": {"n_state": 500, "n_residual": 500, "boundary_fraction": 0.2},
        "hmc": {"burn_in_steps": 500, "n_samples": 100},
        "de": {"n_members": 5},
        "mcd": {"n_passes": 100},
        "train": {"iterations": 5000},
    },
    "ns-forward": {
        "network": {"hidden_layers": 6, "hidden_width": 20},
        "data": {"n_state": 1000, "n_residual": 1000, "sigma_u": 0.05, "sigma_f": 0.05},
        "hmc": {"burn_in_steps": 500, "n_samples": 100},
        "de": {"n_members": 5},
        "mcd": {"n_passes": 100},
        "train": {"iterations": 5000},
    },
    "ns-inverse": {
        "network": {"hidden_layers": 6, "hidden_width": 20},
        "data": {"n_state": 1000, "n_residual": 1000, "sigma_u": 0.05, "sigma_f": 0.05},
        "hmc": {"burn_in_steps": 500, "n_samples": 100},
        "de": {"n_members": 5},
        "mcd": {"n_passes": 100},
        "train": {"iterations": 5000},
    },
}

# Desk HMC on Burgers uses a smaller network and a longer warm start.
DESK_METHOD_PRESETS = {
    ("burgers-forward", "hmc"): {
        "network": {"hidden_layers": 2, "hidden_width": 20},
        "hmc": {"pretrain_iterations": 5000},
    },
}

BASE_CONFIG = {
    "problem": "burgers-forward",
    "method": "de",
    "scale": "full",
    "seed": 0,
    "output_dir": None,
    "network": {},
    "data": {"n_state": 2000, "n_residual": 2000, "sigma_u": 0.1, "sigma_f": 0.1,
             "boundary_fraction": 0.0, "state_csv": None, "residual_csv": None},
    "train": {"iterations": 5000, "learning_rate": 1e-3, "beta1": 0.9, "beta2": 0.999,
              "epsilon": 1e-8, "w_u": 1.0, "w_f": 1.0},
    "hmc": {"target_accept_range": [0.6, 0.9], "prior_sigma": 1.0, "pretrain_iterations": 2000},
    "de": {"perturb": True},
    "mcd": {"dropout_rate": 0.01},
    "ns": {"nu": 0.01, "t_max": 1.0, "drift": [0.0, 0.0], "eval_time": 0.5},
    "inverse": {"lambda_init": [0.0, 0.1]},
    "grid": {"nx": None, "ny": None},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """Resolved experiment settings; unspecified keys come from the presets."""

    values: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, user: dict) -> ExperimentConfig:
        problem = user.get("problem", BASE_CONFIG["problem"])
        method = user.get("method", BASE_CONFIG["method"])
        scale = user.get("scale", BASE_CONFIG["scale"])
        if problem not in PROBLEMS:
            raise ConfigError(f"unknown problem preset {problem!r}; choose from {PROBLEMS}")
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
        if scale not in ("full", "desk"):
            raise ConfigError(f"unknown scale {scale!r}; choose full or desk")
        cfg = _merge(BASE_CONFIG, FULL_PRESETS[problem])
        if scale == "desk":
            cfg = _merge(cfg, DESK_PRESETS[problem])
            cfg = _merge(cfg, DESK_METHOD_PRESETS.get((problem, method), {}))
        if problem == "ns-inverse":
            cfg = _merge(cfg, {"ns": {"drift": [1.0, 0.5], "t_max": 2.0}})
        cfg = _merge(cfg, user)
        unknown = set(cfg) - set(BASE_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(cfg)

    def __getitem__(self, key):
        return self.values[key]

    def to_json(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=True) + "\n"

    @property
    def output_dir(self) -> Path:
        if self.values.get("output_dir"):
            return Path(self.values["output_dir"])
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        return root / f"{self['problem']}-{self['method']}"

    def problem(self) -> pde.PdeProblem:
        if self["problem"] == "burgers-forward":
            return pde.burgers_problem()
        ns = self["ns"]
        return pde.navier_stokes_problem(ns["nu"], ns["t_max"], tuple(ns["drift"]))

    def spec(self) -> mlp.NetworkSpec:
        prob = self.problem()
        net = self["network"]
        return mlp.NetworkSpec(
            prob.input_dim, prob.output_dim, int(net["hidden_layers"]), int(net["hidden_width"]),
            0.0, prob.lower, prob.upper,
        )

    def train_config(self) -> training.TrainConfig:
        return training.TrainConfig(**self["train"], seed=int(self["seed"]))

    def hmc_config(self) -> HmcConfig:
        h = {k: v for k, v in self["hmc"].items() if k != "pretrain_iterations"}
        h["target_accept_range"] = tuple(h["target_accept_range"])
        return HmcConfig(**h, seed=int(self["seed"]))

    def grid(self) -> stats.EvalGrid:
        g = self["grid"]
        if self["problem"] == "burgers-forward":
            return stats.burgers_grid(g.get("nx") or 256, g.get("ny") or 100)
        return stats.navier_stokes_grid(g.get("nx") or 100, g.get("ny") or 50,
                                        self["ns"]["eval_time"])

    @property
    def is_inverse(self) -> bool:
        return self["problem"] == "ns-inverse"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(user: dict, assignments) -> dict:
    out = copy.deepcopy(user)
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(raw)
    return out


def load_config(args) -> ExperimentConfig:
    user: dict = {}
    if getattr(args, "config", None):
        try:
            user = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise StageError("config", EXIT_USAGE, FileNotFoundError(args.config)) from None
        except json.JSONDecodeError as exc:
            raise StageError("config", EXIT_USAGE, exc) from None
    for key in ("problem", "method", "scale", "seed", "output_dir"):
        val = getattr(args, key, None)
        if val is not None:
            user[key] = val
    try:
        return ExperimentConfig.from_dict(apply_overrides(user, getattr(args, "set", None)))
    except (ConfigError, TypeError) as exc:
        raise StageError("config", EXIT_USAGE, exc) from None


# ----------------------------------------------------------------------------
# pipeline stages


def stage_data(cfg: ExperimentConfig, out: Path | None = None) -> oracles.SensorDataset:
    d = cfg["data"]
    prob = cfg.problem()
    try:
        if d.get("state_csv"):
            ds = oracles.load_dataset_csv(d["state_csv"], d.get("residual_csv"),
                                          d["sigma_u"], d["sigma_f"])
            if (ds.kind == "burgers") != (prob.kind == "burgers"):
                raise SchemaError(f"dataset kind {ds.kind} does not fit {cfg['problem']}")
        else:
            ds = oracles.generate_sensor_dataset(
                prob, oracles.exact_field_for(prob), int(d["n_state"]), int(d["n_residual"]),
                d["sigma_u"], d["sigma_f"], np.random.default_rng(int(cfg["seed"])),
                d.get("boundary_fraction", 0.0),
            )
    except (OSError, CsvParseError, SchemaError, ValueError) as exc:
        raise StageError("data", EXIT_DATA, exc) from exc
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        oracles.save_dataset_csv(ds, out / "state.csv", out / "residual.csv")
    return ds


def _model_rng(cfg: ExperimentConfig) -> np.random.Generator:
    return np.random.default_rng([int(cfg["seed"]), 1])


def stage_train(cfg, ds, out: Path):
    """Train DE or MCD and write parameter records and loss traces."""
    spec, prob, tc = cfg.spec(), cfg.problem(), cfg.train_config()
    rng = _model_rng(cfg)
    lam0 = cfg["inverse"]["lambda_init"]
    try:
        if cfg["method"] == "de":
            n = int(cfg["de"]["n_members"])
            init_fn = None
            if cfg.is_inverse:
                init_fn = lambda r: inverse.extend_parameters(mlp.init_params(spec, r), lam0)  # noqa: E731
            model = training.train_deep_ensemble(spec, ds, prob, tc, n, rng, init_fn,
                                                 bool(cfg["de"]["perturb"]))
            mlp.save_params(out / "model.bin", spec, model.members, 2 if cfg.is_inverse else 0)
            for k, tr in enumerate(model.traces):
                training.write_loss_trace(out / f"loss_member{k:03d}.csv", tr)
            return model
        if cfg["method"] == "mcd":
            m = cfg["mcd"]
            if cfg.is_inverse:
                model = inverse.fit_inverse_mcd(spec, ds, prob, tc, m["dropout_rate"],
                                                int(m["n_passes"]), rng, lam0)
                mlp.save_params(out / "mcd_tail.bin", model.spec, model.tail, 2)
            else:
                model = training.train_mcd(spec, ds, prob, tc, m["dropout_rate"], rng)
            mlp.save_params(out / "model.bin", model.spec, model.params, 2 if cfg.is_inverse else 0)
            training.write_loss_trace(out / "loss.csv", model.trace)
            return model
    except (training.TrainingDiverged, training.EnsembleError) as exc:
        raise StageError("train", EXIT_MODEL, exc) from exc
    raise StageError("train", EXIT_USAGE, ConfigError("train handles methods de and mcd"))


def stage_sample(cfg, ds, out: Path) -> PosteriorSamples:
    """Adam warm start, then HMC; writes samples, sidecar and chain trace."""
    spec, prob, hc = cfg.spec(), cfg.problem(), cfg.hmc_config()
    rng = _model_rng(cfg)
    init = mlp.init_params(spec, rng)
    if cfg.is_inverse:
        init = inverse.extend_parameters(init, cfg["inverse"]["lambda_init"])
    pre_iters = int(cfg["hmc"].get("pretrain_iterations") or 0)
    try:
        if pre_iters:
            tc = training.TrainConfig(**{**cfg["train"], "iterations": pre_iters},
                                      seed=int(cfg["seed"]))
            trace: list = []
            init = training.train_adam(spec, ds, prob, tc, rng, init, trace)
            training.write_loss_trace(out / "loss_pretrain.csv", trace)
        post = hmc_sample(spec, ds, prob, hc, init, rng)
    except (HmcError, training.TrainingDiverged) as exc:
        raise StageError("sample", EXIT_MODEL, exc) from exc
    save_samples(out / "model.bin", post, hc)
    with open(out / "chain.csv", "w", encoding="utf-8") as fh:
        fh.write("sample,log_posterior\n")
        for k, lp in enumerate(post.log_prob):
            fh.write(f"{k},{lp!r}\n")
    return post


def load_model(cfg, path: Path):
    spec, vectors, n_extra = mlp.load_params(path)
    method = cfg["method"]
    if method == "de":
        return training.EnsembleModel(spec, vectors, [])
    if method == "mcd":
        tail = None
        tail_path = path.with_name("mcd_tail.bin")
        if tail_path.exists():
            tail = mlp.load_params(tail_path)[1]
        return training.McdModel(spec, vectors[0], spec.dropout_rate, tail=tail)
    meta = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return PosteriorSamples(spec, vectors, meta.get("acceptance_rate", float("nan")),
                            meta.get("final_step_size", float("nan")),
                            meta.get("burn_in_acceptance", float("nan")),
                            divergences=meta.get("divergences", 0))


def realizations(cfg, model, coords) -> np.ndarray:
    if isinstance(model, training.EnsembleModel):
        return model.predict(coords)
    if isinstance(model, training.McdModel):
        n = int(cfg["mcd"]["n_passes"])
        return training.mcd_predict_samples(model, coords, n, np.random.default_rng([int(cfg["seed"]), 2]))
    return np.stack([
        mlp.forward(model.spec, mlp.split_parameters(v, model.spec)[0], coords)
        for v in model.samples
    ])


def _write_error_csv(path: Path, grid: stats.EvalGrid, err: np.ndarray, names) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(list(grid.columns) + [f"abs_error_{n}" for n in names]) + "\n")
        for row in np.hstack([grid.coords, err]):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def stage_evaluate(cfg, model, out: Path, render: bool = True) -> dict:
    grid = cfg.grid()
    coords = grid.coords
    prob = cfg.problem()
    real = realizations(cfg, model, coords)
    summary = stats.predictive_summary(real, grid, cfg["method"].upper())
    exact = oracles.exact_field_for(prob)(coords)
    ef = stats.error_fields(summary, exact)
    names = summary.outputs[: exact.shape[1]]
    metrics = {
        "problem": cfg["problem"],
        "method": cfg["method"].upper(),
        "n_realizations": summary.n_realizations,
        "relative_l2": {n: float(v) for n, v in zip(names, ef.relative_l2)},
        "coverage_2sigma": stats.coverage_fraction(summary, exact, 2.0),
        "mean_std": {n: float(summary.std[:, i].mean()) for i, n in enumerate(names)},
        "mean_abs_error": {n: float(ef.l1_field[:, i].mean()) for i, n in enumerate(names)},
    }
    if prob.kind == "navier_stokes":
        p_exact = oracles.taylor_green_exact(*coords.T, prob.viscosity, prob.drift)[2]
        p_pred = summary.mean[:, 2]
        dp = (p_pred - p_pred.mean()) - (p_exact - p_exact.mean())
        metrics["pressure_relative_l2_centered"] = float(
            np.linalg.norm(dp) / np.linalg.norm(p_exact - p_exact.mean())
        )
    if isinstance(model, PosteriorSamples):
        metrics["acceptance_rate"] = float(model.acceptance_rate)
    if cfg.is_inverse:
        est = inverse.estimate_lambda(model)
        inverse.write_lambda_csv(out / "lambda.csv", [est])
        metrics["lambda"] = {
            "lambda1_mean": float(est.mean[0]), "lambda1_std": float(est.std[0]),
            "lambda2_mean": float(est.mean[1]), "lambda2_std": float(est.std[1]),
        }
    stats.write_field_csv(out / "field.csv", summary)
    _write_error_csv(out / "error.csv", grid, ef.l1_field, names)
    stats.write_metrics(out / "metrics.json", metrics)
    if render:
        for name in names:
            heatmap.render_heatmap(out / "field.csv", out / f"mean_{name}.svg", f"mean_{name}")
            heatmap.render_heatmap(out / "field.csv", out / f"std_{name}.svg", f"std_{name}",
                                   "magma")
            heatmap.render_heatmap(out / "error.csv", out / f"error_{name}.svg",
                                   f"abs_error_{name}", "magma")
    return metrics


def write_manifest(out: Path) -> Path:
    entries = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            entries[str(p.relative_to(out))] = hashlib.sha256(p.read_bytes()).hexdigest()
    path = out / "manifest.json"
    path.write_text(json.dumps({"files": entries}, indent=2, sort_keys=True) + "\n")
    return path


@dataclass
class ExperimentReport:
    output_dir: Path
    metrics: dict
    files: list


def run_experiment(cfg: ExperimentConfig, render: bool = True) -> ExperimentReport:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    ds = stage_data(cfg, out)
    if cfg["method"] == "hmc":
        model = stage_sample(cfg, ds, out)
    else:
        model = stage_train(cfg, ds, out)
    metrics = stage_evaluate(cfg, model, out, render)
    write_manifest(out)
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    return ExperimentReport(out, metrics, files)


# ----------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--scale", choices=("full", "desk"))
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. de.n_members=3")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uqpinn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("generate-data", "write synthetic sensor data"),
        ("train", "train a deep ensemble or MC-dropout model"),
        ("sample", "run HMC"),
        ("evaluate", "summarize a trained model on the evaluation grid"),
        ("run", "full pipeline"),
    ]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "evaluate":
            p.add_argument("--model", help="parameter file (default <output-dir>/model.bin)")
        if name in ("evaluate", "run"):
            p.add_argument("--no-render", action="store_true")
    r = sub.add_parser("render", help="render a field CSV as an SVG heatmap")
    r.add_argument("field_csv")
    r.add_argument("output_svg")
    r.add_argument("--column", default="mean_u")
    r.add_argument("--colormap", default="viridis", choices=sorted(heatmap.COLORMAPS))
    return parser


def _dispatch(args) -> int:
    if args.command == "render":
        try:
            heatmap.render_heatmap(args.field_csv, args.output_svg, args.column, args.colormap)
        except (OSError, KeyError, ValueError) as exc:
            raise StageError("render", EXIT_RENDER, exc) from exc
        return 0
    cfg = load_config(args)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "run":
        report = run_experiment(cfg, render=not args.no_render)
        print(json.dumps(report.metrics, indent=2, sort_keys=True))
        return 0
    (out / "config.json").write_text(cfg.to_json())
    if args.command == "generate-data":
        stage_data(cfg, out)
    elif args.command == "train":
        stage_train(cfg, stage_data(cfg, out), out)
    elif args.command == "sample":
        if cfg["method"] != "hmc":
            raise StageError("sample", EXIT_USAGE, ConfigError("sample requires --method hmc"))
        stage_sample(cfg, stage_data(cfg, out), out)
    elif args.command == "evaluate":
        path = Path(args.model) if args.model else out / "model.bin"
        try:
            model = load_model(cfg, path)
        except (OSError, ValueError) as exc:
            raise StageError("evaluate", EXIT_DATA, exc) from exc
        print(json.dumps(stage_evaluate(cfg, model, out, not args.no_render), indent=2,
                         sort_keys=True))
    write_manifest(out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except StageError as exc:
        print(f"uqpinn: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
