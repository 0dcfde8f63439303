"""Joint inference of the Navier-Stokes coefficients (lambda1, lambda2).

Network vectors are extended with two trailing slots, lambda1 and the
softplus pre-image of lambda2, so every optimizer and sampler in the
package handles the inverse problem without modification.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .hmc import HmcConfig, LambdaPrior, PosteriorSamples, hmc_sample, softplus_inverse
from .mlp import NetworkSpec, init_params
from .oracles import SensorDataset
from .pde import PdeProblem
from .training import EnsembleModel, McdModel, TrainConfig, train_adam, train_deep_ensemble, train_mcd


def extend_parameters(params, lambda_init) -> np.ndarray:
    lam1, lam2 = (float(v) for v in lambda_init)
    if not (np.isfinite(lam1) and np.isfinite(lam2)):
        raise ValueError("lambda_init must be finite")
    if lam2 <= 0:
        raise ValueError("lambda2 must be positive")
    return np.concatenate([np.asarray(params, dtype=np.float64), [lam1, softplus_inverse(lam2)]])


def strip_parameters(vector, spec: NetworkSpec) -> np.ndarray:
    return np.asarray(vector)[: spec.n_params]


def lambdas_of(vectors, spec: NetworkSpec) -> np.ndarray:
    """(k, 2) physical lambda values of extended vectors."""
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if v.shape[1] != spec.n_params + 2:
        raise ValueError("vectors are not lambda-extended")
    n = spec.n_params
    return np.stack([v[:, n], np.logaddexp(0.0, v[:, n + 1])], axis=1)


@dataclass
class LambdaEstimate:
    method: str
    mean: np.ndarray
    std: np.ndarray
    raw: np.ndarray
    degenerate: bool = False

    def row(self) -> list:
        return [self.method, self.mean[0], self.std[0], self.mean[1], self.std[1]]


def estimate_lambda(method_output, spec: NetworkSpec | None = None, method: str | None = None):
    """Mean and unbiased std of lambda across samples, members or passes.

    Accepts a :class:`PosteriorSamples`, an :class:`EnsembleModel`, an
    :class:`McdModel` trained with ``keep_tail`` or a raw (k, 2) array.
    """
    if isinstance(method_output, PosteriorSamples):
        raw, method = method_output.lambda_samples, method or "HMC"
    elif isinstance(method_output, EnsembleModel):
        raw, method = lambdas_of(method_output.members, method_output.spec), method or "DE"
    elif isinstance(method_output, McdModel):
        if method_output.tail is None:
            raise ValueError("MCD model kept no iterates; train with keep_tail > 0")
        raw, method = lambdas_of(method_output.tail, method_output.spec), method or "MCD"
    else:
        raw = np.asarray(method_output, dtype=np.float64)
    if raw is None or len(raw) == 0:
        raise ValueError("no lambda values to summarize")
    raw = np.atleast_2d(raw)
    degenerate = len(raw) == 1
    std = np.zeros(2) if degenerate else raw.std(axis=0, ddof=1)
    return LambdaEstimate(method or "", raw.mean(axis=0), std, raw, degenerate)


def write_lambda_csv(path, estimates) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "lambda1_mean", "lambda1_std", "lambda2_mean", "lambda2_std"])
        for est in estimates:
            w.writerow([est.method] + [repr(float(v)) for v in est.row()[1:]])


def fit_inverse_de(
    spec: NetworkSpec,
    dataset: SensorDataset,
    problem: PdeProblem,
    config: TrainConfig,
    n_members: int,
    rng: np.random.Generator | None = None,
    lambda_init=(0.0, 0.1),
) -> EnsembleModel:
    """Deep ensemble in which every member also trains its own lambda."""
    return train_deep_ensemble(
        spec, dataset, problem, config, n_members, rng,
        init_fn=lambda r: extend_parameters(init_params(spec, r), lambda_init),
    )


def fit_inverse_mcd(
    spec: NetworkSpec,
    dataset: SensorDataset,
    problem: PdeProblem,
    config: TrainConfig,
    dropout_rate: float,
    n_passes: int,
    rng: np.random.Generator | None = None,
    lambda_init=(0.0, 0.1),
) -> McdModel:
    """Dropout training with lambda; the last ``n_passes`` iterates give its spread."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    init = extend_parameters(init_params(spec, rng), lambda_init)
    return train_mcd(spec, dataset, problem, config, dropout_rate, rng, init, keep_tail=n_passes)


def fit_inverse_hmc(
    spec: NetworkSpec,
    dataset: SensorDataset,
    problem: PdeProblem,
    config: HmcConfig,
    pretrain: TrainConfig | None = None,
    rng: np.random.Generator | None = None,
    lambda_init=(0.0, 0.1),
    lambda_prior: LambdaPrior | None = None,
) -> PosteriorSamples:
    """HMC over the joint (weights, lambda) vector, started from an Adam fit."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    init = extend_parameters(init_params(spec, rng), lambda_init)
    if pretrain is not None:
        init = train_adam(spec, dataset, problem, pretrain, rng, init)
    return hmc_sample(spec, dataset, problem, config, init, rng, lambda_prior)
