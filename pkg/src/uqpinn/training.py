"""PINN loss, full-batch Adam, deep ensembles and Monte-Carlo dropout."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .jet import forward_jet
from .mlp import DropoutMask, NetworkSpec, forward, init_params, split_parameters
from .oracles import SensorDataset
from .pde import PdeProblem, residuals

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"non-finite loss {loss} at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


class EnsembleError(RuntimeError):
    def __init__(self, member: int, cause: Exception):
        super().__init__(f"ensemble member {member} failed: {cause}")
        self.member = member


@dataclass
class TrainConfig:
    iterations: int = 5000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    w_u: float = 1.0
    w_f: float = 1.0
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.w_u <= 0 or self.w_f <= 0:
            raise ValueError("loss weights must be positive")


class Adam:
    """Adam on a flat parameter vector."""

    def __init__(self, size: int, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr, self.beta1, self.beta2, self.epsilon = lr, beta1, beta2, epsilon
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def loss_terms(
    spec: NetworkSpec,
    params,
    dataset: SensorDataset,
    problem: PdeProblem,
    mask=None,
):
    """(data misfit sum of squares, residual misfit sum of squares).

    ``params`` may be a plain or lambda-extended vector, taped or not.
    ``mask`` is one DropoutMask for both point sets or a (state, residual)
    pair.
    """
    if dataset.n_state == 0 and dataset.n_residual == 0:
        raise ValueError("empty dataset")
    net, lam = split_parameters(params, spec)
    mask_u, mask_f = mask if isinstance(mask, tuple) else (mask, mask)
    sse_u = sse_f = 0.0
    if dataset.n_state:
        pred = forward(spec, net, dataset.state_coords, mask_u)
        k = dataset.state_values.shape[1]
        diff = pred[:, :k] - dataset.state_values
        sse_u = ad.sum(diff * diff)
    if dataset.n_residual:
        jet = forward_jet(spec, net, dataset.residual_coords, problem.second_order_indices, mask_f)
        for j, r in enumerate(residuals(problem, jet, lam)):
            d = r - dataset.residual_targets[:, j]
            sse_f = sse_f + ad.sum(d * d)
    return sse_u, sse_f


def _mse_terms(spec, params, dataset, problem, mask=None):
    sse_u, sse_f = loss_terms(spec, params, dataset, problem, mask)
    n_u = max(dataset.state_values.size, 1)
    n_f = max(dataset.n_residual * problem.n_residuals, 1)
    return sse_u * (1.0 / n_u), sse_f * (1.0 / n_f)


def pinn_loss(
    spec: NetworkSpec,
    params,
    dataset: SensorDataset,
    problem: PdeProblem,
    weights=(1.0, 1.0),
    mask=None,
):
    """w_u * MSE(state) + w_f * MSE(residual)."""
    mse_u, mse_f = _mse_terms(spec, params, dataset, problem, mask)
    return weights[0] * mse_u + weights[1] * mse_f


def adam_minimize(
    value_and_grad: Callable[[np.ndarray, int], tuple[float, np.ndarray, tuple]],
    x0: np.ndarray,
    config: TrainConfig,
    trace: list | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Run ``config.iterations`` Adam steps; ``value_and_grad(x, it)`` returns
    (loss, grad, extra trace columns)."""
    opt = Adam(x0.size, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    x = np.array(x0, dtype=np.float64)
    for it in range(config.iterations):
        loss, grad, extra = value_and_grad(x, it)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDiverged(it, loss)
        if trace is not None:
            trace.append((it, loss) + tuple(extra))
        if config.log_every and it % config.log_every == 0:
            log.info("iter %d loss %.6e", it, loss)
        x = opt.step(x, grad)
        if callback is not None:
            callback(it, x)
    return x


def train_adam(
    spec: NetworkSpec,
    dataset: SensorDataset,
    problem: PdeProblem,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
    init: np.ndarray | None = None,
    trace: list | None = None,
    callback=None,
) -> np.ndarray:
    """Full-batch Adam on the PINN loss.

    When ``spec.dropout_rate`` is positive, every iteration draws fresh
    dropout masks, independent for each data and collocation point.  Rows ``(iteration, loss_total, loss_u, loss_f)`` are
    appended to ``trace`` when given.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    x0 = init_params(spec, rng) if init is None else np.asarray(init, dtype=np.float64)
    weights = (config.w_u, config.w_f)

    def vg(x, it):
        mask = None
        if spec.dropout_rate > 0:
            mask = (DropoutMask.from_rng(spec, rng, rows=dataset.n_state),
                    DropoutMask.from_rng(spec, rng, rows=dataset.n_residual))
        tape = ad.Tape()
        theta = tape.leaf(x)
        mse_u, mse_f = _mse_terms(spec, theta, dataset, problem, mask)
        total = weights[0] * mse_u + weights[1] * mse_f
        (g,) = tape.backward(total)
        return float(total.value), g, (float(ad.value_of(mse_u)), float(ad.value_of(mse_f)))

    return adam_minimize(vg, x0, config, trace, callback)


def write_loss_trace(path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss_total", "loss_u", "loss_f"])
        for row in trace:
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:4]])


@dataclass
class EnsembleModel:
    spec: NetworkSpec
    members: np.ndarray  # (n_members, n_params[+2])
    seeds: list[int]
    method: str = "DE"
    traces: list = field(default_factory=list, repr=False)

    def predict(self, coords) -> np.ndarray:
        """(n_members, n_coords, out_dim) deterministic member predictions."""
        return np.stack(
            [forward(self.spec, split_parameters(m, self.spec)[0], coords) for m in self.members]
        )


def perturbed(
    dataset: SensorDataset, rng: np.random.Generator, residuals: bool = False
) -> SensorDataset:
    """Copy of ``dataset`` with fresh N(0, sigma_u^2) added to the state values.

    Residual targets are pseudo-observations of the known physics and are
    left alone unless ``residuals`` is set.
    """
    out = replace(
        dataset,
        state_values=dataset.state_values
        + dataset.sigma_u * rng.standard_normal(dataset.state_values.shape),
    )
    if residuals:
        out.residual_targets = dataset.residual_targets + dataset.sigma_f * rng.standard_normal(
            dataset.residual_targets.shape
        )
    return out


def member_seeds(rng: np.random.Generator, n: int) -> list[int]:
    seeds: list[int] = []
    while len(seeds) < n:
        s = int(rng.integers(2**63 - 1))
        if s not in seeds:
            seeds.append(s)
    return seeds


def train_deep_ensemble(
    spec: NetworkSpec,
    dataset: SensorDataset,
    problem: PdeProblem,
    config: TrainConfig,
    n_members: int,
    rng: np.random.Generator | None = None,
    init_fn: Callable[[np.random.Generator], np.ndarray] | None = None,
    perturb: bool = True,
) -> EnsembleModel:
    """Independent Adam runs from independent initializations.

    Member k trains with ``np.random.default_rng(seeds[k])``; ``init_fn`` maps
    that generator to a starting vector (Glorot by default).  With
    ``perturb`` each member first adds its own N(0, sigma_u^2) draw to the
    state observations (randomized MAP), so the spread also reflects what
    the shared noise realization does to every fit.
    """
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    seeds = member_seeds(rng, n_members)
    members, traces = [], []
    for k, seed in enumerate(seeds):
        mrng = np.random.default_rng(seed)
        init = None if init_fn is None else init_fn(mrng)
        data = perturbed(dataset, mrng) if perturb else dataset
        trace: list = []
        try:
            members.append(train_adam(spec, data, problem, config, mrng, init, trace))
        except Exception as exc:
            raise EnsembleError(k, exc) from exc
        traces.append(trace)
    return EnsembleModel(spec, np.stack(members), seeds, "DE", traces)


@dataclass
class McdModel:
    spec: NetworkSpec
    params: np.ndarray
    dropout_rate: float
    method: str = "MCD"
    tail: np.ndarray | None = field(default=None, repr=False)
    trace: list = field(default_factory=list, repr=False)


def train_mcd(
    spec: NetworkSpec,
    dataset: SensorDataset,
    problem: PdeProblem,
    config: TrainConfig,
    dropout_rate: float,
    rng: np.random.Generator | None = None,
    init: np.ndarray | None = None,
    keep_tail: int = 0,
) -> McdModel:
    """Train one network with dropout active in every iteration.

    ``keep_tail`` retains the last iterates, used for lambda spread in the
    inverse problem.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    dspec = spec.with_dropout(dropout_rate)
    tail: list[np.ndarray] = []

    def keep(it, x):
        if keep_tail and it >= config.iterations - keep_tail:
            tail.append(x.copy())

    trace: list = []
    params = train_adam(dspec, dataset, problem, config, rng, init, trace, keep)
    return McdModel(dspec, params, dropout_rate, "MCD", np.array(tail) if tail else None, trace)


def mcd_predict_samples(
    model: McdModel, coords, n_passes: int, rng: np.random.Generator | None = None
) -> np.ndarray:
    """(n_passes, n_coords, out_dim) stochastic forwards with fresh masks."""
    if n_passes < 1:
        raise ValueError("n_passes must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    net, _ = split_parameters(model.params, model.spec)
    out = []
    for _ in range(n_passes):
        mask = DropoutMask.from_rng(model.spec, rng, model.dropout_rate)
        out.append(forward(model.spec, net, coords, mask))
    return np.stack(out)
