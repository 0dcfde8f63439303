"""Hamiltonian Monte Carlo over flat parameter vectors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .mlp import NetworkSpec, save_params, split_parameters
from .oracles import SensorDataset
from .pde import PdeProblem
from .training import loss_terms


class Divergence(ArithmeticError):
    """Non-finite state or energy along a trajectory."""


class HmcError(RuntimeError):
    pass


@dataclass
class HmcConfig:
    leapfrog_steps: int = 50
    initial_step_size: float = 0.1
    burn_in_steps: int = 1000
    n_samples: int = 100
    target_accept_range: tuple[float, float] = (0.6, 0.9)
    prior_sigma: float = 1.0
    seed: int = 0
    step_jitter: float = 0.2
    adapt_rate: float = 0.05
    thin: int = 1

    def __post_init__(self):
        if not 0 <= self.step_jitter < 1:
            raise ValueError("step_jitter must lie in [0, 1)")
        if self.initial_step_size <= 0:
            raise ValueError("initial_step_size must be positive")
        if self.leapfrog_steps < 1 or self.n_samples < 1 or self.burn_in_steps < 0 or self.thin < 1:
            raise ValueError("invalid chain lengths")
        lo, hi = self.target_accept_range
        if not 0 <= lo <= hi <= 1:
            raise ValueError("target_accept_range must satisfy 0 <= lo <= hi <= 1")
        self.target_accept_range = (float(lo), float(hi))


def burgers_hmc_config(**overrides) -> HmcConfig:
    return HmcConfig(**{**dict(leapfrog_steps=50, initial_step_size=0.1, burn_in_steps=1000,
                               n_samples=100), **overrides})


def navier_stokes_hmc_config(**overrides) -> HmcConfig:
    return HmcConfig(**{**dict(leapfrog_steps=50, initial_step_size=0.01, burn_in_steps=5000,
                               n_samples=100), **overrides})


def softplus_inverse(y: float) -> float:
    return float(y + np.log(-np.expm1(-y)))


@dataclass(frozen=True)
class LambdaPrior:
    """Independent Gaussians on lambda1 and on the softplus pre-image of lambda2."""

    mean1: float = 1.0
    sigma1: float = 1.0
    mean_raw2: float = softplus_inverse(0.01)
    sigma_raw2: float = 1.0


def log_posterior(
    spec: NetworkSpec,
    params,
    dataset: SensorDataset,
    problem: PdeProblem,
    prior_sigma: float = 1.0,
    lambda_prior: LambdaPrior | None = None,
):
    """Unnormalized log posterior (taped when ``params`` is a Var).

    Gaussian likelihood with the dataset's noise scales, N(0, prior_sigma^2)
    on network weights and, for extended vectors, ``lambda_prior`` on the
    two trailing slots.
    """
    net, lam = split_parameters(params, spec)
    lp = 0.0
    if dataset.n_state or dataset.n_residual:
        sse_u, sse_f = loss_terms(spec, params, dataset, problem)
        lp = -sse_u * (0.5 / dataset.sigma_u**2) - sse_f * (0.5 / dataset.sigma_f**2)
    lp = lp - ad.sum(net * net) * (0.5 / prior_sigma**2)
    if lam is not None:
        lp_ = lambda_prior or LambdaPrior()
        n = spec.n_params
        d1 = params[n] - lp_.mean1
        d2 = params[n + 1] - lp_.mean_raw2
        lp = lp - d1 * d1 * (0.5 / lp_.sigma1**2) - d2 * d2 * (0.5 / lp_.sigma_raw2**2)
    return lp


def leapfrog(theta, momentum, step_size: float, n_steps: int, grad_logp: Callable):
    """Half kick, drift, half kick, repeated ``n_steps`` times (unit mass)."""
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    theta = np.array(theta, dtype=np.float64)
    p = np.array(momentum, dtype=np.float64)
    g = grad_logp(theta)
    for _ in range(n_steps):
        p = p + 0.5 * step_size * g
        theta = theta + step_size * p
        g = grad_logp(theta)
        p = p + 0.5 * step_size * g
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(p))):
            raise Divergence("non-finite state in leapfrog")
    return theta, p


def _trajectory(theta, p, eps, n_steps, logp_grad, g0):
    g = g0
    lp = None
    for _ in range(n_steps):
        p = p + 0.5 * eps * g
        theta = theta + eps * p
        lp, g = logp_grad(theta)
        p = p + 0.5 * eps * g
        if not (np.isfinite(lp) and np.all(np.isfinite(p)) and np.all(np.isfinite(theta))):
            raise Divergence("non-finite trajectory")
    return theta, p, lp, g


@dataclass
class ChainResult:
    samples: np.ndarray
    acceptance_rate: float
    burn_in_acceptance: float
    final_step_size: float
    log_prob: np.ndarray
    step_sizes: np.ndarray = field(repr=False)
    divergences: int = 0


def sample(
    logp_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    init,
    config: HmcConfig,
    rng: np.random.Generator | None = None,
) -> ChainResult:
    """Generic HMC with multiplicative step-size adaptation during burn-in.

    After each burn-in transition the step grows by 1.1 when the running
    acceptance (an exponential average of Metropolis acceptance
    probabilities) is above the target range and shrinks by 0.9 when below;
    it is frozen afterwards.  Each trajectory uses the current
    step times U(1 - jitter, 1 + jitter), which breaks the periodic orbits a
    fixed trajectory length produces on near-Gaussian targets.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    theta = np.array(init, dtype=np.float64)
    lp, g = logp_grad(theta)
    if not np.isfinite(lp):
        raise HmcError("initial state has non-finite log density")
    eps = config.initial_step_size
    lo, hi = config.target_accept_range
    total = config.burn_in_steps + config.n_samples * config.thin
    samples = np.empty((config.n_samples, theta.size))
    log_prob = np.empty(config.n_samples)
    steps = np.empty(total)
    accepted_burn = accepted = divergences = 0
    running = 0.5 * (lo + hi)
    for it in range(total):
        steps[it] = eps
        p0 = rng.standard_normal(theta.size)
        h0 = -lp + 0.5 * p0 @ p0
        jitter = config.step_jitter
        eps_it = eps * rng.uniform(1 - jitter, 1 + jitter) if jitter else eps
        try:
            # overflow along a runaway trajectory is caught as a Divergence
            with np.errstate(over="ignore", invalid="ignore"):
                th1, p1, lp1, g1 = _trajectory(theta, p0, eps_it, config.leapfrog_steps,
                                               logp_grad, g)
                h1 = -lp1 + 0.5 * p1 @ p1
            alpha = float(np.exp(min(0.0, h0 - h1))) if np.isfinite(h1) else 0.0
        except Divergence:
            alpha = 0.0
            divergences += 1
        accept = rng.random() < alpha
        if accept:
            theta, lp, g = th1, lp1, g1
        burn = it < config.burn_in_steps
        if burn:
            accepted_burn += accept
            running += config.adapt_rate * (alpha - running)
            if running > hi:
                eps *= 1.1
            elif running < lo:
                eps *= 0.9
        else:
            accepted += accept
            k, rem = divmod(it - config.burn_in_steps, config.thin)
            if rem == config.thin - 1:
                samples[k] = theta
                log_prob[k] = lp
    burn_rate = accepted_burn / config.burn_in_steps if config.burn_in_steps else 1.0
    if config.burn_in_steps and burn_rate < 0.01:
        raise HmcError(
            f"burn-in acceptance {burn_rate:.4f} below 1% (final step size {eps:.3e})"
        )
    return ChainResult(
        samples,
        accepted / (config.n_samples * config.thin),
        burn_rate,
        eps,
        log_prob,
        steps,
        divergences,
    )


@dataclass
class PosteriorSamples:
    spec: NetworkSpec
    samples: np.ndarray
    acceptance_rate: float
    final_step_size: float
    burn_in_acceptance: float = 0.0
    log_prob: np.ndarray | None = field(default=None, repr=False)
    divergences: int = 0
    method: str = "HMC"

    @property
    def lambda_samples(self) -> np.ndarray | None:
        n = self.spec.n_params
        if self.samples.shape[1] == n:
            return None
        return np.stack(
            [self.samples[:, n], np.logaddexp(0.0, self.samples[:, n + 1])], axis=1
        )

    def stats(self) -> dict:
        return {
            "method": self.method,
            "n_samples": int(len(self.samples)),
            "acceptance_rate": float(self.acceptance_rate),
            "burn_in_acceptance": float(self.burn_in_acceptance),
            "final_step_size": float(self.final_step_size),
            "divergences": int(self.divergences),
        }


def posterior_logp_grad(spec, dataset, problem, prior_sigma=1.0, lambda_prior=None):
    def fn(x):
        tape = ad.Tape()
        theta = tape.leaf(x)
        lp = log_posterior(spec, theta, dataset, problem, prior_sigma, lambda_prior)
        (g,) = tape.backward(lp)
        return float(lp.value), g

    return fn


def hmc_sample(
    spec: NetworkSpec,
    dataset: SensorDataset,
    problem: PdeProblem,
    config: HmcConfig,
    init: np.ndarray,
    rng: np.random.Generator | None = None,
    lambda_prior: LambdaPrior | None = None,
) -> PosteriorSamples:
    """Sample network (and, for extended ``init``, lambda) parameters."""
    init = np.asarray(init, dtype=np.float64)
    if not np.all(np.isfinite(init)):
        raise ValueError("init must be finite")
    fn = posterior_logp_grad(spec, dataset, problem, config.prior_sigma, lambda_prior)
    chain = sample(fn, init, config, rng)
    return PosteriorSamples(
        spec,
        chain.samples,
        chain.acceptance_rate,
        chain.final_step_size,
        chain.burn_in_acceptance,
        chain.log_prob,
        chain.divergences,
    )


def save_samples(path, posterior: PosteriorSamples, config: HmcConfig | None = None) -> Path:
    """Binary parameter records plus a JSON sidecar with chain statistics."""
    path = Path(path)
    n_extra = posterior.samples.shape[1] - posterior.spec.n_params
    save_params(path, posterior.spec, posterior.samples, n_extra)
    meta = posterior.stats()
    if config is not None:
        meta["config"] = asdict(config)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar
