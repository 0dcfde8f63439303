"""HMC on a correlated 2-D Gaussian, the sampler's known-answer check.

The same sampler draws PINN weights; here the target is small enough to
compare the chain's moments with the truth directly.
"""

import numpy as np

from uqpinn.hmc import HmcConfig, sample

mu = np.array([1.0, -0.5])
cov = np.array([[1.0, 0.8], [0.8, 1.0]])
prec = np.linalg.inv(cov)


def log_density_and_grad(x):
    d = x - mu
    return -0.5 * d @ prec @ d, -prec @ d


config = HmcConfig(leapfrog_steps=10, initial_step_size=0.3, burn_in_steps=500,
                   n_samples=2000, seed=0)
chain = sample(log_density_and_grad, np.zeros(2), config)

print(f"acceptance {chain.acceptance_rate:.2f}, adapted step {chain.final_step_size:.3f}")
print("sample mean      ", np.round(chain.samples.mean(axis=0), 3), "  truth", mu)
print("sample covariance")
print(np.round(np.cov(chain.samples.T), 3))
