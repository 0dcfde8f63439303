"""Recover the convection coefficient and viscosity of a drifting vortex.

Noisy (u, v) sensors of a Taylor-Green vortex carried by a uniform drift;
every ensemble member learns its own (lambda1, lambda2) next to the network
weights.  Truth is lambda1 = 1, lambda2 = nu = 0.01.  This short run gives
a rough estimate; the desk preset (`uqpinn run --problem ns-inverse
--method de --scale desk`) trains longer.
"""

import numpy as np

from uqpinn import inverse, mlp, oracles, pde, training

nu = 0.01
problem = pde.navier_stokes_problem(nu, t_max=2.0, drift=(1.0, 0.5))
truth = oracles.exact_field_for(problem)
data = oracles.generate_sensor_dataset(problem, truth, 500, 500, sigma_u=0.05, sigma_f=0.05,
                                       rng=0)

spec = mlp.navier_stokes_spec(hidden_layers=4, hidden_width=20, lower=problem.lower,
                              upper=problem.upper)
config = training.TrainConfig(iterations=1500, learning_rate=3e-3)
ensemble = inverse.fit_inverse_de(spec, data, problem, config, n_members=3,
                                  rng=np.random.default_rng(0))

est = inverse.estimate_lambda(ensemble)
print(f"lambda1 = {est.mean[0]:.3f} +- {est.std[0]:.3f}   (truth 1)")
print(f"lambda2 = {est.mean[1]:.4f} +- {est.std[1]:.4f}  (truth {nu})")
