"""Deep-ensemble PINN for viscous Burgers, with uncertainty heatmaps.

A small ensemble trained on noisy sensors; writes field.csv and SVG
heatmaps of the predictive mean, std and absolute error to ./burgers_demo.
Run with more iterations and members for a sharper shock.
"""

from pathlib import Path

import numpy as np

from uqpinn import heatmap, mlp, oracles, pde, stats, training

out = Path("burgers_demo")
out.mkdir(exist_ok=True)

problem = pde.burgers_problem()
truth = oracles.burgers_field()

# 400 noisy sensors of u (20% on the initial slice and walls) and 400 collocation points
data = oracles.generate_sensor_dataset(problem, truth, 400, 400, sigma_u=0.1, sigma_f=0.1,
                                       rng=0, boundary_fraction=0.2)

spec = mlp.burgers_spec(hidden_layers=4, hidden_width=20)
config = training.TrainConfig(iterations=4000)
ensemble = training.train_deep_ensemble(spec, data, problem, config, n_members=3,
                                        rng=np.random.default_rng(0))

grid = stats.burgers_grid(128, 50)
preds = np.stack([mlp.forward(spec, m, grid.coords) for m in ensemble.members])
summary = stats.predictive_summary(preds, grid, "DE")
exact = truth(grid.coords)

err = stats.error_fields(summary, exact)
print(f"relative L2 error {err.relative_l2[0]:.3f}")
print(f"2-sigma coverage  {stats.coverage_fraction(summary, exact):.3f}")

stats.write_field_csv(out / "field.csv", summary)
heatmap.render_heatmap(out / "field.csv", out / "mean_u.svg", "mean_u")
heatmap.render_heatmap(out / "field.csv", out / "std_u.svg", "std_u", "magma")
print(f"heatmaps written to {out}/")
