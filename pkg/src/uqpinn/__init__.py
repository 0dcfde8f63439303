"""Uncertainty quantification for physics-informed networks with numpy.

Modules: ``autodiff`` (tape and gradients), ``mlp`` and ``jet`` (networks and
input derivatives), ``pde`` (residuals), ``oracles`` (reference solutions and
sensor data), ``training`` (Adam, deep ensembles, MC dropout), ``hmc``,
``inverse``, ``stats``, ``heatmap`` and ``cli``.
"""

__version__ = "0.1.0"
