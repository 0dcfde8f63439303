"""Residual operators for viscous Burgers and 2-D incompressible Navier-Stokes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .jet import Jet

BURGERS_VISCOSITY = 0.01 / np.pi


@dataclass(frozen=True)
class PdeProblem:
    """Which PDE, its coefficients, and its space-time box.

    ``lower``/``upper`` list the bounds of every input coordinate in network
    input order: (x, t) for Burgers, (x, y, t) for Navier-Stokes.
    """

    kind: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    lam: tuple[float, float] = (1.0, 0.01)
    viscosity: float = BURGERS_VISCOSITY
    # background drift of the manufactured Taylor-Green flow, NS only
    drift: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.kind not in ("burgers", "navier_stokes"):
            raise ValueError(f"unknown PDE kind {self.kind!r}")
        dim = 2 if self.kind == "burgers" else 3
        if len(self.lower) != dim or len(self.upper) != dim:
            raise ValueError(f"{self.kind} needs {dim} bounds")

    @property
    def input_dim(self) -> int:
        return len(self.lower)

    @property
    def state_dim(self) -> int:
        return 1 if self.kind == "burgers" else 2

    @property
    def output_dim(self) -> int:
        return 1 if self.kind == "burgers" else 3

    @property
    def second_order_indices(self) -> tuple[int, ...]:
        return (0,) if self.kind == "burgers" else (0, 1)

    @property
    def n_residuals(self) -> int:
        return 1 if self.kind == "burgers" else 3

    def with_lambda(self, lam) -> PdeProblem:
        return replace(self, lam=(float(lam[0]), float(lam[1])))


def burgers_problem() -> PdeProblem:
    return PdeProblem("burgers", (-1.0, 0.0), (1.0, 1.0))


def navier_stokes_problem(
    nu: float = 0.01,
    t_max: float = 1.0,
    drift: tuple[float, float] = (0.0, 0.0),
    lam: tuple[float, float] | None = None,
) -> PdeProblem:
    """Taylor-Green box [0, 2pi]^2 x [0, t_max]; lambda defaults to (1, nu)."""
    lam = (1.0, nu) if lam is None else lam
    return PdeProblem(
        "navier_stokes",
        (0.0, 0.0, 0.0),
        (2 * np.pi, 2 * np.pi, float(t_max)),
        lam=tuple(lam),
        viscosity=nu,
        drift=tuple(drift),
    )


def _require_second(jet: Jet, needed: tuple[int, ...]) -> None:
    missing = [i for i in needed if i not in jet.second]
    if missing:
        raise ValueError(f"jet lacks second derivatives for inputs {missing}")


def burgers_residual(jet: Jet, viscosity: float = BURGERS_VISCOSITY):
    """u_t + u u_x - nu u_xx, inputs ordered (x, t)."""
    _require_second(jet, (0,))
    u = jet.u(0)
    return jet.du(0, 1) + u * jet.du(0, 0) - viscosity * jet.d2u(0, 0)


def navier_stokes_residual(jet: Jet, lam) -> tuple:
    """(x-momentum, y-momentum, continuity) for outputs (u, v, p), inputs (x, y, t).

    ``lam`` may hold floats or taped scalars.
    """
    _require_second(jet, (0, 1))
    lam1, lam2 = lam[0], lam[1]
    u, v = jet.u(0), jet.u(1)
    u_x, u_y, u_t = jet.du(0, 0), jet.du(0, 1), jet.du(0, 2)
    v_x, v_y, v_t = jet.du(1, 0), jet.du(1, 1), jet.du(1, 2)
    p_x, p_y = jet.du(2, 0), jet.du(2, 1)
    lap_u = jet.d2u(0, 0) + jet.d2u(0, 1)
    lap_v = jet.d2u(1, 0) + jet.d2u(1, 1)
    r1 = u_t + lam1 * (u * u_x + v * u_y) + p_x - lam2 * lap_u
    r2 = v_t + lam1 * (u * v_x + v * v_y) + p_y - lam2 * lap_v
    r3 = u_x + v_y
    return r1, r2, r3


def residuals(problem: PdeProblem, jet: Jet, lam=None) -> list:
    """Residual components as a list of (n,) arrays or Vars."""
    if problem.kind == "burgers":
        return [burgers_residual(jet, problem.viscosity)]
    return list(navier_stokes_residual(jet, problem.lam if lam is None else lam))


def residual_vector(problem: PdeProblem, jet: Jet, lam=None) -> np.ndarray:
    """Untaped residuals stacked to shape (n, n_residuals)."""
    return np.stack([ad.value_of(r) for r in residuals(problem, jet, lam)], axis=1)
