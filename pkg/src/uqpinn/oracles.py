"""Reference solutions, synthetic sensor data and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from .pde import BURGERS_VISCOSITY, PdeProblem


class SchemaError(ValueError):
    """CSV header does not match a known layout."""


class CsvParseError(ValueError):
    """Malformed CSV row; ``line`` is 1-based and counts the header."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@lru_cache(maxsize=8)
def _hermite(n: int):
    return np.polynomial.hermite.hermgauss(n)


def burgers_exact(x, t, nu: float = BURGERS_VISCOSITY, n_nodes: int = 200) -> np.ndarray:
    """Cole-Hopf solution of u_t + u u_x = nu u_xx with u(x, 0) = -sin(pi x).

    u = -int sin(pi(x - e)) f(x - e) G dE / int f(x - e) G dE with
    f(y) = exp(-cos(pi y) / (2 pi nu)) and G the heat kernel; the kernel is
    absorbed into Gauss-Hermite weights.
    """
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    if np.any(np.abs(x) > 1 + 1e-12) or np.any(t < 0) or np.any(t > 1 + 1e-12):
        raise ValueError("Burgers oracle is defined on x in [-1, 1], t in [0, 1]")
    z, w = _hermite(n_nodes)
    out = np.empty(x.shape)
    t0 = t == 0
    out[t0] = -np.sin(np.pi * x[t0])
    xs, ts = x[~t0][:, None], t[~t0][:, None]
    y = xs - np.sqrt(4.0 * nu * ts) * z[None, :]
    logf = -np.cos(np.pi * y) / (2.0 * np.pi * nu)
    weights = w[None, :] * np.exp(logf - logf.max(axis=1, keepdims=True))
    out[~t0] = -(weights * np.sin(np.pi * y)).sum(axis=1) / weights.sum(axis=1)
    return out


def taylor_green_exact(x, y, t, nu: float, drift=(0.0, 0.0)):
    """Decaying Taylor-Green vortex, optionally carried by a uniform drift.

    With zero drift: u = -cos x sin y e^{-2 nu t}, v = sin x cos y e^{-2 nu t},
    p = -(cos 2x + cos 2y) e^{-4 nu t} / 4.  A drift (U, V) adds (U, V) to the
    velocity and moves the pattern with it, which is again an exact solution.
    """
    x, y, t = (np.asarray(a, dtype=float) for a in (x, y, t))
    U, V = drift
    xi, eta = x - U * t, y - V * t
    decay = np.exp(-2.0 * nu * t)
    u = U - np.cos(xi) * np.sin(eta) * decay
    v = V + np.sin(xi) * np.cos(eta) * decay
    p = -0.25 * (np.cos(2 * xi) + np.cos(2 * eta)) * decay**2
    return u, v, p


@dataclass(frozen=True)
class ExactField:
    """Ground-truth state as a function of coordinate rows."""

    fn: Callable[[np.ndarray], np.ndarray]
    provenance: str

    def __call__(self, coords) -> np.ndarray:
        return self.fn(np.atleast_2d(np.asarray(coords, dtype=float)))


def burgers_field(n_nodes: int = 200) -> ExactField:
    return ExactField(
        lambda c: burgers_exact(c[:, 0], c[:, 1], n_nodes=n_nodes)[:, None], "ColeHopf"
    )


def taylor_green_field(nu: float, drift=(0.0, 0.0), with_pressure: bool = False) -> ExactField:
    def fn(c):
        u, v, p = taylor_green_exact(c[:, 0], c[:, 1], c[:, 2], nu, drift)
        cols = (u, v, p) if with_pressure else (u, v)
        return np.stack(cols, axis=1)

    return ExactField(fn, "TaylorGreen")


def exact_field_for(problem: PdeProblem, with_pressure: bool = False) -> ExactField:
    if problem.kind == "burgers":
        return burgers_field()
    return taylor_green_field(problem.viscosity, problem.drift, with_pressure)


def _rows(values, n: int) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if n == 0:
        return a.reshape(0, a.shape[-1] if a.ndim == 2 else 1)
    return a.reshape(n, -1)


@dataclass
class SensorDataset:
    """Noisy state observations plus residual collocation points.

    ``residual_targets`` has one column per residual component; it holds the
    observed value of f (zero plus noise).
    """

    kind: str
    state_coords: np.ndarray
    state_values: np.ndarray
    residual_coords: np.ndarray
    residual_targets: np.ndarray
    sigma_u: float = 0.1
    sigma_f: float = 0.1
    seed: int | None = None

    def __post_init__(self):
        self.state_coords = np.atleast_2d(np.asarray(self.state_coords, dtype=float))
        self.state_values = _rows(self.state_values, len(self.state_coords))
        self.residual_coords = np.asarray(self.residual_coords, dtype=float).reshape(
            -1, self.state_coords.shape[1]
        )
        self.residual_targets = _rows(self.residual_targets, len(self.residual_coords))

    @property
    def n_state(self) -> int:
        return len(self.state_coords)

    @property
    def n_residual(self) -> int:
        return len(self.residual_coords)


def _uniform_points(problem: PdeProblem, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = np.asarray(problem.lower), np.asarray(problem.upper)
    return lo + (hi - lo) * rng.random((n, problem.input_dim))


def _face_points(problem: PdeProblem, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on the initial slice (half) and the spatial walls (half)."""
    pts = _uniform_points(problem, n, rng)
    d = problem.input_dim
    n_walls = 2 * (d - 1)
    # face 0 is t = t_min; faces 1.. are (axis, side) pairs of the spatial box
    face = np.where(rng.random(n) < 0.5, 0, 1 + rng.integers(n_walls, size=n))
    init = face == 0
    pts[init, d - 1] = problem.lower[d - 1]
    for k in range(n_walls):
        sel = face == k + 1
        axis, side = divmod(k, 2)
        pts[sel, axis] = problem.upper[axis] if side else problem.lower[axis]
    return pts


def generate_sensor_dataset(
    problem: PdeProblem,
    exact_field: ExactField,
    n_state: int,
    n_residual: int,
    sigma_u: float = 0.1,
    sigma_f: float = 0.1,
    rng: np.random.Generator | int | None = None,
    boundary_fraction: float = 0.0,
) -> SensorDataset:
    """Uniformly placed sensors with i.i.d. Gaussian noise.

    ``boundary_fraction`` of the state sensors sit on the faces of the
    space-time box instead: half on the initial slice, half spread over the
    spatial walls.
    """
    if n_state <= 0 or n_residual <= 0:
        raise ValueError("sensor counts must be positive")
    if sigma_u < 0 or sigma_f < 0:
        raise ValueError("noise scales must be non-negative")
    if not 0.0 <= boundary_fraction <= 1.0:
        raise ValueError("boundary_fraction must lie in [0, 1]")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    n_face = int(round(boundary_fraction * n_state))
    xs = _uniform_points(problem, n_state - n_face, rng)
    if n_face:
        xs = np.vstack([_face_points(problem, n_face, rng), xs])
    clean = exact_field(xs)
    obs = clean + sigma_u * rng.standard_normal(clean.shape)
    xr = _uniform_points(problem, n_residual, rng)
    targets = sigma_f * rng.standard_normal((n_residual, problem.n_residuals))
    return SensorDataset(problem.kind, xs, obs, xr, targets, sigma_u, sigma_f, seed)


STATE_HEADERS = {"burgers": ["x", "t", "u"], "navier_stokes": ["x", "y", "t", "u", "v"]}
RESIDUAL_HEADERS = {
    "burgers": (["x", "t"], ["x", "t", "f"]),
    "navier_stokes": (["x", "y", "t"], ["x", "y", "t", "f1", "f2", "f3"]),
}


def _read_rows(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvParseError(path, lineno, f"expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise CsvParseError(path, lineno, str(exc)) from None
    return header, np.asarray(rows, dtype=float).reshape(-1, len(header))


def load_dataset_csv(
    state_path,
    residual_path=None,
    sigma_u: float = 0.1,
    sigma_f: float = 0.1,
) -> SensorDataset:
    """Read state observations (and optionally residual points) from CSV.

    Without a residual file the state coordinates double as collocation
    points with zero targets.
    """
    header, data = _read_rows(state_path)
    kind = next((k for k, h in STATE_HEADERS.items() if h == header), None)
    if kind is None:
        raise SchemaError(f"{state_path}: unknown header {header}")
    d = 2 if kind == "burgers" else 3
    n_res = 1 if kind == "burgers" else 3
    coords, values = data[:, :d], data[:, d:]
    if residual_path is None:
        rc, rt = coords.copy(), np.zeros((len(coords), n_res))
    else:
        rheader, rdata = _read_rows(residual_path)
        plain, with_f = RESIDUAL_HEADERS[kind]
        if rheader == plain:
            rc, rt = rdata, np.zeros((len(rdata), n_res))
        elif rheader == with_f:
            rc, rt = rdata[:, :d], rdata[:, d:]
        else:
            raise SchemaError(f"{residual_path}: unknown header {rheader}")
    return SensorDataset(kind, coords, values, rc, rt, sigma_u, sigma_f)


def _write_csv(path, header, table) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in table:
            writer.writerow([repr(float(v)) for v in row])


def save_dataset_csv(dataset: SensorDataset, state_path, residual_path=None) -> None:
    """Write a dataset in the layout read by :func:`load_dataset_csv`."""
    _write_csv(
        state_path,
        STATE_HEADERS[dataset.kind],
        np.hstack([dataset.state_coords, dataset.state_values]),
    )
    if residual_path is not None:
        _write_csv(
            residual_path,
            RESIDUAL_HEADERS[dataset.kind][1],
            np.hstack([dataset.residual_coords, dataset.residual_targets]),
        )


def dataset_paths(directory) -> tuple[Path, Path]:
    directory = Path(directory)
    return directory / "state.csv", directory / "residual.csv"
