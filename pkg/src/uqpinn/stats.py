"""Predictive summaries, error fields and coverage on evaluation grids."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


@dataclass
class EvalGrid:
    """Regular lattice, flattened row-major over ``axes`` (last axis fastest)."""

    axes: tuple[str, ...]
    ticks: tuple[np.ndarray, ...]
    fixed: dict

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(t) for t in self.ticks)

    @property
    def columns(self) -> tuple[str, ...]:
        """Coordinate names in network-input order."""
        names = list(self.axes) + list(self.fixed)
        order = ("x", "y", "t")
        return tuple(n for n in order if n in names)

    @property
    def coords(self) -> np.ndarray:
        mesh = np.meshgrid(*self.ticks, indexing="ij")
        cols = {a: m.ravel() for a, m in zip(self.axes, mesh)}
        n = mesh[0].size
        for name, value in self.fixed.items():
            cols[name] = np.full(n, float(value))
        return np.stack([cols[c] for c in self.columns], axis=1)

    def __len__(self) -> int:
        return int(np.prod(self.shape))


def burgers_grid(nx: int = 256, nt: int = 100) -> EvalGrid:
    return EvalGrid(("x", "t"), (np.linspace(-1, 1, nx), np.linspace(0, 1, nt)), {})


def navier_stokes_grid(nx: int = 100, ny: int = 50, t: float = 0.5, lower=(0.0, 0.0),
                       upper=(2 * np.pi, 2 * np.pi)) -> EvalGrid:
    return EvalGrid(
        ("x", "y"),
        (np.linspace(lower[0], upper[0], nx), np.linspace(lower[1], upper[1], ny)),
        {"t": t},
    )


@dataclass
class PredictiveSummary:
    mean: np.ndarray  # (n_points, n_outputs)
    std: np.ndarray
    method: str
    n_realizations: int
    outputs: tuple[str, ...]
    grid: EvalGrid | None = None


def predictive_summary(
    realizations,
    grid: EvalGrid | None = None,
    method: str = "",
    outputs: tuple[str, ...] | None = None,
) -> PredictiveSummary:
    """Pointwise mean and unbiased std over realizations of shape (R, n, k).

    A single realization gets std 0.
    """
    r = np.asarray(realizations, dtype=np.float64)
    if r.ndim == 2:
        r = r[:, :, None]
    if r.shape[0] == 0:
        raise ValueError("no realizations")
    # shifting by the first realization keeps identical realizations exact
    dev = r - r[0]
    mean = r[0] + dev.mean(axis=0)
    std = dev.std(axis=0, ddof=1) if r.shape[0] > 1 else np.zeros_like(mean)
    if outputs is None:
        outputs = tuple(("u", "v", "p")[: r.shape[2]]) if r.shape[2] <= 3 else tuple(
            f"y{i}" for i in range(r.shape[2])
        )
    return PredictiveSummary(mean, std, method, r.shape[0], tuple(outputs), grid)


@dataclass
class ErrorFields:
    l1_field: np.ndarray
    pointwise_error: np.ndarray
    relative_l2: np.ndarray  # one entry per output


def error_fields(summary: PredictiveSummary, exact) -> ErrorFields:
    exact = np.asarray(exact, dtype=np.float64).reshape(len(summary.mean), -1)
    k = exact.shape[1]
    err = summary.mean[:, :k] - exact
    rel = np.linalg.norm(err, axis=0) / np.linalg.norm(exact, axis=0)
    return ErrorFields(np.abs(err), err, rel)


def coverage_fraction(summary: PredictiveSummary, exact, k: float = 2.0) -> float:
    """Fraction of (point, output) entries with |mean - exact| <= k * std."""
    if k <= 0:
        raise ValueError("k must be positive")
    exact = np.asarray(exact, dtype=np.float64).reshape(len(summary.mean), -1)
    m = exact.shape[1]
    return float(np.mean(np.abs(summary.mean[:, :m] - exact) <= k * summary.std[:, :m]))


def gaussian_coverage_harness(
    n_points: int = 10_000,
    n_realizations: int = 200,
    scale: float = 0.3,
    k: float = 2.0,
    rng: np.random.Generator | int | None = None,
) -> float:
    """Coverage when the model is exactly calibrated.

    Realizations and the reference value are independent draws from the
    same N(center, scale^2) at every point, so the expected coverage is
    P(|Z| <= k) (0.954 for k = 2) up to finite-sample effects.
    """
    rng = np.random.default_rng(rng)
    center = np.sin(np.linspace(0, 6, n_points))[:, None]
    real = center + scale * rng.standard_normal((n_realizations, n_points, 1))
    truth = center + scale * rng.standard_normal((n_points, 1))
    return coverage_fraction(predictive_summary(real), truth, k)


def write_field_csv(path, summary: PredictiveSummary, grid: EvalGrid | None = None) -> None:
    grid = grid or summary.grid
    coords = grid.coords
    header = list(grid.columns)
    header += [f"mean_{o}" for o in summary.outputs] + [f"std_{o}" for o in summary.outputs]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.hstack([coords, summary.mean, summary.std]):
            w.writerow([repr(float(v)) for v in row])


def write_metrics(path, metrics: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
