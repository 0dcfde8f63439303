"""Fully connected tanh networks over a flat parameter vector.

The flat layout is, layer by layer, the weight matrix (row-major,
``fan_in x fan_out``) followed by the bias.  Samplers and optimizers only
ever see that flat array; :func:`unpack` slices it back into layers and
works on taped :class:`~uqpinn.autodiff.Var` vectors as well.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class NetworkSpec:
    """Shape of a tanh MLP.

    ``input_lower``/``input_upper`` describe the physical input box; inputs are
    mapped affinely onto [-1, 1] before the first layer.  When omitted the
    inputs are used as given.
    """

    input_dim: int
    output_dim: int
    hidden_layers: int
    hidden_width: int
    dropout_rate: float = 0.0
    input_lower: tuple[float, ...] | None = None
    input_upper: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("need at least one hidden layer of width >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if (self.input_lower is None) != (self.input_upper is None):
            raise ValueError("input_lower and input_upper go together")
        if self.input_lower is not None:
            lo = np.asarray(self.input_lower, dtype=float)
            hi = np.asarray(self.input_upper, dtype=float)
            if lo.shape != (self.input_dim,) or hi.shape != (self.input_dim,):
                raise ValueError("input bounds must have input_dim entries")
            if np.any(hi <= lo):
                raise ValueError("input_upper must exceed input_lower")
            object.__setattr__(self, "input_lower", tuple(float(v) for v in lo))
            object.__setattr__(self, "input_upper", tuple(float(v) for v in hi))

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def input_affine(self) -> tuple[np.ndarray, np.ndarray]:
        """(scale, shift) with normalized = inputs * scale + shift."""
        if self.input_lower is None:
            return np.ones(self.input_dim), np.zeros(self.input_dim)
        lo = np.asarray(self.input_lower)
        hi = np.asarray(self.input_upper)
        scale = 2.0 / (hi - lo)
        return scale, -1.0 - lo * scale

    def with_dropout(self, rate: float) -> NetworkSpec:
        return NetworkSpec(
            self.input_dim,
            self.output_dim,
            self.hidden_layers,
            self.hidden_width,
            rate,
            self.input_lower,
            self.input_upper,
        )


def burgers_spec(hidden_layers: int = 8, hidden_width: int = 20, dropout_rate: float = 0.0):
    return NetworkSpec(2, 1, hidden_layers, hidden_width, dropout_rate, (-1.0, 0.0), (1.0, 1.0))


def navier_stokes_spec(
    hidden_layers: int = 10,
    hidden_width: int = 20,
    dropout_rate: float = 0.0,
    lower=(0.0, 0.0, 0.0),
    upper=(2 * np.pi, 2 * np.pi, 1.0),
):
    return NetworkSpec(3, 3, hidden_layers, hidden_width, dropout_rate, tuple(lower), tuple(upper))


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-normal weights, zero biases."""
    sizes = spec.layer_sizes
    chunks = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        chunks.append(rng.normal(0.0, std, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def unpack(vector, spec: NetworkSpec):
    """Split a flat vector (ndarray or Var) into ``[(W, b), ...]``."""
    n = ad.value_of(vector).shape[0]
    if ad.value_of(vector).ndim != 1 or n != spec.n_params:
        raise ValueError(f"parameter vector has length {n}, spec needs {spec.n_params}")
    layers = []
    offset = 0
    sizes = spec.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = ad.reshape(vector[offset : offset + fan_in * fan_out], (fan_in, fan_out))
        offset += fan_in * fan_out
        b = vector[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def pack(layers) -> np.ndarray:
    return np.concatenate(
        [np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in layers]
    ).astype(np.float64)


@dataclass
class DropoutMask:
    """Per-hidden-unit keep flags, one array per hidden layer.

    Flags have shape (width,) for a mask shared by every input row, or
    (rows, width) for an independent mask per row.
    """

    keep: list[np.ndarray]
    rate: float
    seed: int | None = None
    scales: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        inv = 1.0 / (1.0 - self.rate)
        self.scales = [np.where(k, inv, 0.0) for k in self.keep]

    @property
    def keep_fraction(self) -> float:
        flags = np.concatenate(self.keep)
        return float(flags.mean())

    @classmethod
    def draw(cls, spec: NetworkSpec, seed: int, rate: float | None = None,
             rows: int | None = None) -> DropoutMask:
        rate = spec.dropout_rate if rate is None else rate
        rng = np.random.default_rng(seed)
        shape = spec.hidden_width if rows is None else (rows, spec.hidden_width)
        keep = [rng.random(shape) >= rate for _ in range(spec.hidden_layers)]
        return cls(keep, rate, seed)

    @classmethod
    def from_rng(cls, spec: NetworkSpec, rng: np.random.Generator, rate: float | None = None,
                 rows: int | None = None):
        return cls.draw(spec, int(rng.integers(2**63 - 1)), rate, rows)


def _normalize(spec: NetworkSpec, inputs: np.ndarray) -> np.ndarray:
    if spec.input_lower is None:
        return inputs
    scale, shift = spec.input_affine()
    return inputs * scale + shift


def forward(spec: NetworkSpec, params, inputs, mask: DropoutMask | None = None):
    """Network output for a batch of inputs of shape (n, input_dim)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.shape[-1] != spec.input_dim:
        raise ValueError(f"inputs have {inputs.shape[-1]} columns, spec needs {spec.input_dim}")
    h = _normalize(spec, inputs)
    layers = unpack(params, spec)
    for k, (w, b) in enumerate(layers[:-1]):
        h = ad.tanh(h @ w + b)
        if mask is not None:
            h = h * mask.scales[k]
    w, b = layers[-1]
    return h @ w + b


def hidden_activations(spec: NetworkSpec, params, inputs) -> list[np.ndarray]:
    h = _normalize(spec, np.atleast_2d(np.asarray(inputs, dtype=np.float64)))
    out = []
    for w, b in unpack(np.asarray(params), spec)[:-1]:
        h = np.tanh(h @ w + b)
        out.append(h)
    return out


# Flat binary parameter files: int32 header then float64 payload.
_HEADER = struct.Struct("<7i")


def _record_bytes(spec: NetworkSpec, values: np.ndarray, n_extra: int) -> bytes:
    rate_ppm = int(round(spec.dropout_rate * 1e6))
    header = _HEADER.pack(
        spec.input_dim,
        spec.output_dim,
        spec.hidden_layers,
        spec.hidden_width,
        rate_ppm,
        n_extra,
        1 if spec.input_lower is not None else 0,
    )
    parts = [header]
    if spec.input_lower is not None:
        parts.append(np.asarray(spec.input_lower + spec.input_upper, dtype="<f8").tobytes())
    parts.append(np.asarray(values, dtype="<f8").tobytes())
    return b"".join(parts)


def save_params(path, spec: NetworkSpec, vectors, n_extra: int = 0) -> None:
    """Write one or more parameter vectors (one record each).

    ``n_extra`` counts trailing non-network slots, e.g. PDE coefficients.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[1] != spec.n_params + n_extra:
        raise ValueError("vector length does not match spec")
    with open(path, "wb") as fh:
        for v in vectors:
            fh.write(_record_bytes(spec, v, n_extra))


def load_params(path) -> tuple[NetworkSpec, np.ndarray, int]:
    """Read records written by :func:`save_params`; returns (spec, vectors, n_extra)."""
    data = Path(path).read_bytes()
    pos = 0
    spec = None
    n_extra = 0
    rows = []
    while pos < len(data):
        if len(data) - pos < _HEADER.size:
            raise ValueError(f"truncated header at byte {pos}")
        din, dout, layers, width, rate_ppm, n_extra, has_bounds = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        lower = upper = None
        if has_bounds:
            bounds = np.frombuffer(data, dtype="<f8", count=2 * din, offset=pos)
            lower, upper = tuple(bounds[:din]), tuple(bounds[din:])
            pos += 16 * din
        spec = NetworkSpec(din, dout, layers, width, rate_ppm / 1e6, lower, upper)
        count = spec.n_params + n_extra
        if len(data) - pos < 8 * count:
            raise ValueError(f"truncated record at byte {pos}")
        rows.append(np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64))
        pos += 8 * count
    if spec is None:
        raise ValueError(f"{path}: no records")
    return spec, np.stack(rows), n_extra


def split_parameters(vector, spec: NetworkSpec):
    """Return (network_params, lam) where lam is None for plain vectors.

    Extended vectors carry two trailing slots (lambda1, raw2) with
    lambda2 = softplus(raw2).
    """
    n = ad.value_of(vector).shape[0]
    if n == spec.n_params:
        return vector, None
    if n != spec.n_params + 2:
        raise ValueError(
            f"parameter vector has length {n}, expected {spec.n_params} or {spec.n_params + 2}"
        )
    net = vector[: spec.n_params]
    lam1 = vector[spec.n_params]
    lam2 = ad.softplus(vector[spec.n_params + 1])
    return net, (lam1, lam2)
