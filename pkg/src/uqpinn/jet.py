"""Input-derivative jets of an MLP.

A jet carries the network output together with all first derivatives with
respect to the inputs and the pure second derivatives for a chosen subset of
inputs.  Propagation is layer by layer (affine map, then tanh) and, when the
parameters are a taped ``Var``, every step lands on the tape so parameter
gradients of any jet component come from one reverse sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import autodiff as ad
from .mlp import DropoutMask, NetworkSpec, unpack


@dataclass
class Jet:
    """Batched jet.

    value: (n, out); d1: (n, out, in) with d1[:, k, i] = d out_k / d x_i;
    d2: (n, out, len(second)) with d2[:, k, j] = d^2 out_k / d x_{second[j]}^2.
    Entries are ndarrays or taped Vars.
    """

    value: Any
    d1: Any
    d2: Any
    second: tuple[int, ...]

    def u(self, k: int):
        return self.value[:, k]

    def du(self, k: int, i: int):
        return self.d1[:, k, i]

    def d2u(self, k: int, i: int):
        if i not in self.second:
            raise KeyError(f"no second derivative for input {i}; have {self.second}")
        return self.d2[:, k, self.second.index(i)]


def _as_index(indices: Sequence[int]):
    idx = list(indices)
    if idx and idx == list(range(idx[0], idx[0] + len(idx))):
        return slice(idx[0], idx[0] + len(idx))
    return np.asarray(idx, dtype=np.intp)


def forward_jet(
    spec: NetworkSpec,
    params,
    inputs,
    second_order_indices: Sequence[int] = (),
    mask: DropoutMask | None = None,
) -> Jet:
    """Jet of the network at a batch of points ``inputs`` of shape (n, input_dim)."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != spec.input_dim:
        raise ValueError(f"inputs have {x.shape[-1]} columns, spec needs {spec.input_dim}")
    second = tuple(int(i) for i in second_order_indices)
    if any(not 0 <= i < spec.input_dim for i in second):
        raise ValueError(f"second-order indices {second} out of range")
    sel = _as_index(second)
    n = x.shape[0]
    scale, shift = spec.input_affine()
    layers = unpack(params, spec)

    w, b = layers[0]
    z = (x * scale + shift) @ w + b
    dz = scale[:, None] * w  # (in, width); input map is affine so no d2 term yet
    d2z = None
    for k in range(spec.hidden_layers):
        s = ad.tanh(z)
        s1 = 1.0 - s * s
        width = spec.hidden_width
        s1e = ad.reshape(s1, (n, 1, width))
        h, dh = s, s1e * dz
        if second:
            s2e = ad.reshape(-2.0 * s * s1, (n, 1, width))
            dsel = dz[..., sel, :]
            d2h = s2e * (dsel * dsel)
            if d2z is not None:
                d2h = d2h + s1e * d2z
        if mask is not None:
            m = mask.scales[k]
            h = h * m
            if m.ndim == 2:  # one mask row per input point
                m = m[:, None, :]
            dh = dh * m
            if second:
                d2h = d2h * m
        w, b = layers[k + 1]
        z = h @ w + b
        dz = dh @ w
        if second:
            d2z = d2h @ w
    d1 = ad.swapaxes(dz, 1, 2)
    d2 = ad.swapaxes(d2z, 1, 2) if second else np.zeros((n, spec.output_dim, 0))
    return Jet(z, d1, d2, second)
