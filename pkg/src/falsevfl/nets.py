"""Dense layers and MLP forward passes (taped or plain numpy)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .distributions import LOG_VAR_FLOOR, DiagGaussian
from .errors import ConfigurationError
from .rng import RngStream

ACTIVATIONS = {
    "tanh": ad.tanh,
    "relu": ad.relu,
    "softplus": ad.softplus,
    "identity": lambda x: x,
}


@dataclass
class Dense:
    w: object  # (fan_in, fan_out)
    b: object  # (fan_out,)


@dataclass
class Mlp:
    layers: list  # list[Dense]
    activations: list  # activation tag per layer

    def __post_init__(self):
        if len(self.layers) != len(self.activations):
            raise ConfigurationError("one activation tag per layer required")
        for tag in self.activations:
            if tag not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {tag!r}")


def init_dense(fan_in: int, fan_out: int, rng: RngStream) -> Dense:
    # fan-in scaled uniform, zero bias
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    w = (rng.uniform((fan_in, fan_out)) * 2.0 - 1.0) * bound
    b = np.zeros(fan_out, dtype=np.float64)
    return Dense(w, b)


def init_mlp(dims, rng: RngStream, hidden_act: str = "tanh", out_act: str = "identity") -> Mlp:
    """dims = (in, h1, ..., out); hidden layers use hidden_act."""
    if len(dims) < 2:
        raise ConfigurationError("an MLP needs at least input and output dims")
    layers, acts = [], []
    for i in range(len(dims) - 1):
        layers.append(init_dense(dims[i], dims[i + 1], rng.substream("layer", i)))
        acts.append(hidden_act if i < len(dims) - 2 else out_act)
    return Mlp(layers, acts)


def dense_forward(layer: Dense, x):
    w_in = ad.value_of(layer.w).shape[0]
    if ad.value_of(x).shape[-1] != w_in:
        raise ConfigurationError(
            f"dense input dim {ad.value_of(x).shape[-1]} does not match weight fan-in {w_in}"
        )
    return ad.add(ad.matmul(x, layer.w), layer.b)


def mlp_forward(mlp: Mlp, x):
    """Apply layers in order; accepts (n, d_in) arrays or Vars."""
    out = x
    for layer, tag in zip(mlp.layers, mlp.activations):
        out = ACTIVATIONS[tag](dense_forward(layer, out))
    return out


@dataclass
class GaussianHead:
    """Shared trunk with linear mean head and clamped linear log-variance head."""

    trunk: Mlp
    mean: Dense
    log_var: Dense


def init_gaussian_head(dim_in: int, hidden, dim_out: int, rng: RngStream) -> GaussianHead:
    hidden = tuple(hidden)
    if hidden:
        trunk = init_mlp((dim_in, *hidden), rng.substream("trunk"), out_act="tanh")
        feat = hidden[-1]
    else:
        # degenerate affine head: no trunk at all
        trunk = Mlp([], [])
        feat = dim_in
    return GaussianHead(
        trunk=trunk,
        mean=init_dense(feat, dim_out, rng.substream("mean")),
        log_var=init_dense(feat, dim_out, rng.substream("log_var")),
    )


def gaussian_head_forward(head: GaussianHead, x) -> DiagGaussian:
    feat = mlp_forward(head.trunk, x) if head.trunk.layers else x
    mean = dense_forward(head.mean, feat)
    log_var = ad.clamp_min(dense_forward(head.log_var, feat), LOG_VAR_FLOOR)
    return DiagGaussian(mean, log_var)


@dataclass
class LogitHead:
    """Shared trunk with a linear logits head (classifier or mask indicator)."""

    trunk: Mlp
    out: Dense


def init_logit_head(dim_in: int, hidden, dim_out: int, rng: RngStream) -> LogitHead:
    hidden = tuple(hidden)
    trunk = init_mlp((dim_in, *hidden), rng.substream("trunk"), out_act="tanh") if hidden else Mlp([], [])
    feat = hidden[-1] if hidden else dim_in
    return LogitHead(trunk=trunk, out=init_dense(feat, dim_out, rng.substream("out")))


def logit_head_forward(head: LogitHead, x):
    feat = mlp_forward(head.trunk, x) if head.trunk.layers else x
    return dense_forward(head.out, feat)
