"""Bridges between the reference math in oracles.py and the library.

oracles.py stays free of library imports; this module does the dirty work of
injecting oracle-defined parameters into ModelParams instances and of
extracting plain-numpy callables from small models for the quadrature
oracles. The tiny forward replications here are written from the layer
arrays directly, on purpose, so they do not share code with the package.
"""

from __future__ import annotations

import math

import numpy as np

from falsevfl.data import AvailabilityRecord, PartitionedDataset, SampleView, from_matrix
from falsevfl.missingness import MaskSet
from falsevfl.model import ArchConfig, ModelParams, init_params, named_arrays, set_param
from falsevfl.rng import RngStream

import oracles

_LOG_VAR_FLOOR = math.log(1e-6)


# ---------------------------------------------------------------------------
# linear-Gaussian instances -> models

def lin_gauss_arch(lg: oracles.LinGauss) -> ArchConfig:
    return ArchConfig(
        party_dims=lg.party_dims,
        num_classes=lg.num_classes,
        dim_h=lg.dim_h,
        dim_z=lg.dim_z,
        hidden_party=(),
        hidden_global=(),
        hidden_disc=(),
        hidden_mask=(),
        variant="II" if lg.mis_W is not None else "I",
    )


def lin_gauss_model(lg: oracles.LinGauss) -> ModelParams:
    """ModelParams whose affine heads realize the oracle instance exactly.

    Log-variance heads get zero weights and a constant bias, so the noise
    scales are input-independent and the closed forms in oracles.py apply.
    """
    model = init_params(lin_gauss_arch(lg), RngStream.from_seed(0))
    for k, d in enumerate(lg.party_dims):
        set_param(model, f"enc{k}.mean.w", lg.enc_W[k].copy())
        set_param(model, f"enc{k}.mean.b", lg.enc_b[k].copy())
        set_param(model, f"enc{k}.logvar.w", np.zeros((d, lg.dim_h)))
        set_param(model, f"enc{k}.logvar.b", lg.enc_logvar[k].copy())
        set_param(model, f"dec{k}.mean.w", lg.W_x[k].copy())
        set_param(model, f"dec{k}.mean.b", lg.b_x[k].copy())
        set_param(model, f"dec{k}.logvar.w", np.zeros((lg.dim_h, d)))
        set_param(model, f"dec{k}.logvar.b", np.log(lg.var_x[k]))
        if lg.mis_W is not None:
            set_param(model, f"mis{k}.out.w", lg.mis_W[k].reshape(d, 1).copy())
            set_param(model, f"mis{k}.out.b", np.asarray([lg.mis_b[k]]))
    set_param(model, "genc.mean.w", lg.genc_W.copy())
    set_param(model, "genc.mean.b", lg.genc_b.copy())
    set_param(model, "genc.logvar.w", np.zeros((lg.dim_h, lg.dim_z)))
    set_param(model, "genc.logvar.b", lg.genc_logvar.copy())
    set_param(model, "gdec.mean.w", lg.W_s.copy())
    set_param(model, "gdec.mean.b", lg.b_s.copy())
    set_param(model, "gdec.logvar.w", np.zeros((lg.dim_z, lg.dim_h)))
    set_param(model, "gdec.logvar.b", np.log(lg.var_h))
    set_param(model, "disc.out.w", np.outer(lg.w_disc, lg.alpha))
    set_param(model, "disc.out.b", lg.beta.copy())
    return model


def lg_sample_features(rng: np.random.Generator, lg: oracles.LinGauss, n: int) -> np.ndarray:
    """Draw n feature rows from the instance's own generative law."""
    z = rng.standard_normal((n, lg.dim_z))
    h = z @ lg.W_s + lg.b_s + rng.standard_normal((n, lg.dim_h)) * np.sqrt(lg.var_h)
    blocks = [
        h @ lg.W_x[k] + lg.b_x[k] + rng.standard_normal((n, d)) * np.sqrt(lg.var_x[k])
        for k, d in enumerate(lg.party_dims)
    ]
    return np.hstack(blocks)


def lg_observed_slice(lg: oracles.LinGauss, row: np.ndarray, observed) -> np.ndarray:
    """Concatenate the observed blocks of one feature row, ascending."""
    offsets = np.cumsum((0,) + lg.party_dims)
    return np.concatenate([row[offsets[k]:offsets[k + 1]] for k in sorted(observed)])


# ---------------------------------------------------------------------------
# small nonlinear models -> quadrature callables

def _collect_trunk(names: dict, prefix: str):
    trunk = []
    i = 0
    while f"{prefix}.t{i}.w" in names:
        trunk.append((np.asarray(names[f"{prefix}.t{i}.w"]), np.asarray(names[f"{prefix}.t{i}.b"])))
        i += 1
    return trunk


def _trunk_np(trunk, x):
    out = x
    for w, b in trunk:
        out = np.tanh(out @ w + b)
    return out


def _gaussian_fn(names: dict, prefix: str):
    trunk = _collect_trunk(names, prefix)
    wm, bm = np.asarray(names[f"{prefix}.mean.w"]), np.asarray(names[f"{prefix}.mean.b"])
    wl, bl = np.asarray(names[f"{prefix}.logvar.w"]), np.asarray(names[f"{prefix}.logvar.b"])

    def fn(v):
        x = np.asarray(v, dtype=np.float64).reshape(-1, 1)
        feat = _trunk_np(trunk, x)
        mean = feat @ wm + bm
        log_var = np.maximum(feat @ wl + bl, _LOG_VAR_FLOOR)
        return mean[:, 0], np.exp(log_var[:, 0])

    return fn


def _logit_fn(names: dict, prefix: str, squeeze: bool):
    trunk = _collect_trunk(names, prefix)
    wo, bo = np.asarray(names[f"{prefix}.out.w"]), np.asarray(names[f"{prefix}.out.b"])

    def fn(v):
        x = np.asarray(v, dtype=np.float64).reshape(-1, 1)
        out = _trunk_np(trunk, x) @ wo + bo
        return out[:, 0] if squeeze else out

    return fn


def toy_fns(model: ModelParams) -> dict:
    """Plain-numpy generative callables for a dim_h = dim_z = 1 model whose
    parties are all 1-dimensional; feeds the quadrature oracles."""
    arch = model.arch
    assert arch.dim_h == 1 and arch.dim_z == 1
    assert all(d == 1 for d in arch.party_dims)
    names = {k: np.asarray(v) for k, v in named_arrays(model).items()}
    fns = {
        "h_given_z": _gaussian_fn(names, "gdec"),
        "x_given_h": {k: _gaussian_fn(names, f"dec{k}") for k in range(arch.num_parties)},
        "class_logits": _logit_fn(names, "disc", squeeze=False),
    }
    if model.missing_heads:
        fns["mis_logit"] = {k: _logit_fn(names, f"mis{k}", squeeze=True) for k in range(arch.num_parties)}
    return fns


def toy_model(seed: int, num_parties: int = 1, num_classes: int = 2,
              variant: str = "I", hidden=(8,)) -> ModelParams:
    """Small nonlinear model with 1-d latents and 1-d parties; weights are
    rescaled so the class posterior has real structure instead of sitting
    near uniform at init."""
    arch = ArchConfig(
        party_dims=(1,) * num_parties,
        num_classes=num_classes,
        dim_h=1,
        dim_z=1,
        hidden_party=hidden,
        hidden_global=hidden,
        hidden_disc=hidden,
        hidden_mask=hidden,
        variant=variant,
    )
    model = init_params(arch, RngStream.from_seed(seed))
    names = named_arrays(model)
    for name, arr in names.items():
        if name.endswith("mean.w") or name.endswith("out.w"):
            set_param(model, name, np.asarray(arr) * 3.0)
    return model


# ---------------------------------------------------------------------------
# masks, views, datasets

def rec(m, u: int = 1) -> AvailabilityRecord:
    return AvailabilityRecord(tuple(int(v) for v in m), int(u))


def mask_set(records) -> MaskSet:
    return MaskSet([r if isinstance(r, AvailabilityRecord) else rec(*r) for r in records])


def make_view(observed, features, num_parties: int, label=None, index: int = 0) -> SampleView:
    observed = tuple(sorted(int(k) for k in observed))
    m = tuple(0 if k in observed else 1 for k in range(num_parties))
    feats = tuple(np.asarray(f, dtype=np.float64).reshape(-1) for f in features)
    return SampleView(index=index, observed=observed, features=feats, mask=m, label=label)


def random_dataset(rng: np.random.Generator, n: int, party_dims,
                   num_classes: int = 0) -> PartitionedDataset:
    x = rng.standard_normal((n, sum(party_dims)))
    labels = rng.integers(0, num_classes, size=n) if num_classes else None
    return from_matrix(x, party_dims, labels, num_classes)


def blocks_with_variances(variances, dim: int = 2) -> np.ndarray:
    """One feature row whose k-th block has exactly the requested population
    variance: values (a, -a, 0, ...) with a = sqrt(var * dim / 2)."""
    row = []
    for v in variances:
        a = math.sqrt(v * dim / 2.0)
        row.extend([a, -a] + [0.0] * (dim - 2))
    return np.asarray(row, dtype=np.float64)
