"""Model parameters and forward passes.

The generative story has two stochastic layers: z ~ N(0, I) at the top,
h | z from the shared decoder, and each party's block x^k | h from that
party's decoder. Recognition runs the other way: each observed party
encodes its block into a diagonal Gaussian over h, the per-party Gaussians
are fused into one posterior (mean average, precision sum), and the shared
encoder maps sampled h to a Gaussian over z. A classifier head consumes h;
variant II adds one per-party missingness head emitting a Bernoulli logit.

Parameters are grouped into the generative set (party encoders/decoders,
shared encoder/decoder, and the missingness heads when present) and the
classifier set. After stage-1 training the generative set is frozen and
must never change again; `generative_checksum` makes that auditable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import FeatureStats, SampleView
from .distributions import DiagGaussian
from .errors import ConfigurationError, FormatError, UsageError
from .nets import (
    Dense,
    GaussianHead,
    LogitHead,
    Mlp,
    gaussian_head_forward,
    init_gaussian_head,
    init_logit_head,
    logit_head_forward,
)
from .rng import RngStream

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    party_dims: tuple
    num_classes: int
    dim_h: int = 128
    dim_z: int = 64
    hidden_party: tuple = (128, 128)
    hidden_global: tuple = (128, 128)
    hidden_disc: tuple = (128,)
    hidden_mask: tuple = (128, 128)
    variant: str = "I"

    def __post_init__(self):
        object.__setattr__(self, "party_dims", tuple(int(d) for d in self.party_dims))
        for name in ("hidden_party", "hidden_global", "hidden_disc", "hidden_mask"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.variant not in ("I", "II"):
            raise ConfigurationError("variant must be 'I' or 'II'")
        if not self.party_dims or any(d <= 0 for d in self.party_dims):
            raise ConfigurationError("party_dims must be positive")
        if self.dim_h <= 0 or self.dim_z <= 0 or self.num_classes <= 0:
            raise ConfigurationError("dim_h, dim_z, num_classes must be positive")

    @property
    def num_parties(self) -> int:
        return len(self.party_dims)

    def to_dict(self) -> dict:
        return {
            "party_dims": list(self.party_dims),
            "num_classes": self.num_classes,
            "dim_h": self.dim_h,
            "dim_z": self.dim_z,
            "hidden_party": list(self.hidden_party),
            "hidden_global": list(self.hidden_global),
            "hidden_disc": list(self.hidden_disc),
            "hidden_mask": list(self.hidden_mask),
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            party_dims=tuple(d["party_dims"]),
            num_classes=int(d["num_classes"]),
            dim_h=int(d["dim_h"]),
            dim_z=int(d["dim_z"]),
            hidden_party=tuple(d["hidden_party"]),
            hidden_global=tuple(d["hidden_global"]),
            hidden_disc=tuple(d["hidden_disc"]),
            hidden_mask=tuple(d["hidden_mask"]),
            variant=d["variant"],
        )


@dataclass
class ModelParams:
    arch: ArchConfig
    party_encoders: list  # GaussianHead per party: x^k -> q(h)
    party_decoders: list  # GaussianHead per party: h -> p(x^k)
    global_encoder: GaussianHead  # h -> q(z)
    global_decoder: GaussianHead  # z -> p(h)
    discriminator: LogitHead  # h -> class logits
    missing_heads: list = field(default_factory=list)  # variant II: x^k -> logit
    generative_frozen: bool = False
    stats: object = None  # FeatureStats the model was trained on, or None


def init_params(arch: ArchConfig, rng: RngStream) -> ModelParams:
    enc = [
        init_gaussian_head(d, arch.hidden_party, arch.dim_h, rng.substream("enc", k))
        for k, d in enumerate(arch.party_dims)
    ]
    dec = [
        init_gaussian_head(arch.dim_h, arch.hidden_party, d, rng.substream("dec", k))
        for k, d in enumerate(arch.party_dims)
    ]
    genc = init_gaussian_head(arch.dim_h, arch.hidden_global, arch.dim_z, rng.substream("genc"))
    gdec = init_gaussian_head(arch.dim_z, arch.hidden_global, arch.dim_h, rng.substream("gdec"))
    disc = init_logit_head(arch.dim_h, arch.hidden_disc, arch.num_classes, rng.substream("disc"))
    mis = []
    if arch.variant == "II":
        mis = [
            init_logit_head(d, arch.hidden_mask, 1, rng.substream("mis", k))
            for k, d in enumerate(arch.party_dims)
        ]
    return ModelParams(arch, enc, dec, genc, gdec, disc, mis)


# ---------------------------------------------------------------------------
# named parameter access

def _head_entries(prefix, head):
    """(name, owner dataclass, field) triples for every array in a head."""
    entries = []
    if isinstance(head, GaussianHead):
        for i, layer in enumerate(head.trunk.layers):
            entries.append((f"{prefix}.t{i}.w", layer, "w"))
            entries.append((f"{prefix}.t{i}.b", layer, "b"))
        entries.append((f"{prefix}.mean.w", head.mean, "w"))
        entries.append((f"{prefix}.mean.b", head.mean, "b"))
        entries.append((f"{prefix}.logvar.w", head.log_var, "w"))
        entries.append((f"{prefix}.logvar.b", head.log_var, "b"))
    elif isinstance(head, LogitHead):
        for i, layer in enumerate(head.trunk.layers):
            entries.append((f"{prefix}.t{i}.w", layer, "w"))
            entries.append((f"{prefix}.t{i}.b", layer, "b"))
        entries.append((f"{prefix}.out.w", head.out, "w"))
        entries.append((f"{prefix}.out.b", head.out, "b"))
    else:
        raise ConfigurationError(f"unknown head type {type(head).__name__}")
    return entries


def _all_entries(model: ModelParams):
    entries = []
    for k, head in enumerate(model.party_encoders):
        entries.extend(_head_entries(f"enc{k}", head))
    for k, head in enumerate(model.party_decoders):
        entries.extend(_head_entries(f"dec{k}", head))
    entries.extend(_head_entries("genc", model.global_encoder))
    entries.extend(_head_entries("gdec", model.global_decoder))
    entries.extend(_head_entries("disc", model.discriminator))
    for k, head in enumerate(model.missing_heads):
        entries.extend(_head_entries(f"mis{k}", head))
    return entries


def named_arrays(model: ModelParams) -> dict:
    """Flat name -> ndarray view of every parameter (insertion-ordered)."""
    return {name: getattr(owner, fld) for name, owner, fld in _all_entries(model)}


def is_discriminator_param(name: str) -> bool:
    return name.startswith("disc.")


def generative_names(model: ModelParams) -> list:
    """Everything except the classifier head (missing heads included)."""
    return [n for n in named_arrays(model) if not is_discriminator_param(n)]


def discriminator_names(model: ModelParams) -> list:
    return [n for n in named_arrays(model) if is_discriminator_param(n)]


def set_param(model: ModelParams, name: str, value) -> None:
    for n, owner, fld in _all_entries(model):
        if n == name:
            setattr(owner, fld, value)
            return
    raise ConfigurationError(f"unknown parameter {name!r}")


def lift_params(model: ModelParams, tape, names) -> tuple:
    """Return (model copy with tape Vars for `names`, dict name -> Var).

    The copy shares frozen arrays with the original and owns fresh head
    dataclasses, so taping never mutates the source model.
    """
    names = set(names)
    var_map = {}

    def lift_head(prefix, head):
        if isinstance(head, GaussianHead):
            new = GaussianHead(
                trunk=Mlp([Dense(l.w, l.b) for l in head.trunk.layers], list(head.trunk.activations)),
                mean=Dense(head.mean.w, head.mean.b),
                log_var=Dense(head.log_var.w, head.log_var.b),
            )
        else:
            new = LogitHead(
                trunk=Mlp([Dense(l.w, l.b) for l in head.trunk.layers], list(head.trunk.activations)),
                out=Dense(head.out.w, head.out.b),
            )
        for name, owner, fld in _head_entries(prefix, new):
            if name in names:
                var = tape.leaf(getattr(owner, fld))
                setattr(owner, fld, var)
                var_map[name] = var
        return new

    lifted = ModelParams(
        arch=model.arch,
        party_encoders=[lift_head(f"enc{k}", h) for k, h in enumerate(model.party_encoders)],
        party_decoders=[lift_head(f"dec{k}", h) for k, h in enumerate(model.party_decoders)],
        global_encoder=lift_head("genc", model.global_encoder),
        global_decoder=lift_head("gdec", model.global_decoder),
        discriminator=lift_head("disc", model.discriminator),
        missing_heads=[lift_head(f"mis{k}", h) for k, h in enumerate(model.missing_heads)],
        generative_frozen=model.generative_frozen,
        stats=model.stats,
    )
    missing = names - set(var_map)
    if missing:
        raise ConfigurationError(f"unknown parameter names: {sorted(missing)}")
    return lifted, var_map


def checksum_params(model: ModelParams, names) -> str:
    h = hashlib.sha256()
    arrays = named_arrays(model)
    for name in sorted(names):
        arr = np.ascontiguousarray(ad.value_of(arrays[name]))
        h.update(name.encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def generative_checksum(model: ModelParams) -> str:
    return checksum_params(model, generative_names(model))


# ---------------------------------------------------------------------------
# forward passes

def aggregate_posterior(party_posteriors) -> DiagGaussian:
    """Fuse per-party Gaussians over h: mean is the arithmetic average of the
    party means, precision is the sum of party precisions (absent parties
    contribute nothing, as if infinitely wide).

    A single party passes through untouched. With several, contributions are
    accumulated in a canonical byte order of their values, so the caller's
    enumeration order can never change the result, not even in the last bit.
    """
    posts = list(party_posteriors)
    if not posts:
        raise UsageError("cannot aggregate an empty set of party posteriors")
    if len(posts) == 1:
        return DiagGaussian(posts[0].mean, posts[0].log_var)
    order = sorted(
        range(len(posts)),
        key=lambda i: (
            ad.value_of(posts[i].mean).tobytes(),
            ad.value_of(posts[i].log_var).tobytes(),
        ),
    )
    inv_n = 1.0 / len(posts)
    mean = None
    precision = None
    for i in order:
        p = posts[i]
        prec = ad.exp(ad.neg(p.log_var))
        mean = p.mean if mean is None else ad.add(mean, p.mean)
        precision = prec if precision is None else ad.add(precision, prec)
    mean = ad.mul(mean, inv_n)
    log_var = ad.neg(ad.log(precision))
    return DiagGaussian(mean, log_var)


def encode_party(model: ModelParams, k: int, x_k) -> DiagGaussian:
    return gaussian_head_forward(model.party_encoders[k], x_k)


def encode_h(model: ModelParams, observed, features) -> DiagGaussian:
    """Aggregated posterior over h from the observed blocks.

    observed: ascending party indices; features: matching (n, d_k) arrays.
    """
    if len(observed) == 0:
        raise UsageError("at least one observed party required")
    posts = [encode_party(model, k, x) for k, x in zip(observed, features)]
    return aggregate_posterior(posts)


def encode_z(model: ModelParams, h) -> DiagGaussian:
    return gaussian_head_forward(model.global_encoder, h)


def decode_h(model: ModelParams, z) -> DiagGaussian:
    return gaussian_head_forward(model.global_decoder, z)


def decode_x(model: ModelParams, k: int, h) -> DiagGaussian:
    return gaussian_head_forward(model.party_decoders[k], h)


def discriminate(model: ModelParams, h):
    """Class log-probabilities for latent h."""
    from .distributions import softmax_logits_to_logprobs

    return softmax_logits_to_logprobs(logit_head_forward(model.discriminator, h))


def missing_logit(model: ModelParams, k: int, x_k):
    if not model.missing_heads:
        raise UsageError("model has no missingness heads (variant I)")
    return logit_head_forward(model.missing_heads[k], x_k)


def missing_prob(model: ModelParams, k: int, x_k):
    """Bernoulli parameter for block k being missing given its (possibly
    imputed) features."""
    logit = missing_logit(model, k, x_k)
    return 1.0 / (1.0 + np.exp(-ad.value_of(logit)))


def view_features_2d(view: SampleView) -> list:
    return [np.asarray(f, dtype=np.float64).reshape(1, -1) for f in view.features]


# ---------------------------------------------------------------------------
# checkpoint I/O

def save_checkpoint(model: ModelParams, path, kind: str = "falsevfl") -> None:
    params = {}
    for name, arr in named_arrays(model).items():
        a = ad.value_of(arr)
        params[name] = {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "arch": model.arch.to_dict(),
        "generative_frozen": bool(model.generative_frozen),
        "stats": None
        if model.stats is None
        else {"mean": [float(v) for v in model.stats.mean], "std": [float(v) for v in model.stats.std]},
        "params": params,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path) -> ModelParams:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(
            f"unsupported checkpoint format_version {payload.get('format_version')!r}"
        )
    if payload.get("kind") != "falsevfl":
        raise FormatError(f"checkpoint kind {payload.get('kind')!r} is not a falsevfl model")
    arch = ArchConfig.from_dict(payload["arch"])
    model = init_params(arch, RngStream.from_seed(0))
    stored = payload["params"]
    expected = named_arrays(model)
    if set(stored) != set(expected):
        raise FormatError("checkpoint parameter names do not match the architecture")
    for name, rec in stored.items():
        arr = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        if arr.shape != expected[name].shape:
            raise FormatError(f"checkpoint parameter {name} has shape {arr.shape}")
        set_param(model, name, arr)
    model.generative_frozen = bool(payload.get("generative_frozen", False))
    if payload.get("stats") is not None:
        model.stats = FeatureStats(
            mean=np.asarray(payload["stats"]["mean"], dtype=np.float64),
            std=np.asarray(payload["stats"]["std"], dtype=np.float64),
        )
    return model
