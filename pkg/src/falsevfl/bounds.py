"""Importance-weighted evidence bounds for partially observed samples.

For one sample with observed blocks x_obs, kappa particles (h_j, z_j) are
drawn from the recognition path q(h | x_obs) q(z | h). The per-particle
log importance ratio is

    log r_j = sum_{k observed} log p(x^k | h_j)   (party decoders)
            + log p(h_j | z_j) + log p(z_j)       (shared decoder, prior)
            - log q(h_j | x_obs) - log q(z_j | h_j)

and the bound estimate is logsumexp_j(log r_j) - log(kappa). Its
expectation is nondecreasing in kappa and never exceeds log p(x_obs).

The conditional variant adds log p(y | h_j) from the classifier head; its
expectation is bounded by log p(y, x_obs). Variant II multiplies in the
mask likelihood p(m | x_obs, x_mis): for observed blocks the mask head
reads the real features, for missing blocks it reads a fresh decoder
sample x_mis_j (whose proposal density cancels against the matching
generative factor, so no extra density term appears).

Draw order contract per sample, given `rows = reps * kappa` particle rows:
eps_h (rows, dim_h), then eps_z (rows, dim_z), then, only when the mask
term is evaluated, eps (rows, d_k) for each missing party in ascending
order. Fixing the stream fixes every draw, so paired comparisons across
kappa values reuse identical particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import PartitionedDataset, SampleView, sample_view
from .diagnostics import warn_counted
from .distributions import (
    DiagGaussian,
    bernoulli_logpmf,
    gaussian_logpdf,
    reparam_sample,
    standard_normal_logpdf,
)
from .errors import ConfigurationError, UsageError
from .missingness import MaskSet
from .model import (
    ModelParams,
    decode_h,
    decode_x,
    discriminate,
    encode_h,
    encode_z,
    missing_logit,
)
from .rng import RngStream

LOG_RATIO_LIMIT = 1e6

# keep evaluation-mode intermediates below ~a few hundred MB
_MAX_EVAL_ROWS = 1 << 19


@dataclass
class BoundEstimate:
    value: float
    kappa: int
    num_samples: int
    conditional: bool
    variant: str


@dataclass
class SampleGroup:
    """Samples sharing one availability mask, stacked for batched evaluation."""

    observed: tuple
    mask: tuple
    features: list  # (g, d_k) arrays aligned with observed
    labels: object  # (g,) int array or None
    indices: tuple  # dataset indices, ascending

    @property
    def size(self) -> int:
        return len(self.indices)


def group_from_view(view: SampleView) -> SampleGroup:
    return SampleGroup(
        observed=view.observed,
        mask=view.mask,
        features=[np.asarray(f, dtype=np.float64).reshape(1, -1) for f in view.features],
        labels=None if view.label is None else np.asarray([view.label], dtype=np.int64),
        indices=(view.index,),
    )


def build_groups(ds: PartitionedDataset, masks: MaskSet, indices, labeled_only: bool = False):
    """Group sample indices by availability mask. Groups are ordered by mask
    tuple, samples ascending within a group, so iteration is deterministic."""
    if masks.num_samples != ds.num_samples:
        raise ConfigurationError("mask set size does not match dataset")
    by_mask = {}
    for i in indices:
        rec = masks[i]
        if labeled_only and rec.u == 1:
            continue
        by_mask.setdefault(tuple(rec.m), []).append(int(i))
    groups = []
    for mask in sorted(by_mask):
        idxs = sorted(by_mask[mask])
        observed = tuple(k for k, v in enumerate(mask) if v == 0)
        feats = [ds.blocks[k][np.asarray(idxs)] for k in observed]
        labels = None
        if ds.labels is not None and all(masks[i].u == 0 for i in idxs):
            labels = ds.labels[np.asarray(idxs)]
        groups.append(SampleGroup(observed, mask, feats, labels, tuple(idxs)))
    return groups


@dataclass
class ParticleNoise:
    eps_h: np.ndarray
    eps_z: np.ndarray
    eps_mis: dict  # party index -> (rows, d_k)


def draw_noise(rng: RngStream, arch, mask, rows: int, with_mask_term: bool) -> ParticleNoise:
    """Draws follow the documented order so runs are reproducible."""
    eps_h = rng.normal((rows, arch.dim_h))
    eps_z = rng.normal((rows, arch.dim_z))
    eps_mis = {}
    if with_mask_term:
        for k, miss in enumerate(mask):
            if miss == 1:
                eps_mis[k] = rng.normal((rows, arch.party_dims[k]))
    return ParticleNoise(eps_h, eps_z, eps_mis)


def stack_noise(parts) -> ParticleNoise:
    keys = parts[0].eps_mis.keys()
    return ParticleNoise(
        eps_h=np.concatenate([p.eps_h for p in parts], axis=0),
        eps_z=np.concatenate([p.eps_z for p in parts], axis=0),
        eps_mis={k: np.concatenate([p.eps_mis[k] for p in parts], axis=0) for k in keys},
    )


def _clamp_log_ratio(log_r):
    vals = ad.value_of(log_r)
    n_out = int(np.sum((vals < -LOG_RATIO_LIMIT) | (vals > LOG_RATIO_LIMIT)))
    if n_out:
        warn_counted(
            "log_ratio_clamp",
            f"{n_out} per-particle log ratios clamped to +/-{LOG_RATIO_LIMIT:g}",
            amount=n_out,
        )
        return ad.clip(log_r, -LOG_RATIO_LIMIT, LOG_RATIO_LIMIT)
    return log_r


def particle_terms(
    model: ModelParams,
    group: SampleGroup,
    kappa: int,
    reps: int,
    noise: ParticleNoise,
    conditional: bool,
    include_mask_term: bool,
    want_class_probs: bool = False,
):
    """Per-particle log ratios for a group; rows = g * reps * kappa.

    Returns a dict with `log_r` shaped (g * reps, kappa) after clamping and,
    when requested, per-particle class log-probabilities (rows, C).
    """
    if kappa < 1:
        raise ConfigurationError("kappa must be at least 1")
    g = group.size
    per_sample = reps * kappa
    rows = g * per_sample

    q_h = encode_h(model, group.observed, group.features)
    mu_rep = ad.repeat_rows(q_h.mean, per_sample)
    lv_rep = ad.repeat_rows(q_h.log_var, per_sample)
    q_h_rep = DiagGaussian(mu_rep, lv_rep)
    h = reparam_sample(q_h_rep, noise.eps_h)
    log_qh = gaussian_logpdf(h, q_h_rep)

    q_z = encode_z(model, h)
    z = reparam_sample(q_z, noise.eps_z)
    log_qz = gaussian_logpdf(z, q_z)

    p_h = decode_h(model, z)
    log_ph = gaussian_logpdf(h, p_h)
    log_pz = standard_normal_logpdf(z)

    log_px = None
    for pos, k in enumerate(group.observed):
        x_rep = np.repeat(group.features[pos], per_sample, axis=0)
        term = gaussian_logpdf(x_rep, decode_x(model, k, h))
        log_px = term if log_px is None else ad.add(log_px, term)

    log_r = ad.add(log_px, log_ph)
    log_r = ad.add(log_r, log_pz)
    log_r = ad.sub(log_r, log_qh)
    log_r = ad.sub(log_r, log_qz)

    if include_mask_term:
        if not model.missing_heads:
            raise UsageError("mask term requested but the model has no missingness heads")
        for k in range(model.arch.num_parties):
            if group.mask[k] == 0:
                pos = group.observed.index(k)
                logit = missing_logit(model, k, group.features[pos])  # (g, 1)
                pmf = bernoulli_logpmf(logit, np.zeros((group.size, 1)))
                pmf = ad.reshape(ad.repeat_rows(pmf, per_sample), (rows,))
            else:
                dist_k = decode_x(model, k, h)
                x_mis = reparam_sample(dist_k, noise.eps_mis[k])
                logit = missing_logit(model, k, x_mis)  # (rows, 1)
                pmf = ad.reshape(bernoulli_logpmf(logit, np.ones((rows, 1))), (rows,))
            log_r = ad.add(log_r, pmf)

    class_logprobs = None
    if conditional or want_class_probs:
        class_logprobs = discriminate(model, h)
    if conditional:
        if group.labels is None:
            raise UsageError("conditional bound needs labeled samples")
        labels_rep = np.repeat(np.asarray(group.labels, dtype=np.int64), per_sample)
        log_r = ad.add(log_r, ad.gather_rows(class_logprobs, labels_rep))

    log_r = _clamp_log_ratio(log_r)
    out = {"log_r": ad.reshape(log_r, (g * reps, kappa))}
    if want_class_probs:
        out["class_logprobs"] = class_logprobs
    return out


def group_bound(model, group: SampleGroup, kappa: int, noise: ParticleNoise, conditional: bool,
                include_mask_term: bool):
    """Per-sample bound estimates for a group: (g,) node or array."""
    terms = particle_terms(model, group, kappa, 1, noise, conditional, include_mask_term)
    lse = ad.logsumexp(terms["log_r"], axis=1)
    return ad.add(lse, -math.log(kappa))


def _default_mask_term(model: ModelParams, override) -> bool:
    if override is None:
        return model.arch.variant == "II"
    return bool(override)


def marginal_bound(model: ModelParams, view: SampleView, kappa: int, rng: RngStream,
                   include_mask_term=None):
    """Single-sample bound estimate. Pass a model whose parameters were
    lifted onto a tape to record gradients; the return is then a Var."""
    with_mask = _default_mask_term(model, include_mask_term)
    group = group_from_view(view)
    noise = draw_noise(rng, model.arch, view.mask, kappa, with_mask)
    vals = group_bound(model, group, kappa, noise, conditional=False, include_mask_term=with_mask)
    return _scalar(vals)


def conditional_bound(model: ModelParams, view: SampleView, kappa: int, rng: RngStream,
                      include_mask_term=None):
    if view.label is None:
        raise UsageError("conditional bound needs a labeled sample")
    with_mask = _default_mask_term(model, include_mask_term)
    group = group_from_view(view)
    noise = draw_noise(rng, model.arch, view.mask, kappa, with_mask)
    vals = group_bound(model, group, kappa, noise, conditional=True, include_mask_term=with_mask)
    return _scalar(vals)


def _scalar(vals):
    if isinstance(vals, ad.Var):
        return ad.reshape(vals, ())
    return float(np.asarray(vals).reshape(()))


# ---------------------------------------------------------------------------
# evaluation-mode estimators (no tape, vectorized over replications)

def log_ratio_matrix(
    model: ModelParams,
    view: SampleView,
    kappa: int,
    reps: int,
    rng: RngStream,
    conditional: bool = False,
    include_mask_term=None,
) -> np.ndarray:
    """(reps, kappa) matrix of per-particle log ratios for one sample.

    Each replication draws its noise from a dedicated substream keyed by the
    replication index, so values never depend on how the evaluation is split
    into memory-bounded chunks.
    """
    with_mask = _default_mask_term(model, include_mask_term)
    group = group_from_view(view)
    chunk_reps = max(1, _MAX_EVAL_ROWS // max(kappa, 1))
    blocks = []
    done = 0
    while done < reps:
        take = min(chunk_reps, reps - done)
        parts = [
            draw_noise(rng.substream("rep", done + j), model.arch, view.mask, kappa, with_mask)
            for j in range(take)
        ]
        noise = parts[0] if take == 1 else stack_noise(parts)
        terms = particle_terms(
            model, group, kappa, take, noise, conditional, with_mask
        )
        blocks.append(np.asarray(terms["log_r"]))
        done += take
    return np.concatenate(blocks, axis=0)


def bound_replicates(
    model: ModelParams,
    view: SampleView,
    kappas,
    reps: int,
    rng: RngStream,
    conditional: bool = False,
    include_mask_term=None,
) -> dict:
    """Per-replication bound estimates for several kappa values, paired on
    shared particles: estimates for kappa use the first kappa columns of one
    (reps, max kappa) draw, so differences across kappa have low variance."""
    kappas = sorted(set(int(k) for k in kappas))
    k_max = kappas[-1]
    mat = log_ratio_matrix(model, view, k_max, reps, rng, conditional, include_mask_term)
    out = {}
    for k in kappas:
        sub = mat[:, :k]
        m = sub.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(sub - m).sum(axis=1))
        out[k] = lse - math.log(k)
    return out


def dataset_bound(
    model: ModelParams,
    ds: PartitionedDataset,
    masks: MaskSet,
    kappa: int,
    rng: RngStream,
    indices=None,
    conditional: bool = False,
    include_mask_term=None,
) -> BoundEstimate:
    """Mean single-draw bound over samples (diagnostic/report helper)."""
    idxs = range(ds.num_samples) if indices is None else indices
    with_mask = _default_mask_term(model, include_mask_term)
    total, count = 0.0, 0
    for i in idxs:
        rec = masks[i]
        if conditional and rec.u == 1:
            continue
        view = sample_view(ds, i, rec)
        sub = rng.substream("sample", int(i))
        noise = draw_noise(sub, model.arch, view.mask, kappa, with_mask)
        vals = group_bound(
            model, group_from_view(view), kappa, noise, conditional, with_mask
        )
        total += float(np.asarray(ad.value_of(vals)).reshape(()))
        count += 1
    if count == 0:
        raise UsageError("no eligible samples for the requested bound")
    return BoundEstimate(
        value=total / count,
        kappa=kappa,
        num_samples=count,
        conditional=conditional,
        variant=model.arch.variant,
    )
