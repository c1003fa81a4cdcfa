"""Prediction by self-normalized importance sampling over the latent h.

p(y | x_obs) is approximated by sum_l w_l p(y | h_l) with particles drawn
from the recognition path and weights w_l proportional to the marginal
importance ratio r_l. Everything happens in log space; the normalized
weights sum to one by construction. The effective sample size
1 / sum_l w_l^2 is reported as a diagnostic, with a counted warning when
it collapses below 5% of the particle count.

Prediction is a function of the observed blocks only. Models with
missingness heads also default to the plain marginal ratio; the mask-aware
ratio is available behind `include_mask_term=True`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bounds import group_from_view, particle_terms, draw_noise
from .data import (
    AlignmentClass,
    PartitionedDataset,
    SampleView,
    alignment_class,
    sample_view,
)
from .diagnostics import warn_counted
from .errors import ConfigurationError, FormatError, UsageError
from .missingness import MaskSet
from .model import ModelParams
from .rng import RngStream

METRICS_FORMAT_VERSION = 1
PREDICTIONS_FORMAT_VERSION = 1
ESS_WARN_FRACTION = 0.05


@dataclass
class Prediction:
    class_probs: np.ndarray  # (C,)
    ess: float
    log_marginal: float  # logsumexp(log_r) - log L, a free byproduct


def normalize_log_weights(log_r: np.ndarray):
    """Turn raw log importance ratios into normalized weights plus their
    effective sample size 1 / sum w^2, all computed in log space so arbitrary
    magnitudes survive."""
    log_r = np.asarray(log_r, dtype=np.float64).reshape(-1)
    if log_r.size == 0:
        raise ConfigurationError("need at least one log weight")
    m = log_r.max()
    lse = m + np.log(np.exp(log_r - m).sum())
    log_w = log_r - lse
    w = np.exp(log_w)
    w /= w.sum()  # final rounding guard so the sum is 1 at any magnitude
    m2 = (2.0 * log_w).max()
    ess = float(np.exp(-(m2 + np.log(np.exp(2.0 * log_w - m2).sum()))))
    return w, ess, float(lse)


def snis_predict(model: ModelParams, view: SampleView, num_particles: int, rng: RngStream,
                 include_mask_term: bool = False) -> Prediction:
    if num_particles < 1:
        raise ConfigurationError("need at least one particle")
    group = group_from_view(view)
    noise = draw_noise(rng, model.arch, view.mask, num_particles, include_mask_term)
    terms = particle_terms(
        model, group, num_particles, 1, noise,
        conditional=False, include_mask_term=include_mask_term, want_class_probs=True,
    )
    log_r = np.asarray(terms["log_r"]).reshape(num_particles)
    w, ess, lse = normalize_log_weights(log_r)
    probs = w @ np.exp(np.asarray(terms["class_logprobs"]))
    if ess < ESS_WARN_FRACTION * num_particles:
        warn_counted(
            "snis_low_ess",
            f"effective sample size {ess:.2f} below {ESS_WARN_FRACTION:.0%} of {num_particles}",
        )
    return Prediction(
        class_probs=probs,
        ess=ess,
        log_marginal=float(lse - np.log(num_particles)),
    )


def classify(pred: Prediction) -> int:
    """Argmax class; ties resolve to the lowest index."""
    return int(np.argmax(pred.class_probs))


@dataclass
class Metrics:
    accuracy: float
    by_alignment: dict  # class value -> accuracy or None
    n: int
    ess_mean: float

    def to_dict(self) -> dict:
        return {
            "format_version": METRICS_FORMAT_VERSION,
            "accuracy": self.accuracy,
            "by_alignment": dict(self.by_alignment),
            "n": self.n,
            "ess_mean": self.ess_mean,
        }


def evaluate(model: ModelParams, ds: PartitionedDataset, masks: MaskSet,
             num_particles: int, rng: RngStream, include_mask_term: bool = False) -> Metrics:
    """Accuracy overall and per alignment class over a labeled dataset."""
    if ds.labels is None:
        raise UsageError("evaluation needs a labeled dataset")
    if masks.num_samples != ds.num_samples:
        raise ConfigurationError("mask set size does not match dataset")
    correct = 0
    ess_total = 0.0
    per_class = {cls: [0, 0] for cls in AlignmentClass}  # [correct, total]
    for i in range(ds.num_samples):
        rec = masks[i]
        view = sample_view(ds, i, rec)
        pred = snis_predict(
            model, view, num_particles, rng.substream("predict", i), include_mask_term
        )
        hit = int(classify(pred) == int(ds.labels[i]))
        correct += hit
        ess_total += pred.ess
        bucket = per_class[alignment_class(rec, ds.num_parties)]
        bucket[0] += hit
        bucket[1] += 1
    n = ds.num_samples
    by_alignment = {
        cls.value: (bucket[0] / bucket[1] if bucket[1] else None)
        for cls, bucket in per_class.items()
    }
    return Metrics(
        accuracy=correct / n,
        by_alignment=by_alignment,
        n=n,
        ess_mean=ess_total / n,
    )


def save_metrics(metrics: Metrics, path) -> None:
    with open(path, "w") as fh:
        json.dump(metrics.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_metrics(path) -> Metrics:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != METRICS_FORMAT_VERSION:
        raise FormatError(f"unsupported metrics format_version {payload.get('format_version')!r}")
    return Metrics(
        accuracy=payload["accuracy"],
        by_alignment=payload["by_alignment"],
        n=payload["n"],
        ess_mean=payload["ess_mean"],
    )


def save_predictions(preds, path) -> None:
    payload = {
        "format_version": PREDICTIONS_FORMAT_VERSION,
        "class_probs": [[float(v) for v in p.class_probs] for p in preds],
        "predicted": [classify(p) for p in preds],
        "ess": [p.ess for p in preds],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
