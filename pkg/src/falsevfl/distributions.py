"""Diagonal-Gaussian carriers and density helpers built on the tape ops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError

VAR_FLOOR = 1e-6
LOG_VAR_FLOOR = float(np.log(VAR_FLOOR))


@dataclass
class DiagGaussian:
    """Mean and log-variance, each an ndarray or a tape Var of equal shape."""

    mean: object
    log_var: object

    def variance(self):
        return ad.exp(self.log_var)


def reparam_sample(dist: DiagGaussian, eps):
    """mean + exp(0.5*log_var) * eps, differentiable through mean/log_var.

    `eps` is caller-supplied standard normal noise so draws are deterministic
    for a given stream and reusable across paired evaluations.
    """
    half = ad.mul(dist.log_var, 0.5)
    return ad.add(dist.mean, ad.mul(ad.exp(half), eps))


def gaussian_logpdf(x, dist: DiagGaussian):
    return ad.gaussian_logpdf(x, dist.mean, dist.log_var)


def standard_normal_logpdf(x):
    xv = ad.value_of(x)
    zeros = np.zeros(xv.shape[-1], dtype=np.float64)
    return ad.gaussian_logpdf(x, zeros, zeros)


def bernoulli_logpmf(logit, outcome):
    """log p(outcome) for outcome in {0,1} under p(1) = sigmoid(logit).

    `outcome` is a constant 0/1 array broadcastable against `logit`.
    log p(1) = -softplus(-logit); log p(0) = -softplus(logit).
    """
    o = np.asarray(ad.value_of(outcome), dtype=np.float64)
    if np.any((o != 0.0) & (o != 1.0)):
        raise ConfigurationError("bernoulli outcomes must be 0 or 1")
    term_one = ad.mul(ad.neg(ad.softplus(ad.neg(logit))), o)
    term_zero = ad.mul(ad.neg(ad.softplus(logit)), 1.0 - o)
    return ad.add(term_one, term_zero)


def softmax_logits_to_logprobs(logits):
    """Row-wise log-probabilities; exp of a row sums to 1."""
    return ad.log_softmax(logits, axis=-1)
