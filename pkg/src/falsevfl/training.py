"""Two-stage optimization.

Stage 1 fits the generative/recognition parameters (and, for variant II,
the missingness heads) by maximizing the marginal bound over every sample,
labeled or not. Those parameters are then frozen for good. Stage 2 fits the
classifier head alone by maximizing the conditional bound over the labeled
samples; the frozen parameters shape the importance weights but receive no
updates, and byte-level checksums make that verifiable.

Minibatches are drawn with a per-epoch seeded shuffle (the trailing partial
batch is kept). Within a batch, samples sharing an availability mask are
evaluated together; each sample's particles come from a substream keyed by
(epoch, sample index), so the grouping and the batch size never change the
draws.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .bounds import build_groups, draw_noise, group_bound, stack_noise
from .data import PartitionedDataset
from .errors import ConfigurationError, FormatError, UsageError
from .missingness import MaskSet
from .model import (
    ArchConfig,
    ModelParams,
    discriminator_names,
    generative_checksum,
    generative_names,
    lift_params,
    named_arrays,
)
from .optim import AdamState, adam_step
from .rng import RngStream

TRAIN_CONFIG_KEYS = (
    "variant",
    "kappa",
    "dim_h",
    "dim_z",
    "hidden",
    "lr_stage1",
    "lr_stage2",
    "epochs_stage1",
    "epochs_stage2",
    "batch_size",
    "weight_decay",
    "seed",
)


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "I"
    kappa: int = 10
    dim_h: int = 128
    dim_z: int = 64
    hidden: int = 128
    lr_stage1: float = 5e-4
    lr_stage2: float = 2e-4
    epochs_stage1: int = 300
    epochs_stage2: int = 300
    batch_size: int = 128
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("I", "II"):
            raise ConfigurationError("variant must be 'I' or 'II'")
        if self.kappa < 1:
            raise ConfigurationError("kappa must be at least 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ConfigurationError("epoch counts must be non-negative")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in TRAIN_CONFIG_KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(TRAIN_CONFIG_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def arch_for(self, party_dims, num_classes: int) -> ArchConfig:
        w = int(self.hidden)
        return ArchConfig(
            party_dims=tuple(party_dims),
            num_classes=num_classes,
            dim_h=self.dim_h,
            dim_z=self.dim_z,
            hidden_party=(w, w),
            hidden_global=(w, w),
            hidden_disc=(w,),
            hidden_mask=(w, w),
            variant=self.variant,
        )


def load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise FormatError("train config must be a JSON object")
    return TrainConfig.from_dict(payload)


def save_train_config(cfg: TrainConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass
class StageReport:
    stage: int
    epochs: int
    epoch_bound: list = field(default_factory=list)  # mean single-draw bound per epoch
    updated_params: tuple = ()
    steps: int = 0


def _epoch_batches(n: int, batch_size: int, rng: RngStream, epoch: int):
    order = rng.substream("shuffle", epoch).permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _train_batch(model, train_names, ds, masks, batch_idx, kappa, conditional,
                 include_mask_term, noise_rng, epoch, opt):
    groups = build_groups(ds, masks, batch_idx, labeled_only=conditional)
    if not groups:
        return None
    tape = ad.Tape()
    lifted, var_map = lift_params(model, tape, train_names)
    total = None
    count = 0
    for grp in groups:
        noise = stack_noise(
            [
                draw_noise(noise_rng.substream("noise", epoch, i), model.arch, grp.mask,
                           kappa, include_mask_term)
                for i in grp.indices
            ]
        )
        vals = group_bound(lifted, grp, kappa, noise, conditional, include_mask_term)
        s = ad.reduce_sum(vals)
        total = s if total is None else ad.add(total, s)
        count += grp.size
    mean_bound = ad.mul(total, 1.0 / count)
    loss = ad.neg(mean_bound)
    grads = ad.backward(loss)
    params = named_arrays(model)
    adam_step(opt, {n: params[n] for n in train_names}, {n: grads.wrt(v) for n, v in var_map.items()})
    return float(ad.value_of(mean_bound)), count


def train_stage1(model: ModelParams, ds: PartitionedDataset, masks: MaskSet,
                 cfg: TrainConfig) -> StageReport:
    """Maximize the marginal bound over all samples; freeze the result."""
    if model.generative_frozen:
        raise UsageError("generative parameters are already frozen")
    if masks.num_samples != ds.num_samples:
        raise ConfigurationError("mask set size does not match dataset")
    include_mask_term = model.arch.variant == "II"
    train_names = generative_names(model)
    rng = RngStream.from_seed(cfg.seed).substream("stage1")
    opt = AdamState(lr=cfg.lr_stage1, weight_decay=cfg.weight_decay)
    report = StageReport(stage=1, epochs=cfg.epochs_stage1)
    n = ds.num_samples
    for epoch in range(cfg.epochs_stage1):
        acc, seen = 0.0, 0
        for batch_idx in _epoch_batches(n, cfg.batch_size, rng, epoch):
            out = _train_batch(
                model, train_names, ds, masks, batch_idx, cfg.kappa,
                conditional=False, include_mask_term=include_mask_term,
                noise_rng=rng, epoch=epoch, opt=opt,
            )
            if out is None:
                continue
            val, cnt = out
            acc += val * cnt
            seen += cnt
            report.steps += 1
        report.epoch_bound.append(acc / seen if seen else float("nan"))
    model.generative_frozen = True
    report.updated_params = tuple(train_names) if report.steps else ()
    return report


def train_stage2(model: ModelParams, ds: PartitionedDataset, masks: MaskSet,
                 cfg: TrainConfig) -> StageReport:
    """Maximize the conditional bound over labeled samples, classifier only.

    The generative parameters must already be frozen; their bytes are
    checksummed before and after as a hard guarantee.
    """
    if not model.generative_frozen:
        raise UsageError("run stage 1 (or freeze explicitly) before stage 2")
    if masks.num_samples != ds.num_samples:
        raise ConfigurationError("mask set size does not match dataset")
    labeled = [i for i in range(ds.num_samples) if masks[i].u == 0]
    if not labeled:
        raise UsageError("stage 2 needs at least one labeled sample")
    if ds.labels is None:
        raise ConfigurationError("dataset has no labels")
    include_mask_term = model.arch.variant == "II"
    train_names = discriminator_names(model)
    before = generative_checksum(model)
    rng = RngStream.from_seed(cfg.seed).substream("stage2")
    opt = AdamState(lr=cfg.lr_stage2, weight_decay=cfg.weight_decay)
    report = StageReport(stage=2, epochs=cfg.epochs_stage2)
    labeled_arr = np.asarray(labeled)
    n = len(labeled)
    for epoch in range(cfg.epochs_stage2):
        acc, seen = 0.0, 0
        for pos in _epoch_batches(n, cfg.batch_size, rng, epoch):
            batch_idx = labeled_arr[pos]
            out = _train_batch(
                model, train_names, ds, masks, batch_idx, cfg.kappa,
                conditional=True, include_mask_term=include_mask_term,
                noise_rng=rng, epoch=epoch, opt=opt,
            )
            if out is None:
                continue
            val, cnt = out
            acc += val * cnt
            seen += cnt
            report.steps += 1
        report.epoch_bound.append(acc / seen if seen else float("nan"))
    after = generative_checksum(model)
    if before != after:
        raise UsageError("frozen generative parameters changed during stage 2")
    report.updated_params = tuple(train_names) if report.steps else ()
    return report
