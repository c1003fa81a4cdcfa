"""Vanilla split-network baseline with embedding-level zero imputation.

Each party embeds its block with a small MLP; the embeddings are
concatenated and fused into class logits. Training uses only samples that
are fully aligned AND labeled (the classical setting). At prediction time
a missing party contributes a zero embedding at the fusion boundary; raw
features are never zero-filled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import PartitionedDataset, SampleView
from .errors import ConfigurationError, UsageError
from .missingness import MaskSet
from .nets import LogitHead, init_logit_head, logit_head_forward, Dense, Mlp
from .optim import AdamState, adam_step
from .rng import RngStream


@dataclass(frozen=True)
class VanillaConfig:
    embed_dim: int = 32
    hidden: int = 64
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 64
    weight_decay: float = 1e-4
    seed: int = 0


@dataclass
class VanillaParams:
    party_dims: tuple
    num_classes: int
    embed_dim: int
    party_nets: list  # LogitHead per party -> embedding
    fusion: LogitHead  # concat embeddings -> class logits


def init_vanilla(party_dims, num_classes: int, cfg: VanillaConfig, rng: RngStream) -> VanillaParams:
    party_dims = tuple(int(d) for d in party_dims)
    nets = [
        init_logit_head(d, (cfg.hidden,), cfg.embed_dim, rng.substream("party", k))
        for k, d in enumerate(party_dims)
    ]
    fusion = init_logit_head(
        cfg.embed_dim * len(party_dims), (cfg.hidden,), num_classes, rng.substream("fusion")
    )
    return VanillaParams(party_dims, num_classes, cfg.embed_dim, nets, fusion)


def _entries(params: VanillaParams):
    entries = []

    def add_head(prefix, head):
        for i, layer in enumerate(head.trunk.layers):
            entries.append((f"{prefix}.t{i}.w", layer, "w"))
            entries.append((f"{prefix}.t{i}.b", layer, "b"))
        entries.append((f"{prefix}.out.w", head.out, "w"))
        entries.append((f"{prefix}.out.b", head.out, "b"))

    for k, net in enumerate(params.party_nets):
        add_head(f"party{k}", net)
    add_head("fusion", params.fusion)
    return entries


def _lift(params: VanillaParams, tape):
    var_map = {}

    def lift_head(prefix, head):
        new = LogitHead(
            trunk=Mlp([Dense(l.w, l.b) for l in head.trunk.layers], list(head.trunk.activations)),
            out=Dense(head.out.w, head.out.b),
        )
        for i, layer in enumerate(new.trunk.layers):
            for fld, tag in (("w", "w"), ("b", "b")):
                var = tape.leaf(getattr(layer, fld))
                setattr(layer, fld, var)
                var_map[f"{prefix}.t{i}.{tag}"] = var
        for fld in ("w", "b"):
            var = tape.leaf(getattr(new.out, fld))
            setattr(new.out, fld, var)
            var_map[f"{prefix}.out.{fld}"] = var
        return new

    lifted = VanillaParams(
        params.party_dims,
        params.num_classes,
        params.embed_dim,
        [lift_head(f"party{k}", h) for k, h in enumerate(params.party_nets)],
        lift_head("fusion", params.fusion),
    )
    return lifted, var_map


def _forward(params: VanillaParams, blocks, present) -> object:
    """blocks: (n, d_k) arrays per party; present: 0/1 per party.
    Missing parties contribute zero embeddings at the fusion boundary."""
    n = None
    for b in blocks:
        if b is not None:
            n = ad.value_of(b).shape[0]
            break
    embeds = []
    for k in range(len(params.party_dims)):
        if present[k]:
            embeds.append(ad.tanh(logit_head_forward(params.party_nets[k], blocks[k])))
        else:
            embeds.append(np.zeros((n, params.embed_dim)))
    fused = ad.concat_cols(embeds)
    return logit_head_forward(params.fusion, fused)


def vanilla_train(ds: PartitionedDataset, masks: MaskSet, cfg: VanillaConfig) -> VanillaParams:
    """Cross-entropy on the fully aligned, labeled subset only."""
    if ds.labels is None:
        raise ConfigurationError("baseline training needs labels")
    if masks.num_samples != ds.num_samples:
        raise ConfigurationError("mask set size does not match dataset")
    keep = [
        i
        for i in range(ds.num_samples)
        if masks[i].u == 0 and sum(masks[i].m) == 0
    ]
    if not keep:
        raise UsageError("baseline needs at least one fully aligned labeled sample")
    rng = RngStream.from_seed(cfg.seed).substream("vanilla")
    params = init_vanilla(ds.party_dims, ds.num_classes, cfg, rng.substream("init"))
    opt = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    keep_arr = np.asarray(keep)
    n = len(keep)
    arrays = {name: getattr(owner, fld) for name, owner, fld in _entries(params)}
    for epoch in range(cfg.epochs):
        order = rng.substream("shuffle", epoch).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = keep_arr[order[start:start + cfg.batch_size]]
            blocks = [ds.blocks[k][idx] for k in range(ds.num_parties)]
            labels = ds.labels[idx]
            tape = ad.Tape()
            lifted, var_map = _lift(params, tape)
            logits = _forward(lifted, blocks, [1] * ds.num_parties)
            logprobs = ad.log_softmax(logits, axis=-1)
            picked = ad.gather_rows(logprobs, labels)
            loss = ad.mul(ad.reduce_sum(picked), -1.0 / len(idx))
            grads = ad.backward(loss)
            adam_step(opt, arrays, {name: grads.wrt(v) for name, v in var_map.items()})
    return params


def vanilla_predict(params: VanillaParams, view: SampleView) -> np.ndarray:
    """Class probabilities; masked parties enter as zero embeddings."""
    blocks = [None] * len(params.party_dims)
    present = [0] * len(params.party_dims)
    for k, feats in zip(view.observed, view.features):
        blocks[k] = np.asarray(feats, dtype=np.float64).reshape(1, -1)
        present[k] = 1
    logits = _forward(params, blocks, present)
    logits = np.asarray(ad.value_of(logits)).reshape(-1)
    m = logits.max()
    e = np.exp(logits - m)
    return e / e.sum()


def vanilla_evaluate(params: VanillaParams, ds: PartitionedDataset, masks: MaskSet):
    """Accuracy of the baseline under the given availability records."""
    from .data import sample_view

    if ds.labels is None:
        raise UsageError("evaluation needs a labeled dataset")
    correct = 0
    for i in range(ds.num_samples):
        view = sample_view(ds, i, masks[i])
        probs = vanilla_predict(params, view)
        correct += int(int(np.argmax(probs)) == int(ds.labels[i]))
    return correct / ds.num_samples
