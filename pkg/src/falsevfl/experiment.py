"""Seeded experiment harness: data -> masks -> two-stage training -> metrics.

One experiment cell is (seed, test pattern). Per seed the harness draws a
train and a test split, normalizes with training statistics, generates
training masks with the designated mechanism, trains both stages once, and
reuses the checkpoint across every test pattern. Outputs are plain JSON and
CSV with versioned formats; a rerun with the same config produces
byte-identical files.

FALSEVFL_THREADS (default 1) caps how many seeds run in parallel worker
processes. Results are identical regardless of the setting because every
cell derives its randomness from (seed, purpose) substreams.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .baseline import VanillaConfig, vanilla_evaluate, vanilla_train
from .data import apply_normalization, zscore_normalize
from .errors import ConfigurationError, FormatError
from .inference import evaluate, save_metrics
from .missingness import (
    assign_label_availability,
    generate,
    mechanism_from_name,
)
from .model import init_params, save_checkpoint
from .rng import RngStream
from .synthetic import SyntheticSpec, energy_means, gen_synthetic, simplex_means
from .training import TrainConfig, train_stage1, train_stage2

EXPERIMENT_FORMAT_VERSION = 1
SUMMARY_HEADER = "test_pattern,mean_acc,std_acc,n_seeds"


@dataclass(frozen=True)
class SyntheticPlan:
    """Synthetic data generation shared by the train and test splits."""

    num_classes: int
    party_dims: tuple
    separation: float = 4.0
    std: float = 1.0
    train_per_class: int = 200
    test_per_class: int = 100
    # optional (C, K) per-class per-party signal amplitudes; None -> simplex
    block_energies: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "party_dims", tuple(int(v) for v in self.party_dims))
        if self.num_classes < 2:
            raise ConfigurationError("need at least two classes")
        if self.block_energies is not None:
            e = tuple(tuple(float(v) for v in row) for row in self.block_energies)
            if len(e) != self.num_classes:
                raise ConfigurationError("block_energies rows must match num_classes")
            object.__setattr__(self, "block_energies", e)

    def spec(self, per_class: int) -> SyntheticSpec:
        if self.block_energies is not None:
            means = energy_means(self.block_energies, self.party_dims, self.separation, self.std)
        else:
            means = simplex_means(self.num_classes, self.party_dims, self.separation, self.std)
        return SyntheticSpec(means, self.std, self.party_dims, per_class)

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "party_dims": list(self.party_dims),
            "separation": self.separation,
            "std": self.std,
            "train_per_class": self.train_per_class,
            "test_per_class": self.test_per_class,
            "block_energies": None
            if self.block_energies is None
            else [list(row) for row in self.block_energies],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticPlan":
        energies = d.get("block_energies")
        return cls(
            num_classes=int(d["num_classes"]),
            party_dims=tuple(d["party_dims"]),
            separation=float(d.get("separation", 4.0)),
            std=float(d.get("std", 1.0)),
            train_per_class=int(d["train_per_class"]),
            test_per_class=int(d["test_per_class"]),
            block_energies=None if energies is None else tuple(tuple(r) for r in energies),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    synthetic: SyntheticPlan
    train_mechanism: str
    test_mechanisms: tuple
    labeled_count: int
    aligned_labeled_count: int
    train: TrainConfig
    seeds: tuple
    baseline: object = None  # VanillaConfig or None
    snis_particles: int = 50

    def __post_init__(self):
        object.__setattr__(self, "test_mechanisms", tuple(self.test_mechanisms))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        mechanism_from_name(self.train_mechanism)
        for name in self.test_mechanisms:
            mechanism_from_name(name)
        if not self.seeds:
            raise ConfigurationError("at least one seed required")
        if not self.test_mechanisms:
            raise ConfigurationError("at least one test mechanism required")

    def to_dict(self) -> dict:
        return {
            "format_version": EXPERIMENT_FORMAT_VERSION,
            "synthetic": self.synthetic.to_dict(),
            "train_mechanism": self.train_mechanism,
            "test_mechanisms": list(self.test_mechanisms),
            "labeled_count": self.labeled_count,
            "aligned_labeled_count": self.aligned_labeled_count,
            "train": self.train.to_dict(),
            "baseline": None if self.baseline is None else dataclasses.asdict(self.baseline),
            "seeds": list(self.seeds),
            "snis_particles": self.snis_particles,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if d.get("format_version") != EXPERIMENT_FORMAT_VERSION:
            raise FormatError(
                f"unsupported experiment format_version {d.get('format_version')!r}"
            )
        baseline = d.get("baseline")
        return cls(
            synthetic=SyntheticPlan.from_dict(d["synthetic"]),
            train_mechanism=d["train_mechanism"],
            test_mechanisms=tuple(d["test_mechanisms"]),
            labeled_count=int(d["labeled_count"]),
            aligned_labeled_count=int(d["aligned_labeled_count"]),
            train=TrainConfig.from_dict(d["train"]),
            baseline=None if baseline is None else VanillaConfig(**baseline),
            seeds=tuple(d["seeds"]),
            snis_particles=int(d.get("snis_particles", 50)),
        )


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def save_experiment_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# per-seed cell

def prepare_seed_data(cfg: ExperimentConfig, seed: int):
    """Returns (train_ds, train_masks, test_ds, stats), all normalized."""
    rng = RngStream.from_seed(seed)
    train_raw = gen_synthetic(
        cfg.synthetic.spec(cfg.synthetic.train_per_class), rng.substream("train-data")
    )
    test_raw = gen_synthetic(
        cfg.synthetic.spec(cfg.synthetic.test_per_class), rng.substream("test-data")
    )
    train_ds, stats = zscore_normalize(train_raw)
    test_ds = apply_normalization(test_raw, stats)
    mech = mechanism_from_name(cfg.train_mechanism)
    masks = generate(train_ds, mech, rng.substream("train-masks"))
    masks = assign_label_availability(
        masks, cfg.labeled_count, cfg.aligned_labeled_count, rng.substream("labels")
    )
    return train_ds, masks, test_ds, stats


def run_seed(cfg: ExperimentConfig, seed: int, outdir: str) -> dict:
    """Train one seed, evaluate on every test pattern, write artifacts.

    Returns {"model": {pattern: accuracy}, "baseline": {pattern: accuracy}}.
    """
    rng = RngStream.from_seed(seed)
    train_ds, masks, test_ds, stats = prepare_seed_data(cfg, seed)
    train_cfg = dataclasses.replace(cfg.train, seed=seed)
    model = init_params(
        train_cfg.arch_for(train_ds.party_dims, train_ds.num_classes), rng.substream("init")
    )
    model.stats = stats
    train_stage1(model, train_ds, masks, train_cfg)
    train_stage2(model, train_ds, masks, train_cfg)
    ckpt_path = os.path.join(outdir, f"checkpoint_seed{seed}.json")
    save_checkpoint(model, ckpt_path)

    baseline_params = None
    if cfg.baseline is not None:
        baseline_params = vanilla_train(
            train_ds, masks, dataclasses.replace(cfg.baseline, seed=seed)
        )

    result = {"model": {}, "baseline": {}}
    for pattern in cfg.test_mechanisms:
        mech = mechanism_from_name(pattern)
        test_masks = generate(test_ds, mech, rng.substream("test-masks", pattern))
        metrics = evaluate(
            model, test_ds, test_masks, cfg.snis_particles, rng.substream("eval", pattern)
        )
        save_metrics(metrics, os.path.join(outdir, f"metrics_seed{seed}_{pattern}.json"))
        result["model"][pattern] = metrics.accuracy
        if baseline_params is not None:
            acc = vanilla_evaluate(baseline_params, test_ds, test_masks)
            # baseline has no particle diagnostics; store accuracy and count only
            payload = {
                "format_version": 1,
                "accuracy": acc,
                "n": test_ds.num_samples,
            }
            with open(
                os.path.join(outdir, f"baseline_metrics_seed{seed}_{pattern}.json"), "w"
            ) as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
            result["baseline"][pattern] = acc
    return result


def _run_seed_star(args):
    return run_seed(*args)


def write_summary(rows: dict, path) -> None:
    """rows: {pattern: list of accuracies across seeds}; fixed column order."""
    with open(path, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for pattern in rows:
            accs = np.asarray(rows[pattern], dtype=np.float64)
            fh.write(
                f"{pattern},{repr(float(accs.mean()))},{repr(float(accs.std()))},{len(accs)}\n"
            )


def run_experiment(cfg: ExperimentConfig, outdir: str) -> dict:
    os.makedirs(outdir, exist_ok=True)
    save_experiment_config(cfg, os.path.join(outdir, "config.json"))
    threads = int(os.environ.get("FALSEVFL_THREADS", "1"))
    if threads < 1:
        raise ConfigurationError("FALSEVFL_THREADS must be at least 1")
    jobs = [(cfg, seed, outdir) for seed in cfg.seeds]
    if threads == 1 or len(jobs) == 1:
        results = [run_seed(*job) for job in jobs]
    else:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(_run_seed_star, jobs))

    model_rows = {p: [] for p in cfg.test_mechanisms}
    base_rows = {p: [] for p in cfg.test_mechanisms}
    for res in results:
        for p in cfg.test_mechanisms:
            model_rows[p].append(res["model"][p])
            if res["baseline"]:
                base_rows[p].append(res["baseline"][p])
    write_summary(model_rows, os.path.join(outdir, "summary.csv"))
    if cfg.baseline is not None:
        write_summary(base_rows, os.path.join(outdir, "baseline_summary.csv"))
    return {
        "model": model_rows,
        "baseline": base_rows if cfg.baseline is not None else None,
        "outdir": outdir,
    }


def load_summary(path) -> dict:
    """Parse a summary CSV back into {pattern: (mean, std, n)}."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != SUMMARY_HEADER:
        raise FormatError("unexpected summary header")
    out = {}
    for ln in lines[1:]:
        if not ln:
            continue
        pattern, mean, std, n = ln.split(",")
        out[pattern] = (float(mean), float(std), int(n))
    return out
