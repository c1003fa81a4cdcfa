"""Command-line entry points.

Subcommands cover the full pipeline: synth-data, gen-masks, pretrain
(stage 1), train (stage 2), predict, evaluate, grid, audit-masks, and an
optional plot. Every command exits 0 on success and nonzero with a
diagnostic on stderr otherwise. FALSEVFL_THREADS (default 1) bounds
process-level parallelism in `grid`.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import data as dataio
from . import missingness as miss
from .errors import ConfigurationError, FormatError, UsageError
from .experiment import load_experiment_config, load_summary, run_experiment
from .inference import evaluate as run_evaluate
from .inference import save_metrics, save_predictions, snis_predict
from .model import init_params, load_checkpoint, save_checkpoint
from .rng import RngStream
from .synthetic import SyntheticSpec, gen_synthetic, simplex_means
from .training import load_train_config, train_stage1, train_stage2


def _parse_dims(text: str):
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad party dims {text!r}; expected e.g. 3,3,3") from None
    if not dims or any(d <= 0 for d in dims):
        raise ConfigurationError("party dims must be positive integers")
    return dims


def _load_dataset(path, dims):
    return dataio.load_csv(path, dims)


def cmd_synth_data(args) -> int:
    dims = _parse_dims(args.party_dims)
    means = simplex_means(args.classes, dims, args.separation, args.std)
    spec = SyntheticSpec(means, args.std, dims, args.per_class)
    ds = gen_synthetic(spec, RngStream.from_seed(args.seed).substream("synth"))
    dataio.save_csv(ds, args.out)
    print(f"wrote {ds.num_samples} samples x {sum(dims)} features to {args.out}")
    return 0


def cmd_gen_masks(args) -> int:
    dims = _parse_dims(args.party_dims)
    ds = _load_dataset(args.data, dims)
    if args.stats:
        stats = dataio.load_stats(args.stats)
        ds_norm = dataio.apply_normalization(ds, stats)
    else:
        ds_norm, _ = dataio.zscore_normalize(ds)
    spec = miss.mechanism_from_name(args.mechanism)
    rng = RngStream.from_seed(args.seed).substream("masks")
    masks = miss.generate(ds_norm, spec, rng)
    if args.labeled:
        masks = miss.assign_label_availability(
            masks, args.labeled, args.aligned_labeled, rng.substream("labels")
        )
    miss.save_masks(masks, args.out)
    report = miss.audit(masks).to_dict()
    print(json.dumps(report, sort_keys=True))
    return 0


def _prepare_model_data(ds, ckpt_model):
    if ckpt_model.stats is not None:
        return dataio.apply_normalization(ds, ckpt_model.stats)
    return ds


def cmd_pretrain(args) -> int:
    dims = _parse_dims(args.party_dims)
    ds = _load_dataset(args.data, dims)
    masks = miss.load_masks(args.masks)
    cfg = load_train_config(args.config)
    num_classes = ds.num_classes
    if args.num_classes:
        num_classes = args.num_classes
    if num_classes <= 0:
        raise ConfigurationError("dataset has no labels; pass --num-classes")
    ds_norm, stats = dataio.zscore_normalize(ds)
    rng = RngStream.from_seed(cfg.seed)
    model = init_params(cfg.arch_for(dims, num_classes), rng.substream("init"))
    model.stats = stats
    report = train_stage1(model, ds_norm, masks, cfg)
    save_checkpoint(model, args.out)
    if args.stats_out:
        dataio.save_stats(stats, args.stats_out)
    last = report.epoch_bound[-1] if report.epoch_bound else float("nan")
    print(f"stage 1 done: {report.epochs} epochs, final mean bound {last:.4f}")
    return 0


def cmd_train(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = _load_dataset(args.data, model.arch.party_dims)
    masks = miss.load_masks(args.masks)
    cfg = load_train_config(args.config)
    ds_norm = _prepare_model_data(ds, model)
    report = train_stage2(model, ds_norm, masks, cfg)
    save_checkpoint(model, args.out)
    last = report.epoch_bound[-1] if report.epoch_bound else float("nan")
    print(f"stage 2 done: {report.epochs} epochs, final mean bound {last:.4f}")
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = _load_dataset(args.data, model.arch.party_dims)
    masks = miss.load_masks(args.masks)
    if masks.num_samples != ds.num_samples:
        raise ConfigurationError("mask set size does not match dataset")
    ds_norm = _prepare_model_data(ds, model)
    rng = RngStream.from_seed(args.seed).substream("predict")
    preds = []
    for i in range(ds_norm.num_samples):
        view = dataio.sample_view(ds_norm, i, masks[i])
        preds.append(
            snis_predict(model, view, args.particles, rng.substream("sample", i),
                         include_mask_term=args.mask_term)
        )
    save_predictions(preds, args.out)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = _load_dataset(args.data, model.arch.party_dims)
    masks = miss.load_masks(args.masks)
    ds_norm = _prepare_model_data(ds, model)
    rng = RngStream.from_seed(args.seed).substream("evaluate")
    metrics = run_evaluate(model, ds_norm, masks, args.particles, rng,
                           include_mask_term=args.mask_term)
    save_metrics(metrics, args.out)
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    return 0


def cmd_grid(args) -> int:
    cfg = load_experiment_config(args.config)
    result = run_experiment(cfg, args.out)
    for pattern, accs in result["model"].items():
        mean = float(np.mean(accs))
        print(f"{pattern}: mean accuracy {mean:.4f} over {len(accs)} seeds")
    print(f"summary written to {args.out}/summary.csv")
    return 0


def cmd_audit_masks(args) -> int:
    masks = miss.load_masks(args.masks)
    report = miss.audit(masks).to_dict()
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_plot(args) -> int:
    summary = load_summary(args.summary)
    svg = render_summary_svg(summary)
    with open(args.out, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    return 0


def render_summary_svg(summary: dict) -> str:
    """Tiny hand-rolled bar chart (no plotting dependency, byte-stable)."""
    width, height, pad = 640, 360, 56
    patterns = list(summary)
    n = len(patterns)
    bar_w = (width - 2 * pad) / max(n, 1) * 0.6
    gap = (width - 2 * pad) / max(n, 1)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = height - pad - frac * (height - 2 * pad)
        lines.append(
            f'<text x="{pad - 8}" y="{y + 4:.1f}" font-size="12" text-anchor="end">{frac:.2f}</text>'
        )
        lines.append(
            f'<line x1="{pad - 4}" y1="{y:.1f}" x2="{pad}" y2="{y:.1f}" stroke="black"/>'
        )
    for i, pattern in enumerate(patterns):
        mean, std, _ = summary[pattern]
        x = pad + i * gap + (gap - bar_w) / 2
        h = mean * (height - 2 * pad)
        y = height - pad - h
        cx = x + bar_w / 2
        lines.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" fill="#4477aa"/>'
        )
        e0 = height - pad - (mean + std) * (height - 2 * pad)
        e1 = height - pad - max(mean - std, 0.0) * (height - 2 * pad)
        lines.append(
            f'<line x1="{cx:.1f}" y1="{e0:.1f}" x2="{cx:.1f}" y2="{e1:.1f}" stroke="black"/>'
        )
        lines.append(
            f'<text x="{cx:.1f}" y="{height - pad + 18}" font-size="12" '
            f'text-anchor="middle">{pattern}</text>'
        )
    lines.append(
        f'<text x="{width / 2:.1f}" y="{height - 12}" font-size="13" '
        'text-anchor="middle">test pattern</text>'
    )
    lines.append(
        f'<text x="16" y="{height / 2:.1f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {height / 2:.1f})">accuracy</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="falsevfl",
        description="Vertical federated learning under blockwise missingness.",
        epilog="FALSEVFL_THREADS caps worker processes for `grid` (default 1).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic Gaussian-mixture dataset CSV")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--party-dims", required=True, help="comma-separated block widths, e.g. 3,3,3,3")
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--separation", type=float, default=4.0,
                   help="pairwise class-mean distance in units of std")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("gen-masks", help="generate availability masks for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--party-dims", required=True)
    p.add_argument("--mechanism", required=True,
                   help="mcar0|mcar2|mcar5|mar1|mar2|mnar7|mnar9")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labeled", type=int, default=0, help="samples to mark labeled (u=0)")
    p.add_argument("--aligned-labeled", type=int, default=0,
                   help="labeled samples forced fully aligned")
    p.add_argument("--stats", help="normalization stats JSON to reuse (default: fit to data)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_masks)

    p = sub.add_parser("pretrain", help="stage 1: fit generative parameters, then freeze")
    p.add_argument("--data", required=True)
    p.add_argument("--party-dims", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--config", required=True, help="train config JSON")
    p.add_argument("--num-classes", type=int, default=0,
                   help="override when the data file has no labels")
    p.add_argument("--stats-out", help="also write normalization stats JSON here")
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="stage 2: fit the classifier on labeled samples")
    p.add_argument("--data", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--checkpoint", required=True, help="stage-1 checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="updated checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-sample class probabilities via SNIS")
    p.add_argument("--data", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--particles", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-term", action="store_true",
                   help="include the mask likelihood in the importance ratio (variant II)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy overall and per alignment class")
    p.add_argument("--data", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--particles", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-term", action="store_true")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="run a seeded experiment grid from a config JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("audit-masks", help="summarize a mask file")
    p.add_argument("--masks", required=True)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_audit_masks)

    p = sub.add_parser("plot", help="render a summary CSV as an SVG bar chart")
    p.add_argument("--summary", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FormatError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
