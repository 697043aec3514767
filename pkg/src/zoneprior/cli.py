"""Command-line entry point.

Subcommands: phantom, preprocess, train-ae, train-seg, predict,
evaluate, report, render. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import segnet, trainer, viz
from .metrics import DiceReport, comparison_table
from .phantom import PhantomSpec, generate_dataset
from .preprocess import preprocess_dataset
from .volgrid import load_case, load_manifest, read_volume, write_volume

BASELINE_LABEL = "3D-UNet"
CONSTRAINED_LABEL = "3D-UNet trained with encoder"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zoneprior",
        description="Two-zone segmentation with an autoencoder shape prior",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic dataset")
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=int, nargs=3, default=None,
                   help="override grid shape (nx ny nz)")

    p = sub.add_parser("preprocess", help="crop/rescale a dataset")
    p.add_argument("--manifest", "--data", dest="manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-ae", help="pretrain the shape autoencoder")
    p.add_argument("--data", required=True, help="preprocessed manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="RunConfig JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("train-seg", help="train the segmentation network")
    p.add_argument("--data", required=True, help="preprocessed manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="RunConfig JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--ae", default=None, help="encoder checkpoint base path")
    p.add_argument("--no-global-loss", action="store_true",
                   help="force the latent-loss weight to 0 (baseline)")
    p.add_argument("--schedule", choices=["constant", "linear"], default=None)

    p = sub.add_parser("predict", help="write predicted label volumes")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score a checkpoint, write a DICE report")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("report", help="comparison table from DICE reports")
    p.add_argument("--eval", action="append", required=True, dest="evals",
                   help="report JSON (repeatable; first=baseline, second=constrained)")
    p.add_argument("--label", action="append", default=None, dest="labels")
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="render slice overlays as PNG")
    p.add_argument("--image", required=True)
    p.add_argument("--labels", required=True, nargs="+",
                   help="one or more label volumes (gt first for triptychs)")
    p.add_argument("--slice", type=int, required=True)
    p.add_argument("--out", required=True)
    return parser


def _run_config(args, phase: str) -> trainer.RunConfig:
    cfg = trainer.RunConfig.load(args.config) if args.config else trainer.RunConfig()
    cfg.manifest_path = args.data
    cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        if phase == "ae":
            cfg.ae_epochs = args.epochs
        else:
            cfg.seg_epochs = args.epochs
    return cfg


def _dispatch(args) -> list[str]:
    if args.command == "phantom":
        spec = PhantomSpec(seed=args.seed)
        if args.shape is not None:
            spec = replace(spec, shape=tuple(args.shape))
        manifest = generate_dataset(spec, args.count, args.out)
        return [str(manifest)]

    if args.command == "preprocess":
        manifest = preprocess_dataset(args.manifest, args.out)
        return [str(manifest)]

    if args.command == "train-ae":
        result = trainer.train_autoencoder(_run_config(args, "ae"))
        return [result.checkpoint_path + ".json", result.csv_path]

    if args.command == "train-seg":
        cfg = _run_config(args, "seg")
        if args.ae is not None:
            cfg.encoder_checkpoint = args.ae
        if args.no_global_loss:
            cfg.loss = replace(cfg.loss, global_weight=0.0)
        if args.schedule is not None:
            cfg.loss = replace(cfg.loss, schedule=args.schedule)
        result = trainer.train_segmenter(cfg)
        return [result.checkpoint_path + ".json", result.csv_path]

    if args.command == "predict":
        model = trainer.load_segmenter(args.checkpoint)
        manifest = load_manifest(args.data)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for c in manifest.cases:
            image, _ = load_case(args.data, c)
            pred = segnet.predict_labels(model, image)
            path = out / f"{c.id}_pred.nii"
            write_volume(pred, path)
            written.append(str(path))
        return written

    if args.command == "evaluate":
        report = trainer.evaluate(args.checkpoint, args.data)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json() + "\n")
        return [args.out]

    if args.command == "report":
        default_labels = [BASELINE_LABEL, CONSTRAINED_LABEL]
        labels = args.labels or []
        rows = []
        for i, path in enumerate(args.evals):
            report = DiceReport.from_json(Path(path).read_text())
            label = labels[i] if i < len(labels) else (
                default_labels[i] if i < len(default_labels) else Path(path).stem)
            rows.append((label, report))
        Path(args.out).write_text(comparison_table(rows))
        return [args.out]

    if args.command == "render":
        image = read_volume(args.image)
        label_sets = [read_volume(p, as_labels=True) for p in args.labels]
        if len(label_sets) == 1:
            viz.render_overlay(image, label_sets[0], args.slice, args.out)
        else:
            viz.render_triptych(image, label_sets, args.slice, args.out)
        return [args.out]

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    threads = os.environ.get("ZONEPRIOR_THREADS")
    if threads:
        import torch

        torch.set_num_threads(int(threads))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        artifacts = _dispatch(args)
    except Exception as exc:  # runtime failure -> exit 1 with diagnostic
        print(f"zoneprior: error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.command}: wrote {len(artifacts)} artifact(s): "
          + ", ".join(artifacts[:4]) + ("..." if len(artifacts) > 4 else ""))
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
