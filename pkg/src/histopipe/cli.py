"""Command-line entry points: prepare, train, evaluate, report, synth, describe, sweep."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .presets import get_preset, preset_names


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("pass either --config or --preset, not both")
    if args.config:
        config = load_config(args.config)
        raw = dict(config.raw)
        source = str(args.config)
    elif args.preset:
        raw = get_preset(args.preset)
        source = f"preset:{args.preset}"
        if args.data_root is None:
            raise ConfigError(f"preset {args.preset!r} needs --data-root")
        raw["dataset"]["root"] = str(args.data_root)
        if args.run_dir is None:
            raise ConfigError(f"preset {args.preset!r} needs --run-dir")
    else:
        raise ConfigError("one of --config or --preset is required")
    if args.data_root is not None:
        raw["dataset"]["root"] = str(args.data_root)
    if args.run_dir is not None:
        raw.setdefault("output", {})
        raw["output"] = {**raw["output"], "run_dir": str(args.run_dir)}
    if args.seed is not None:
        raw.setdefault("train", {})
        raw["train"] = {**raw["train"], "seed": int(args.seed)}
    return parse_config(raw, source)


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="experiment config YAML")
    parser.add_argument("--preset", choices=preset_names(), help="named built-in experiment")
    parser.add_argument("--data-root", type=Path, help="dataset root (overrides config)")
    parser.add_argument("--run-dir", type=Path, help="run output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="training seed override")


def cmd_prepare(args: argparse.Namespace) -> int:
    from .manifest import write_manifest_csv
    from .runner import prepare_manifest, resolve_run_dir

    config = _config_from_args(args)
    manifest = prepare_manifest(config)
    out_dir = resolve_run_dir(config.run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest_csv(manifest, out_dir / "manifest.csv")
    validation = manifest.report.render()
    if validation:
        (out_dir / "validation_report.txt").write_text(validation + "\n", encoding="utf-8")
        print(f"validation report: {out_dir / 'validation_report.txt'}", file=sys.stderr)
    counts = ", ".join(f"{c.value}={n}" for c, n in manifest.class_counts.items())
    print(f"manifest: {len(manifest)} records ({counts}) -> {out_dir / 'manifest.csv'}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from .runner import run_experiment

    config = _config_from_args(args)
    report = run_experiment(config, resume=args.resume, force=args.force,
                            dump_augmented_n=args.dump_augmented,
                            dump_tiles_n=args.dump_tiles)
    row = report["row"]
    print(
        f"completed: {row['model']} on {report['split_evaluated']} -> "
        f"accuracy {row['accuracy']:.3f}, weighted F1 {row['weighted_f1']:.3f}, "
        f"sensitivity {row['sensitivity']:.3f} (run dir {report['run_dir']})"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .runner import build_pipeline, prepare_manifest
    from .train import evaluate_split, load_checkpoint

    config = _config_from_args(args)
    model, metadata = load_checkpoint(args.checkpoint)
    manifest = prepare_manifest(config)
    pipeline = build_pipeline(config)
    cm, metrics = evaluate_split(model, manifest, args.split, pipeline,
                                 config.model.num_classes, config.train.batch_size)
    print(json.dumps({"split": args.split, "checkpoint": str(args.checkpoint),
                      "metrics": metrics}, indent=2))
    if args.out is not None:
        from .evaluate import confusion_heatmap, confusion_to_csv

        confusion_to_csv(cm, Path(args.out) / "confusion_matrix.csv")
        confusion_heatmap(cm, Path(args.out) / "confusion_matrix.png")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .evaluate import format_comparison, write_comparison_csv
    from .runner import is_completed, load_report

    rows = []
    for run_dir in args.runs:
        run_dir = Path(run_dir)
        if not is_completed(run_dir):
            print(f"skipping {run_dir}: no completed report", file=sys.stderr)
            continue
        rows.append(load_report(run_dir)["row"])
    if not rows:
        print("no completed runs to report", file=sys.stderr)
        return 1
    print(format_comparison(rows))
    if args.out is not None:
        write_comparison_csv(rows, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    from .synthetic import generate_synthetic

    out = generate_synthetic(args.out, args.classes, args.per_class,
                             (args.dims[0], args.dims[1]), args.seed)
    print(f"wrote {args.classes * args.per_class} images under {out}")
    return 0


def cmd_describe(args: argparse.Namespace) -> int:
    from .models import describe_model

    config = _config_from_args(args)
    print(describe_model(config.model))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    from .runner import run_experiment

    failures = 0
    for config_path in args.configs:
        try:
            config = load_config(config_path)
            report = run_experiment(config, resume=args.resume, force=args.force)
            row = report["row"]
            print(f"{config_path}: weighted F1 {row['weighted_f1']:.3f}")
        except Exception as exc:
            failures += 1
            print(f"{config_path}: FAILED ({exc})", file=sys.stderr)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histopipe",
        description="Breast histology classification pipeline (BRACS-style datasets).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build and validate the dataset manifest")
    _add_config_args(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run a full experiment from a config or preset")
    _add_config_args(p)
    p.add_argument("--resume", action="store_true", help="reuse a completed run if present")
    p.add_argument("--force", action="store_true", help="retrain even if the run completed")
    p.add_argument("--dump-augmented", type=int, default=0, metavar="N",
                   help="write N augmented samples as PNGs for audit")
    p.add_argument("--dump-tiles", type=int, default=0, metavar="N",
                   help="write tiles + mosaic PNGs for the first N samples (tiling mode)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    _add_config_args(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", type=Path, help="directory for confusion-matrix artifacts")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate completed runs into a comparison table")
    p.add_argument("runs", nargs="+", type=Path, help="run directories")
    p.add_argument("--out", type=Path, help="CSV output path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic desk-scale dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--dims", type=int, nargs=2, default=(128, 128), metavar=("H", "W"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("describe", help="print model parameter counts and stage shapes")
    _add_config_args(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("sweep", help="run several experiment configs sequentially")
    p.add_argument("configs", nargs="+", type=Path)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
