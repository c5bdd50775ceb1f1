"""Command-line entry point: ``rebalfer <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .formats import FormatError, load_pixels, write_rbim
from .imbalance import (
    DataError,
    DatasetManifest,
    ImageSet,
    ImbalanceSpec,
    SyntheticSpec,
    generate_synthetic,
    ingest_manifest,
    realized_imbalance_factor,
    subsample_exponential,
)
from .harness.ablation import (DESK_IMBALANCE, DESK_SYNTHETIC, SWEEP_VALUES, desk_config, run_ablation,
                               run_sweep, synthetic_source)
from .harness.config import ConfigError, TrainConfig, load_config
from .harness.metrics import MetricsReport
from .harness.persist import load_trained, save_trained
from .harness.report import dump_attention, emit_plots, emit_report, emit_sweep_plot, report_document, write_json
from .harness.train import NumericalDivergence, evaluate, train

log = logging.getLogger("rebalfer")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
CLASSES_FILE = "classes.txt"


# --- data helpers ---------------------------------------------------------

def _read_classes(manifest_path: Path, explicit: str | None) -> list[str] | None:
    path = Path(explicit) if explicit else manifest_path.parent / CLASSES_FILE
    if not path.exists():
        if explicit:
            raise DataError(f"class list {path} not found")
        return None
    names = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(names) < 2:
        raise DataError(f"{path}: need at least two class names")
    return names


def _load_manifest(path: str, classes: str | None, split: str) -> DatasetManifest:
    p = Path(path)
    return ingest_manifest(p, _read_classes(p, classes), split=split)


def _load_set(path: str, classes: str | None, split: str, image_size: int | None = None) -> ImageSet:
    manifest = _load_manifest(path, classes, split)
    try:
        pixels = load_pixels(manifest, Path(path).parent, image_size=image_size)
    except (OSError, FormatError) as exc:
        raise DataError(f"cannot load pixels for {path}: {exc}") from exc
    return ImageSet(manifest, pixels)


def _write_classes(out: Path, names) -> None:
    (out / CLASSES_FILE).write_text("\n".join(names) + "\n", encoding="utf-8")


def _resolved_config(args) -> TrainConfig:
    overrides = dict(kv.split("=", 1) for kv in (args.set or []) if "=" in kv)
    bad = [kv for kv in (args.set or []) if "=" not in kv]
    if bad:
        raise ConfigError(f"--set expects key=value, got {bad[0]!r}")
    for key in ("seed", "epochs", "lam", "alpha", "transform"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[{"epochs": "max_epochs"}.get(key, key)] = v
    return load_config(args.config, overrides, base=desk_config() if getattr(args, "desk", False) else None)


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _save_config(cfg: TrainConfig, out: Path) -> None:
    write_json(cfg.to_dict(), out / "config.json")


# --- commands -------------------------------------------------------------

def cmd_gen_synth(args) -> None:
    spec = SyntheticSpec(num_classes=args.classes, image_size=args.image_size,
                         per_class_base=args.per_class, test_per_class=args.test_per_class,
                         noise_std=args.noise, seed=args.seed)
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(args.out)
    for data in generate_synthetic(spec):
        split = data.manifest.split
        store = f"synth-{split}.rbim"
        write_rbim(out / store, data.images)
        records = tuple((f"{store}#{i:06d}", y) for i, (_, y) in enumerate(data.manifest.records))
        DatasetManifest(records, data.manifest.class_names, split).to_csv(out / f"{split}.csv")
    _write_classes(out, data.manifest.class_names)
    write_json({k: v for k, v in vars(args).items() if k != "func"}, out / "synth.json")
    print(f"wrote {out}/train.csv and {out}/test.csv")


def cmd_make_imbalanced(args) -> None:
    manifest = _load_manifest(args.manifest, args.class_list, "train")
    try:
        spec = ImbalanceSpec.for_counts(manifest.counts(), args.imbalance_factor, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sub = subsample_exponential(manifest, spec)
    out = Path(args.out)
    if out.resolve().parent != Path(args.manifest).resolve().parent:
        raise ConfigError("the subsampled manifest must live beside the source so pixel paths resolve")
    sub.to_csv(out)
    print(f"kept {sub.counts()} (imbalance factor {realized_imbalance_factor(sub):g})")


def cmd_train(args) -> None:
    cfg = _resolved_config(args)
    out = _out_dir(args.out)
    _save_config(cfg, out)
    train_set = _load_set(args.train, args.class_list, "train", cfg.input_size)
    eval_set = _load_set(args.eval, args.class_list, "test", cfg.input_size) if args.eval else None
    result = train(cfg, train_set, eval_set)
    save_trained(result.trained, out / "model.rbck")
    write_json(report_document(result), out / "report.json")
    if result.reports:
        emit_report(result.reports, out / "report.csv")
        emit_plots(result.reports, out)
        print(f"final mean accuracy {result.final.mean_accuracy:.4f}, "
              f"overall {result.final.overall_accuracy:.4f}")


def cmd_eval(args) -> None:
    trained = load_trained(args.checkpoint)
    data = _load_set(args.manifest, args.class_list, args.split, trained.config.input_size)
    report = evaluate(trained, data)
    doc = report.to_dict()
    if args.out:
        write_json(doc, args.out)
    print(json.dumps({"overall": doc["overall"], "mean": doc["mean"]}))


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None


def _synthetic_source(args, cfg: TrainConfig):
    """Per-seed synthetic data, or fixed manifests when given."""
    if args.train:
        pair = (_load_set(args.train, args.class_list, "train", cfg.input_size),
                _load_set(args.eval, args.class_list, "test", cfg.input_size))
        return lambda seed: pair
    return synthetic_source(args.imbalance_factor, per_class_base=args.per_class,
                            test_per_class=args.test_per_class)


def _add_source_args(p) -> None:
    p.add_argument("--train", help="training manifest (default: synthetic data regenerated per seed)")
    p.add_argument("--eval", help="evaluation manifest (required with --train)")
    p.add_argument("--per-class", type=int, default=DESK_SYNTHETIC["per_class_base"])
    p.add_argument("--test-per-class", type=int, default=DESK_SYNTHETIC["test_per_class"])
    p.add_argument("--if", dest="imbalance_factor", type=float, default=DESK_IMBALANCE)
    p.add_argument("--desk", action="store_true",
                   help="start from the small-CPU training preset instead of the library defaults")


def cmd_ablate(args) -> None:
    cfg = _resolved_config(args)
    if bool(args.train) != bool(args.eval):
        raise ConfigError("--train and --eval go together")
    out = _out_dir(args.out)
    _save_config(cfg, out)
    grid = run_ablation(cfg, _seeds(args.seeds), _synthetic_source(args, cfg))
    summary = grid.summary()
    write_json(summary, out / "ablation.json")
    arms = list(grid.reports)
    means = [_mean_report(grid.reports[a]) for a in arms]
    emit_report(means, out / "ablation.csv", labels=arms)
    print(json.dumps({"status": summary["status"],
                      **{a: round(summary["arms"][a]["mean_accuracy"], 4) for a in arms}}))


def _mean_report(reports: list[MetricsReport]) -> MetricsReport:
    """Seed-averaged report for table output (confusions summed)."""
    conf = np.sum([r.confusion for r in reports], axis=0)
    r0 = reports[0]
    avg = MetricsReport.from_confusion(conf, epoch=r0.epoch, split=r0.split, class_names=r0.class_names)
    per_class = np.mean([[np.nan if a is None else a for a in r.per_class_accuracy] for r in reports], axis=0)
    avg.per_class_accuracy = [None if np.isnan(a) else float(a) for a in per_class]
    avg.overall_accuracy = float(np.mean([r.overall_accuracy for r in reports]))
    avg.mean_accuracy = float(np.mean([r.mean_accuracy for r in reports]))
    return avg


def cmd_sweep(args) -> None:
    cfg = _resolved_config(args)
    if bool(args.train) != bool(args.eval):
        raise ConfigError("--train and --eval go together")
    values = [float(v) for v in args.values.split(",")] if args.values else list(SWEEP_VALUES[args.param])
    out = _out_dir(args.out)
    _save_config(cfg, out)
    results = run_sweep(cfg, args.param, values, _synthetic_source(args, cfg))
    finals = [r.final for r in results]
    emit_report(finals, out / f"sweep_{args.param}.csv", labels=[f"{args.param}={v:g}" for v in values])
    emit_sweep_plot(args.param, values, finals, out)
    write_json({"param": args.param, "values": values, "reports": [r.to_dict() for r in finals]},
               out / f"sweep_{args.param}.json")
    for v, r in zip(values, finals):
        print(f"{args.param}={v:g} mean {r.mean_accuracy:.4f}")


def cmd_dump_attention(args) -> None:
    trained = load_trained(args.checkpoint)
    data = _load_set(args.manifest, args.class_list, "test", trained.config.input_size)
    if args.limit:
        data = data.subset(DatasetManifest(data.manifest.records[:args.limit], data.manifest.class_names,
                                           data.manifest.split))
    maps = dump_attention(trained, data, args.out, view=args.view, rebalanced=args.rebalanced)
    print(f"wrote {args.out} {tuple(maps.shape)}")


def cmd_report(args) -> None:
    try:
        doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
        reports = [MetricsReport.from_dict(e) for e in doc["epochs"]]
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read report {args.report}: {exc}") from exc
    out = _out_dir(args.out)
    emit_report(reports, out / "report.csv")
    emit_plots(reports, out)
    print(f"wrote {out}/report.csv and {out}/accuracy_vs_epoch.svg")


# --- parser ---------------------------------------------------------------

def _add_config_args(p) -> None:
    p.add_argument("--config", help="key = value (or JSON) configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--transform", choices=("flip", "scaling", "intensity"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rebalfer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate the synthetic expression-like dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--per-class", type=int, default=700)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.6)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("make-imbalanced", help="exponentially subsample a training manifest")
    p.add_argument("manifest")
    p.add_argument("--if", dest="imbalance_factor", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--class-list")
    p.set_defaults(func=cmd_make_imbalanced)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--train", required=True)
    p.add_argument("--eval")
    p.add_argument("--out", required=True)
    p.add_argument("--class-list")
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--split", default="test")
    p.add_argument("--out")
    p.add_argument("--class-list")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="four-arm module ablation over seeds")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--out", required=True)
    p.add_argument("--class-list")
    _add_source_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep the consistency weight or the smoothing parameter")
    p.add_argument("--param", choices=tuple(SWEEP_VALUES), required=True)
    p.add_argument("--values", help="comma-separated values (default: the standard grid)")
    p.add_argument("--out", required=True)
    p.add_argument("--class-list")
    _add_source_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-attention", help="write class activation maps as RBAM1")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--view", choices=("original", "flipped"), default="original")
    p.add_argument("--rebalanced", action="store_true")
    p.add_argument("--limit", type=int)
    p.add_argument("--class-list")
    p.set_defaults(func=cmd_dump_attention)

    p = sub.add_parser("report", help="re-emit CSV and plots from a report JSON")
    p.add_argument("report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalDivergence as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
