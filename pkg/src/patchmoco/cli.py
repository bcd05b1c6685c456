"""Command-line entry points.

Stages are exposed as subcommands (dataset, augment-preview, pretrain,
probe, predict, evaluate, silhouette, export-features) plus `run-all`,
which drives the desk-scale pipeline end to end: synthetic data ->
pretraining -> source probe -> cross-domain prediction -> classification
and cluster-separation reports, all under one output directory with the
resolved configuration echoed next to the artifacts.
"""

import argparse
import csv
import sys
import traceback
from pathlib import Path

import numpy as np
from PIL import Image

from . import augment, data, metrics, probe
from .config import (
    PRESETS,
    config_to_text,
    desk_scale,
    load_config,
    named_seed,
    save_config,
)
from .pretrain import init_state, run_pretraining, save_train_state
from .probe import FeatureExtractor, extract_features, train_probe


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def _resolve_config(args):
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = PRESETS[args.preset](seed=args.seed)
    if getattr(args, "seed", None) is not None and args.config:
        cfg.seed = args.seed
    return cfg


# ---------------------------------------------------------------------------
# individual stages
# ---------------------------------------------------------------------------

def cmd_dataset(args) -> int:
    if args.dataset_command == "synthetic":
        out = Path(args.out)
        source, target = data.generate_synthetic_two_domain(
            seed=args.seed, n_per_class=args.per_class,
            n_classes=args.classes, out_dir=out / "tiles",
            tile_size=args.size)
        data.save_manifest(source, out / "source.tsv")
        data.save_manifest(target, out / "target.tsv")
        print(f"wrote {len(source)} source and {len(target)} target tiles under {out}")
        return 0
    class_map = {
        "k19": data.k19_to_unified,
        "k16": data.k16_to_unified,
    }.get(args.class_map)
    if class_map is not None:
        cmap = class_map()
    else:
        root = Path(args.root)
        cmap = data.identity_class_map(
            sorted(p.name for p in root.iterdir() if p.is_dir()))
    manifest = data.build_manifest(args.root, cmap, args.domain)
    data.save_manifest(manifest, args.out)
    for warning in manifest.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote manifest with {len(manifest)} entries to {args.out}")
    return 0


def _to_uint8(image):
    return (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def cmd_augment_preview(args) -> int:
    cfg = _resolve_config(args)
    image = data.load_image(args.image)
    quad = augment.make_views(image, args.seed, cfg.infomin, cfg.shuffle)

    tile = 192
    panels = [image, quad.v1, quad.v2, quad.v3, quad.v4]
    gap = 4
    canvas = np.ones((tile, 5 * tile + 4 * gap, 3))
    for i, panel in enumerate(panels):
        canvas[:, i * (tile + gap):i * (tile + gap) + tile] = \
            augment.resize_bilinear(panel, tile, tile)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(canvas)).save(out)

    lines = []
    for name, record in zip(("v3", "v4"), quad.shuffle_records):
        lines.append(f"{name}.crop_box = {record.crop_box}")
        lines.append(f"{name}.flip = {record.flip}")
        lines.append(f"{name}.cell_crops = {record.cell_crops}")
        lines.append(f"{name}.permutation = {record.permutation}")
    record_text = "\n".join(lines) + "\n"
    out.with_suffix(".records.txt").write_text(record_text)
    print(record_text, end="")
    print(f"wrote preview grid to {out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _resolve_config(args)
    manifest = data.load_manifest(args.data)
    path = run_pretraining(cfg, manifest, args.out, resume=args.resume)
    print(f"final checkpoint: {path}")
    return 0


def cmd_probe(args) -> int:
    extractor = FeatureExtractor.from_checkpoint(args.checkpoint)
    cfg = extractor.config
    manifest = data.load_manifest(args.train)
    feats = extract_features(None, manifest, extractor=extractor)
    n_classes = manifest.n_classes
    head = train_probe(feats.features, feats.labels, cfg.probe,
                       n_classes=n_classes, seed=cfg.seed)
    probe.save_head(head, extractor, args.out)
    if args.val:
        val = data.load_manifest(args.val)
        rows, _, _ = probe.predict_manifest(head, extractor, val)
        if rows:
            correct = sum(1 for _, true, pred in rows if true == pred)
            print(f"validation accuracy: {correct / len(rows):.4f}")
    print(f"wrote probe head to {args.out}")
    return 0


def cmd_predict(args) -> int:
    head, extractor = probe.load_head(args.head)
    manifest = data.load_manifest(args.data)
    rows, _, feats = probe.predict_manifest(head, extractor, manifest)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "true_label", "pred_label"])
        writer.writerows(rows)
    for path in feats.missing:
        print(f"warning: missing file skipped: {path}", file=sys.stderr)
    print(f"wrote {len(rows)} predictions to {out}")
    return 0


def _read_predictions(path):
    true, pred = [], []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            true.append(int(row[1]))
            pred.append(int(row[2]))
    return np.asarray(true), np.asarray(pred)


def cmd_evaluate(args) -> int:
    true, pred = _read_predictions(args.pred)
    n_classes = args.classes or int(max(true.max(), pred.max())) + 1
    report = metrics.classification_report(true, pred, n_classes)
    text = metrics.report_to_text(report)
    Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_silhouette(args) -> int:
    features, labels, domains = metrics.load_features(args.features)
    report = metrics.cluster_separation_report(
        features, labels, domains, pooled_all=args.pooled_all)
    text = metrics.silhouette_report_to_text(report)
    Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_export_features(args) -> int:
    manifest = data.load_manifest(args.data)
    feats = extract_features(args.checkpoint, manifest)
    metrics.export_features(feats.features, feats.labels, feats.domains, args.out)
    print(f"wrote {len(feats)} feature rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# end-to-end pipeline
# ---------------------------------------------------------------------------

def _probe_and_evaluate(extractor, train_manifest, eval_manifest, probe_cfg,
                        n_classes, seed):
    feats = extract_features(None, train_manifest, extractor=extractor)
    head = train_probe(feats.features, feats.labels, probe_cfg,
                       n_classes=n_classes, seed=seed)
    rows, _, eval_feats = probe.predict_manifest(head, extractor, eval_manifest)
    true = np.array([r[1] for r in rows])
    pred = np.array([r[2] for r in rows])
    report = metrics.classification_report(true, pred, n_classes)
    return head, rows, report, eval_feats


def run_all(config, out_dir, with_baseline=True):
    """Synthetic data -> pretrain -> probe -> cross-domain evaluation.

    Returns a summary dict; every artifact lands under out_dir.  Any stage
    failure raises StageError naming the stage (partial artifacts persist).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.txt")
    summary = {}

    stage = "dataset"
    try:
        source, target = data.generate_synthetic_two_domain(
            seed=named_seed(config.seed, "data"),
            n_per_class=config.data.n_per_class,
            n_classes=config.data.n_classes,
            out_dir=out / "tiles", tile_size=config.data.tile_size)
        data.save_manifest(source, out / "source.tsv")
        data.save_manifest(target, out / "target.tsv")
        train_manifest, val_manifest = data.split_manifest(
            source, config.data.val_fraction)
        data.save_manifest(train_manifest, out / "source_train.tsv")
        data.save_manifest(val_manifest, out / "source_val.tsv")

        stage = "pretrain"
        checkpoint = run_pretraining(config, train_manifest, out / "pretrain")
        extractor = FeatureExtractor.from_checkpoint(checkpoint)

        stage = "probe"
        n_classes = config.data.n_classes
        head, target_rows, target_report, target_feats = _probe_and_evaluate(
            extractor, train_manifest, target, config.probe, n_classes, config.seed)
        probe.save_head(head, extractor, out / "probe.ckpt")
        # tiny corpora can hash-split to an empty val set; fall back to train
        val_eval = val_manifest if len(val_manifest) else train_manifest
        _, _, val_report, _ = _probe_and_evaluate(
            extractor, train_manifest, val_eval, config.probe,
            n_classes, config.seed)

        stage = "predict"
        with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "true_label", "pred_label"])
            writer.writerows(target_rows)

        stage = "evaluate"
        (out / "target_report.txt").write_text(
            metrics.report_to_text(target_report))
        summary["target_acc"] = target_report.acc
        summary["target_macro_f1"] = target_report.macro_f1
        summary["source_val_acc"] = val_report.acc

        stage = "silhouette"
        source_feats = extract_features(None, source, extractor=extractor)
        all_features = np.concatenate([source_feats.features,
                                       target_feats.features])
        all_labels = np.concatenate([source_feats.labels, target_feats.labels])
        all_domains = np.concatenate([source_feats.domains, target_feats.domains])
        metrics.export_features(all_features, all_labels, all_domains,
                                out / "features.csv")
        sil = metrics.cluster_separation_report(all_features, all_labels,
                                                all_domains)
        (out / "silhouette_report.txt").write_text(
            metrics.silhouette_report_to_text(sil))
        summary["silhouette_class_target"] = sil.class_level["target"]
        summary["silhouette_class_all"] = sil.class_level["all"]
        summary["silhouette_domain_all"] = sil.domain_level_all

        if with_baseline:
            stage = "baseline"
            baseline_state = init_state(config)
            save_train_state(baseline_state, out / "baseline_init.ckpt")
            baseline_extractor = FeatureExtractor.from_checkpoint(
                out / "baseline_init.ckpt")
            _, _, baseline_report, _ = _probe_and_evaluate(
                baseline_extractor, train_manifest, target, config.probe,
                n_classes, config.seed)
            (out / "baseline_report.txt").write_text(
                metrics.report_to_text(baseline_report))
            summary["baseline_target_acc"] = baseline_report.acc

        stage = "summary"
        lines = [f"{key} = {value:.6f}" for key, value in summary.items()]
        (out / "summary.txt").write_text("\n".join(lines) + "\n")
    except StageError:
        raise
    except Exception as err:
        raise StageError(stage, err) from err
    return summary


def cmd_run_all(args) -> int:
    cfg = _resolve_config(args)
    summary = run_all(cfg, args.out, with_baseline=not args.no_baseline)
    for key, value in summary.items():
        print(f"{key} = {value:.6f}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_config_args(parser, default_preset="desk"):
    parser.add_argument("--config", help="keyed text config file")
    parser.add_argument("--preset", choices=sorted(PRESETS),
                        default=default_preset,
                        help="built-in preset used when no config file is given")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides the config file)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchmoco",
        description="Momentum-contrast pretraining with patch-shuffled views")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="build manifests or synthetic corpora")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    syn = dsub.add_parser("synthetic", help="render the two-domain synthetic corpus")
    syn.add_argument("--out", required=True)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--classes", type=int, default=4)
    syn.add_argument("--per-class", type=int, default=64)
    syn.add_argument("--size", type=int, default=96)
    man = dsub.add_parser("manifest", help="index a folder-of-tiles tree")
    man.add_argument("--root", required=True)
    man.add_argument("--class-map", choices=("k19", "k16", "identity"),
                     default="identity")
    man.add_argument("--domain", type=int, default=0)
    man.add_argument("--out", required=True)

    p = sub.add_parser("augment-preview",
                       help="render (original, v1, v2, v3, v4) plus shuffle records")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(seed=0)

    p = sub.add_parser("pretrain", help="run self-supervised pretraining")
    p.add_argument("--data", required=True, help="training manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    _add_config_args(p)

    p = sub.add_parser("probe", help="train the linear probe on frozen features")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train", required=True, help="labeled training manifest")
    p.add_argument("--out", required=True, help="probe head file")
    p.add_argument("--val", default=None, help="optional validation manifest")

    p = sub.add_parser("predict", help="predict labels for a manifest")
    p.add_argument("--head", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="CSV of path,true_label,pred_label")

    p = sub.add_parser("evaluate", help="score a prediction CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=None)

    p = sub.add_parser("silhouette", help="cluster-separation report from features")
    p.add_argument("--features", required=True, help="exported feature CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--pooled-all", action="store_true",
                   help="pool per-point scores for the domain-level aggregate")

    p = sub.add_parser("export-features", help="embed a manifest and write CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run-all", help="desk-scale end-to-end pipeline")
    p.add_argument("--out", required=True)
    p.add_argument("--no-baseline", action="store_true",
                   help="skip the random-encoder baseline probe")
    _add_config_args(p)

    return parser


_COMMANDS = {
    "dataset": cmd_dataset,
    "augment-preview": cmd_augment_preview,
    "pretrain": cmd_pretrain,
    "probe": cmd_probe,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "silhouette": cmd_silhouette,
    "export-features": cmd_export_features,
    "run-all": cmd_run_all,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and hasattr(args, "preset"):
        args.seed = 0
    try:
        return _COMMANDS[args.command](args)
    except StageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (KeyError, ValueError, FileNotFoundError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
