"""Operator-facing command line: one binary, one subcommand per pipeline stage.

Every run echoes its fully resolved configuration into the output directory so
artifacts are reproducible from the echo alone. Config file values (flat YAML
key: value) are overridden by explicit CLI flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np
import yaml

from . import aggregate, dataset, errors, imaging, metrics, model, synthgen, trainer


def _echo_config(out_dir, command, resolved):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"run_config.{command}.yaml"), "w") as fh:
        yaml.safe_dump({"command": command, **resolved}, fh, sort_keys=True)


def _load_config_file(path):
    if not path:
        return {}
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError("config file must be a flat key: value mapping")
    return data


def _resolve(args, defaults):
    """defaults < config file < explicit CLI flags."""
    cfg_file = _load_config_file(getattr(args, "config", None))
    resolved = dict(defaults)
    for key in defaults:
        if key in cfg_file:
            resolved[key] = cfg_file[key]
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _tileset(manifest_path, split):
    man = dataset.DatasetManifest.load(manifest_path)
    ts = trainer.TileSet.from_manifest(man, split)
    return man, ts


def _predict_image_tiles(params, image, tiling=None):
    grid = imaging.tile_image(image, tiling or imaging.TilingSpec(tile_size=params.cfg.input_size))
    if not grid.tiles:
        raise errors.EmptyPrediction(f"image {image.id} is smaller than one tile")
    tiles = np.stack([b for _, _, b in grid.tiles])
    probs = trainer.predict_probs(params, tiles)
    return grid, aggregate.TilePredictions(image_id=image.id, probs=probs)


def _image_predictions(params, manifest, split):
    """Per-image TilePredictions + ground-truth labels for one split."""
    recs = manifest.for_split(split)
    by_image = {}
    for r in sorted(recs, key=lambda r: (r.image_id, r.row, r.col)):
        by_image.setdefault(r.image_id, []).append(r)
    preds, labels = [], []
    for image_id, rows in by_image.items():
        tiles = np.stack([imaging.load_image(r.path).pixels for r in rows])
        probs = trainer.predict_probs(params, tiles)
        preds.append(aggregate.TilePredictions(image_id=image_id, probs=probs))
        labels.append(1 if any(r.label == 1 for r in rows) else 0)
    return preds, labels


# -- subcommands -------------------------------------------------------------


def cmd_synth(args):
    resolved = _resolve(
        args,
        {
            "out": None,
            "n_corroded": 10,
            "n_intact": 10,
            "seed": 0,
            "width": 512,
            "height": 512,
            "tile_size": 256,
            "min_pixels": synthgen.DEFAULT_MIN_PIXELS,
        },
    )
    spec = synthgen.SurfaceSpec(width=resolved["width"], height=resolved["height"])
    synthgen.generate_dataset(
        spec,
        resolved["n_corroded"],
        resolved["n_intact"],
        seed=resolved["seed"],
        out_dir=resolved["out"],
        tiling=imaging.TilingSpec(tile_size=resolved["tile_size"]),
        min_pixels=resolved["min_pixels"],
    )
    _echo_config(resolved["out"], "synth", resolved)
    print(os.path.join(resolved["out"], "manifest.csv"))


def cmd_tile(args):
    resolved = _resolve(args, {"input": None, "out": None, "tile_size": 256, "stride": None})
    img = imaging.load_image(resolved["input"])
    spec = imaging.TilingSpec(tile_size=resolved["tile_size"], stride=resolved["stride"])
    grid = imaging.tile_image(img, spec)
    out = resolved["out"]
    os.makedirs(os.path.join(out, "tiles"), exist_ok=True)
    index = os.path.join(out, "tiles.csv")
    with open(index, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fh.tell() == 0:
            writer.writerow(["image_id", "row", "col", "path"])
        for r, c, block in grid.tiles:
            path = os.path.join(out, "tiles", imaging.tile_filename(img.id, r, c))
            imaging.save_image(block, path)
            writer.writerow([img.id, r, c, path])
    _echo_config(out, "tile", resolved)
    print(f"{len(grid.tiles)} tiles ({grid.rows}x{grid.cols}) -> {index}")


def cmd_split(args):
    resolved = _resolve(
        args,
        {
            "manifest": None,
            "out": None,
            "train_frac": 0.6,
            "val_frac": 0.2,
            "test_frac": 0.2,
            "seed": 0,
            "stratified": False,
        },
    )
    man = dataset.DatasetManifest.load(resolved["manifest"])
    split = dataset.split_grouped(
        man,
        (resolved["train_frac"], resolved["val_frac"], resolved["test_frac"]),
        seed=resolved["seed"],
        stratified=resolved["stratified"],
    )
    out = resolved["out"] or os.path.dirname(resolved["manifest"])
    path = os.path.join(out, "manifest.csv")
    os.makedirs(out, exist_ok=True)
    split.save(path)
    _echo_config(out, "split", resolved)
    for s in dataset.SPLITS:
        print(s, sum(1 for e in split.images if e.split == s))


def _train_config(resolved):
    aug = imaging.AugmentConfig(enabled=not resolved.get("no_augment", False))
    return trainer.TrainConfig(
        epochs=resolved["epochs"],
        batch_size=resolved["batch_size"],
        lr_min=resolved["lr_min"],
        lr_max=resolved["lr_max"],
        seed=resolved["seed"],
        augment=aug,
        augment_val=resolved.get("augment_val", False),
    )


def cmd_lrfind(args):
    resolved = _resolve(
        args,
        {
            "manifest": None,
            "out": None,
            "lr_lo": 1e-7,
            "lr_hi": 10.0,
            "steps": 100,
            "batch_size": 64,
            "seed": 0,
        },
    )
    _, ts = _tileset(resolved["manifest"], "train")
    params = model.init_model(model.ArchConfig(), resolved["seed"])
    mean, std = trainer.compute_standardization(ts.tiles)
    params.input_mean, params.input_std = mean, std
    rng = np.random.default_rng(resolved["seed"])
    batches = []
    for _ in range(resolved["steps"]):
        idx = rng.choice(len(ts), size=min(resolved["batch_size"], len(ts)), replace=False)
        batches.append(
            model.Batch(inputs=trainer.standardize(ts.tiles[idx], mean, std), labels=ts.labels[idx])
        )
    curve = trainer.lr_find(
        params, batches, resolved["lr_lo"], resolved["lr_hi"], resolved["steps"]
    )
    out = resolved["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "lrfind.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["learning_rate", "smoothed_loss"])
        for lr, lv in zip(curve.learning_rates, curve.smoothed_losses):
            writer.writerow([f"{lr:.10g}", f"{lv:.10g}"])
    _echo_config(out, "lrfind", {**resolved, "suggestion": curve.suggestion})
    print(f"suggested lr: {curve.suggestion:.3g}")


def cmd_train(args):
    resolved = _resolve(
        args,
        {
            "manifest": None,
            "out": None,
            "epochs": 50,
            "batch_size": 128,
            "lr_min": 1e-6,
            "lr_max": 5e-4,
            "seed": 0,
            "augment_val": False,
            "no_augment": False,
        },
    )
    man, train_ts = _tileset(resolved["manifest"], "train")
    val_ts = trainer.TileSet.from_manifest(man, "val")
    params = model.init_model(model.ArchConfig(), resolved["seed"])
    cfg = _train_config(resolved)
    out = resolved["out"]
    os.makedirs(out, exist_ok=True)
    params, history = trainer.train(params, train_ts, val_ts, cfg)
    model.save_checkpoint(params, os.path.join(out, "model.ckpt.npz"))
    history.save(os.path.join(out, "history.csv"))
    _echo_config(out, "train", resolved)
    print(os.path.join(out, "model.ckpt.npz"))


def cmd_tune(args):
    resolved = _resolve(
        args, {"model": None, "manifest": None, "out": None, "metric": "f1", "c_max": None}
    )
    params = model.load_checkpoint(resolved["model"])
    man = dataset.DatasetManifest.load(resolved["manifest"])
    preds, labels = _image_predictions(params, man, "val")
    c_range = None if resolved["c_max"] is None else (0, resolved["c_max"])
    c_hat, curve = aggregate.tune_threshold(preds, labels, metric=resolved["metric"], c_range=c_range)
    out = resolved["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "c_curve.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["c", resolved["metric"]])
        for c, v in curve:
            writer.writerow([c, f"{v:.10g}"])
    with open(os.path.join(out, "threshold.json"), "w") as fh:
        json.dump({"c_hat": c_hat, "metric": resolved["metric"]}, fh)
    _echo_config(out, "tune", resolved)
    print(f"c_hat = {c_hat}")


def _write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)


def image_report(params, image, c, alpha=0.35):
    grid, preds = _predict_image_tiles(params, image)
    pred = aggregate.classify_image(preds, aggregate.AggregationRule(c=c))
    return {
        "image_id": image.id,
        "n_tiles": pred.n_tiles,
        "rows": grid.rows,
        "cols": grid.cols,
        "corroded_count": pred.corroded_count,
        "c": c,
        "verdict": pred.verdict,
        "areal_percent": pred.areal_percent,
        "tile_verdicts": [int(v) for v in preds.verdicts],
        "tile_probs": [float(p) for p in preds.probs],
    }, grid, preds


def cmd_predict(args):
    resolved = _resolve(
        args, {"model": None, "image": None, "out": None, "c": 0, "heatmap": False, "alpha": 0.35}
    )
    params = model.load_checkpoint(resolved["model"])
    img = imaging.load_image(resolved["image"])
    report, grid, preds = image_report(params, img, resolved["c"], resolved["alpha"])
    out = resolved["out"]
    os.makedirs(out, exist_ok=True)
    _write_report(report, os.path.join(out, f"{img.id}.report.json"))
    if resolved["heatmap"]:
        palette = imaging.HeatmapPalette(blend_alpha=resolved["alpha"])
        hm = imaging.render_heatmap(img, grid, preds.verdicts, palette)
        imaging.save_image(hm, os.path.join(out, f"{img.id}.heatmap.png"))
    _echo_config(out, "predict", resolved)
    print(json.dumps({k: report[k] for k in ("image_id", "corroded_count", "verdict", "areal_percent")}))


def cmd_evaluate(args):
    resolved = _resolve(
        args, {"model": None, "manifest": None, "out": None, "c": 0, "split": "test"}
    )
    params = model.load_checkpoint(resolved["model"])
    man = dataset.DatasetManifest.load(resolved["manifest"])
    split = resolved["split"]
    preds, labels = _image_predictions(params, man, split)
    rule = aggregate.AggregationRule(c=resolved["c"])
    image_verdicts = [aggregate.classify_image(p, rule).verdict for p in preds]
    image_cc = metrics.confusion(image_verdicts, labels)
    image_rm = metrics.rates(image_cc)

    tile_probs = np.concatenate([p.probs for p in preds])
    tile_verdicts = np.concatenate([p.verdicts for p in preds])
    recs = man.for_split(split)
    by_image = {}
    for r in sorted(recs, key=lambda r: (r.image_id, r.row, r.col)):
        by_image.setdefault(r.image_id, []).append(r.label)
    tile_labels = np.concatenate([np.array(v) for _, v in sorted(by_image.items())])
    tile_cc = metrics.confusion(tile_verdicts, tile_labels)
    tile_rm = metrics.rates(tile_cc)

    out = resolved["out"]
    os.makedirs(out, exist_ok=True)
    report = {
        "c": resolved["c"],
        "split": split,
        "image": {"tn": image_cc.tn, "fp": image_cc.fp, "fn": image_cc.fn, "tp": image_cc.tp,
                  "tpr": image_rm.tpr, "fpr": image_rm.fpr, "ppv": image_rm.ppv, "f1": image_rm.f1},
        "tile": {"tn": tile_cc.tn, "fp": tile_cc.fp, "fn": tile_cc.fn, "tp": tile_cc.tp,
                 "tpr": tile_rm.tpr, "fpr": tile_rm.fpr, "ppv": tile_rm.ppv, "f1": tile_rm.f1},
    }
    try:
        roc_curve = metrics.roc(tile_probs, tile_labels)
        report["tile"]["auc"] = roc_curve.auc
        metrics.save_roc_csv(roc_curve, os.path.join(out, "roc_tiles.csv"))
    except errors.SingleClass:
        report["tile"]["auc"] = None
    _write_report(report, os.path.join(out, "metrics.json"))
    with open(os.path.join(out, "metrics.txt"), "w") as fh:
        fh.write(metrics.report_text(tile_cc, tile_rm, title=f"tiles ({split})"))
        fh.write("\n")
        fh.write(metrics.report_text(image_cc, image_rm, title=f"whole images ({split})"))
    _echo_config(out, "evaluate", resolved)
    print(json.dumps(report["image"]))


def cmd_heatmap(args):
    resolved = _resolve(args, {"model": None, "image": None, "out": None, "alpha": 0.35})
    params = model.load_checkpoint(resolved["model"])
    img = imaging.load_image(resolved["image"])
    grid, preds = _predict_image_tiles(params, img)
    palette = imaging.HeatmapPalette(blend_alpha=resolved["alpha"])
    hm = imaging.render_heatmap(img, grid, preds.verdicts, palette)
    out = resolved["out"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"{img.id}.heatmap.png")
    imaging.save_image(hm, path)
    _echo_config(out, "heatmap", resolved)
    print(path)


def cmd_serve(args):
    resolved = _resolve(
        args, {"model": None, "store": None, "host": "127.0.0.1", "port": 8000, "c": 0}
    )
    import uvicorn

    from .service import SessionState, create_app

    state = SessionState(store_dir=resolved["store"], default_c=resolved["c"])
    if resolved["model"]:
        state.load_model(resolved["model"])
    app = create_app(state)
    uvicorn.run(app, host=resolved["host"], port=resolved["port"], log_level="warning")


def build_parser():
    parser = argparse.ArgumentParser(prog="corrodet", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--config")
        p.add_argument("--workers", type=int, help="reserved; stages run deterministically")

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    common(p)
    p.add_argument("--n-corroded", dest="n_corroded", type=int)
    p.add_argument("--n-intact", dest="n_intact", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--tile-size", dest="tile_size", type=int)
    p.add_argument("--min-pixels", dest="min_pixels", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tile", help="crop an image into tiles")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--tile-size", dest="tile_size", type=int)
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("split", help="grouped train/val/test split")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.add_argument("--val-frac", dest="val_frac", type=float)
    p.add_argument("--test-frac", dest="test_frac", type=float)
    p.add_argument("--stratified", action="store_true", default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("lrfind", help="learning-rate range finder")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--lr-lo", dest="lr_lo", type=float)
    p.add_argument("--lr-hi", dest="lr_hi", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.set_defaults(func=cmd_lrfind)

    p = sub.add_parser("train", help="train the tile classifier")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr-min", dest="lr_min", type=float)
    p.add_argument("--lr-max", dest="lr_max", type=float)
    p.add_argument("--augment-val", dest="augment_val", action="store_true", default=None)
    p.add_argument("--no-augment", dest="no_augment", action="store_true", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="tune the count threshold c on the validation split")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--metric", choices=["f1", "accuracy"])
    p.add_argument("--c-max", dest="c_max", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("predict", help="classify a whole image")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--c", type=int)
    p.add_argument("--heatmap", action="store_true", default=None)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a split at a fixed threshold")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--c", type=int)
    p.add_argument("--split", choices=list(dataset.SPLITS))
    p.add_argument("--metric", choices=["f1", "accuracy"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", help="render a verdict overlay for an image")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("serve", help="run the operator review service")
    common(p)
    p.add_argument("--model")
    p.add_argument("--store")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--c", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        args.func(args)
    except errors.CorrodetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
