"""Command-line entry point.

Every subcommand reads its inputs from flags or a ``key = value`` config
file (flags win, then ``POVMAP_*`` environment variables, then the file,
then built-in defaults) and writes fixed filenames under ``--out``.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import _accel, annotations as ann, detection, etl, formats, grid, nightlights, regression
from .config import load_config, stage_seed
from .errors import InputError, InvariantError

SUBCOMMANDS = ("centroids", "nightlabels", "annotations", "sampler", "eval-det", "etl",
               "ensemble", "split", "regress", "cv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _read(path):
    with open(path) as fh:
        return fh.read()


def _write(out_dir, name, text):
    path = os.path.join(out_dir, name)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _seed(cfg, label):
    if cfg.seed is None:
        raise InputError("missing config key: seed (required for randomized subcommands)")
    return stage_seed(cfg.seed, label)


# -- subcommands ----------------------------------------------------------

def cmd_centroids(cfg, args):
    cfg.require("vnl", "worldpop", "aoi")
    vnl = formats.parse_ascii_grid(_read(cfg.vnl))
    pop = formats.parse_ascii_grid(_read(cfg.worldpop))
    aois = formats.parse_polygons(_read(cfg.aoi))
    records = grid.extract_centroids(vnl, pop, aois, min_pop=cfg.min_pop,
                                     side_m=cfg.tile_side_m)
    _write(args.out, "centroids.tsv",
           formats.write_table(grid.centroid_rows(records), grid.CENTROID_SCHEMA))
    return f"centroids: {len(records)} tiles kept of {vnl.nrows * vnl.ncols} pixels"


def _read_centroid_table(path):
    _, rows = formats.read_table(_read(path), grid.CENTROID_SCHEMA)
    return [grid.CentroidRecord(r["row"], r["col"], grid.GeoPoint(r["lon"], r["lat"]), None,
                                r["population"], r["nightlight_sum"]) for r in rows]


def cmd_nightlabels(cfg, args):
    cfg.require("centroids")
    records = _read_centroid_table(cfg.centroids)
    transform = nightlights.log1p_transform if args.log1p else None
    values = np.array([r.nightlight_sum for r in records])
    if transform is not None:
        values = transform(values)
    model = nightlights.fit_gmm_1d(values, k=cfg.gmm_k,
                                   seed=cfg.seed if cfg.seed is not None else 0)
    labeled = nightlights.label_centroids(records, model, transform)
    schema = grid.CENTROID_SCHEMA + [("night_class", int)]
    rows = [row + (r.night_class,) for row, r in zip(grid.centroid_rows(labeled), labeled)]
    _write(args.out, "labeled.tsv", formats.write_table(rows, schema))
    _write(args.out, "gmm.txt", nightlights.write_gmm(model))
    counts = np.bincount([r.night_class for r in labeled], minlength=cfg.gmm_k)
    return f"nightlabels: {len(labeled)} tiles, class sizes {counts.tolist()}"


def _load_annotations(cfg):
    cfg.require("annotations", "image_dims")
    table = formats.parse_annotations(_read(cfg.annotations), _read(cfg.image_dims))
    cmap = ann.parse_class_map(_read(cfg.class_map)) if cfg.class_map else ann.ClassMap.xview()
    return table, cmap, ann.prepare_dataset(table, cmap)


def _dataset_weights(prepared, cmap):
    labels = [c for v in prepared.values() if not v.dropped
              for c, _ in ann.grouped_objects(v, cmap)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ann.class_weights(labels, classes=range(len(ann.PARENT_CLASSES)))


def cmd_annotations(cfg, args):
    table, cmap, prepared = _load_annotations(cfg)
    status_rows = []
    for image_id, v in prepared.items():
        status = "dropped" if v.dropped else "kept"
        status_rows.append((image_id, status, v.n_incorrect, len(v.kept), len(v.rejected)))
        if not v.dropped:
            w, h = table.dims[image_id]
            boxes = [ann.to_normalized(box, w, h, c) for c, box in ann.grouped_objects(v, cmap)]
            stem = os.path.splitext(image_id)[0]
            _write(args.out, os.path.join("labels", f"{stem}.txt"), ann.write_normalized(boxes))
    _write(args.out, "validation.tsv", formats.write_table(status_rows, [
        ("image_id", str), ("status", str), ("n_incorrect", int), ("n_kept", int),
        ("n_rejected", int)]))
    weights = _dataset_weights(prepared, cmap)
    _write(args.out, "class_weights.tsv", formats.write_table(
        [(c, ann.PARENT_CLASSES[c], weights[c]) for c in sorted(weights)],
        [("class_index", int), ("class_name", str), ("weight", int)]))
    summary = (f"annotations: {sum(r[1] == 'kept' for r in status_rows)} images kept, "
               f"{sum(r[1] == 'dropped' for r in status_rows)} dropped")
    if args.test_images:
        test_ids = [t.strip() for t in _read(args.test_images).splitlines() if t.strip()]
        unknown = [t for t in test_ids if t not in prepared]
        if unknown:
            raise InputError(f"unknown test images: {', '.join(unknown[:10])}")
        labels = [c for t in test_ids if not prepared[t].dropped
                  for c, _ in ann.grouped_objects(prepared[t], cmap)]
        deficient = etl.check_class_coverage(labels, cfg.min_instances)
        counts = np.bincount(labels, minlength=len(ann.PARENT_CLASSES)) if labels else \
            np.zeros(len(ann.PARENT_CLASSES), dtype=int)
        _write(args.out, "coverage.tsv", formats.write_table(
            [(c, ann.PARENT_CLASSES[c], int(counts[c]), "low" if c in deficient else "ok")
             for c in range(len(ann.PARENT_CLASSES))],
            [("class_index", int), ("class_name", str), ("instances", int), ("status", str)]))
        summary += f", holdout coverage {'pass' if not deficient else 'deficient'}"
    return summary


def _check_table(table):
    if any(r.sum_w for r in table):
        if abs(sum(r.prob for r in table) - 1.0) > 1e-9 or table[-1].prob_to != 1.0:
            raise InvariantError("quadrant probabilities do not sum to 1")
    return table


def _parse_size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise InputError(f"image size must look like WIDTHxHEIGHT, got {text!r}") from None
    return w, h


def cmd_sampler(cfg, args):
    if args.sum_w:
        try:
            sums = [int(v) for v in args.sum_w.replace(",", " ").split()]
        except ValueError:
            raise InputError("--sum-w takes 16 integers") from None
        if not args.image_size:
            raise InputError("--sum-w needs --image-size")
        w, h = _parse_size(args.image_size)
        tables = {args.name: _check_table(ann.quadrant_table_from_sums(sums, w, h, args.name))}
        objects = {}
    else:
        table, cmap, prepared = _load_annotations(cfg)
        weights = _dataset_weights(prepared, cmap)
        tables, objects = {}, {}
        for image_id, v in prepared.items():
            if v.dropped:
                continue
            w, h = table.dims[image_id]
            objects[image_id] = ann.grouped_objects(v, cmap)
            tables[image_id] = _check_table(
                ann.quadrant_table(objects[image_id], weights, w, h, image_id))

    rows = [r.as_row() for t in tables.values() for r in t]
    text = formats.write_table(rows, ann.QUADRANT_SCHEMA)
    if args.dry_run:
        sys.stdout.write(text)
        # keep stdout a clean table
        print(f"sampler: dry run, {len(tables)} image(s)", file=sys.stderr)
        return None
    _write(args.out, "quadrants.tsv", text)
    if not objects:
        return f"sampler: {len(tables)} quadrant table(s)"

    root = _seed(cfg, "sampler")
    manifest = []
    for n, (image_id, tab) in enumerate(tables.items()):
        rng = np.random.default_rng(np.random.SeedSequence(root.entropy,
                                                           spawn_key=root.spawn_key + (n,)))
        chips = ann.sample_image_chips(tab, objects[image_id], cfg.chips_per_image,
                                       cfg.chip_size, rng, cfg.clip_retention)
        stem = os.path.splitext(image_id)[0]
        for c, chip in enumerate(chips):
            chip_id = f"{stem}_c{c:03d}"
            _write(args.out, os.path.join("chips", f"{chip_id}.txt"),
                   ann.write_normalized(chip.boxes))
            manifest.append((chip_id, image_id, chip.quadrant, chip.origin_x, chip.origin_y,
                             chip.size, len(chip.boxes)))
    _write(args.out, "chips/manifest.tsv", formats.write_table(manifest, [
        ("chip_id", str), ("orig_filename", str), ("quadrant", int), ("origin_x", int),
        ("origin_y", int), ("size", int), ("n_boxes", int)]))
    return f"sampler: {len(manifest)} chips from {len(tables)} images"


def cmd_eval_det(cfg, args):
    cfg.require("detections", "ground_truth")
    dets = formats.parse_detections(_read(cfg.detections))
    gts = formats.parse_detections(_read(cfg.ground_truth), ground_truth=True)
    report = detection.evaluate(dets, gts, cfg.iou_threshold, cfg.conf_threshold)
    rows = []
    for c, aps in report.ap.items():
        if aps is None:
            rows.append((c, ann.PARENT_CLASSES[c], 0, "undefined", "undefined"))
        else:
            rows.append((c, ann.PARENT_CLASSES[c], report.n_gt[c], f"{aps[0]:.6f}",
                         f"{np.mean(aps):.6f}"))
    _write(args.out, "eval_report.tsv", formats.write_table(rows, [
        ("class_index", int), ("class_name", str), ("n_gt", int), ("ap50", str),
        ("ap5095", str)]))
    _write(args.out, "eval_summary.txt", "\n".join(report.summary_lines()) + "\n")
    labels = list(ann.PARENT_CLASSES) + ["background"]
    _write(args.out, "confusion.tsv", formats.write_table(
        [[labels[i], *report.confusion[i]] for i in range(len(labels))],
        [("true_class", str)] + [(name, int) for name in labels]))
    pr_rows = [(c, k, r, p) for c, pts in report.pr_points.items()
               for k, (r, p) in enumerate(pts)]
    _write(args.out, "pr_curves.tsv", formats.write_table(pr_rows, [
        ("class_index", int), ("rank", int), ("recall", float), ("precision", float)]))
    return f"eval-det: map50={report.map50:.4f} map5095={report.map5095:.4f}"


def cmd_etl(cfg, args):
    cfg.require("detections", "image_map", "provinces")
    dets = formats.parse_detections(_read(cfg.detections))
    image_map = etl.parse_image_map(_read(cfg.image_map))
    provinces = etl.parse_provinces(_read(cfg.provinces))
    rows, counts, notes = etl.build_detector_table(dets, image_map, provinces,
                                                   cfg.conf_threshold)
    _write(args.out, "counts.tsv", formats.write_table(
        [[g, *counts[g]] for g in sorted(counts)],
        [("geocode", str)] + [(s, int) for s in etl.CLASS_SLUGS]))
    _write(args.out, "detector_features.tsv",
           etl.write_feature_table(etl.detector_table(rows)))
    _write(args.out, "etl_warnings.txt", "".join(n + "\n" for n in notes))
    return (f"etl: {len(rows)} provinces at conf>={cfg.conf_threshold}, "
            f"{len(notes)} warning(s)")


def cmd_ensemble(cfg, args):
    cfg.require("provinces")
    if not args.features:
        raise InputError("ensemble needs at least one --features table")
    tables = []
    for spec in args.features:
        name, _, path = spec.rpartition("=")
        name = name or os.path.splitext(os.path.basename(path))[0]
        tables.append(etl.parse_feature_table(_read(path), name))
    provinces = etl.parse_provinces(_read(cfg.provinces))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows, names = etl.concat_features(tables, provinces, permissive=args.permissive)
    if len(names) != sum(t.width for t in tables):
        raise InvariantError("ensemble width differs from the sum of input widths")
    _write(args.out, "ensemble.tsv", etl.write_ensemble(rows, names))
    note = f" ({caught[0].message})" if caught else ""
    return f"ensemble: {len(rows)} rows x {len(names)} features{note}"


def _geocodes_from(path):
    _, rows = formats.read_table(_read(path), [("geocode", str)])
    return [r["geocode"] for r in rows]


def cmd_split(cfg, args):
    cfg.require("provinces")
    codes = _geocodes_from(cfg.provinces)
    train, test = etl.split_provinces(codes, cfg.test_fraction, _seed(cfg, "split"))
    if set(train) & set(test) or len(train) + len(test) != len(set(codes)):
        raise InvariantError("split is not a partition")
    _write(args.out, "split.tsv", etl.write_split(train, test))
    return f"split: {len(train)} train, {len(test)} test"


def _ensemble_split(cfg):
    codes, X, y, names = etl.parse_ensemble(_read(cfg.ensemble))
    if cfg.split is None:
        return codes, X, y, None
    split = etl.parse_split(_read(cfg.split))
    missing = [g for g in codes if g not in split]
    if missing:
        raise InputError(f"geocodes absent from split manifest: {', '.join(missing[:10])}")
    is_test = np.array([split[g] == "test" for g in codes])
    return codes, X, y, is_test


def cmd_regress(cfg, args):
    cfg.require("ensemble")
    _, X, y, is_test = _ensemble_split(cfg)
    train = ~is_test if is_test is not None else np.ones(len(y), dtype=bool)
    model = regression.ridge_fit(X[train], y[train], cfg.ridge_lambda)
    fit = regression.evaluate(model, X[train], y[train])
    lines = [f"lambda={cfg.ridge_lambda!r}", f"train.r2={fit.r_squared:.6f}",
             f"train.rmse={fit.rmse:.6f}", f"train.n={fit.n}"]
    summary = f"regress: train r2={fit.r_squared:.4f}"
    if is_test is not None and is_test.any():
        held = regression.evaluate(model, X[is_test], y[is_test])
        lines += [f"test.r2={held.r_squared:.6f}", f"test.rmse={held.rmse:.6f}",
                  f"test.n={held.n}"]
        summary += f" test r2={held.r_squared:.4f}"
    _write(args.out, "model.txt", regression.write_model(model))
    _write(args.out, "metrics.txt", "\n".join(lines) + "\n")
    return summary


def cmd_cv(cfg, args):
    cfg.require("ensemble")
    _, X, y, is_test = _ensemble_split(cfg)
    if is_test is not None:
        X, y = X[~is_test], y[~is_test]
    result = regression.kfold_cv(X, y, cfg.cv_k, cfg.lambda_grid, _seed(cfg, "cv"))
    _write(args.out, "cv.txt", "\n".join(result.summary_lines()) + "\n")
    return f"cv: mean r2={result.mean_r2:.4f} at lambda={result.best_lambda:g}"


COMMANDS = {
    "centroids": cmd_centroids, "nightlabels": cmd_nightlabels,
    "annotations": cmd_annotations, "sampler": cmd_sampler, "eval-det": cmd_eval_det,
    "etl": cmd_etl, "ensemble": cmd_ensemble, "split": cmd_split, "regress": cmd_regress,
    "cv": cmd_cv,
}

# per-subcommand flags; each maps 1:1 onto a PipelineConfig field
_CONFIG_FLAGS = {
    "centroids": ["vnl", "worldpop", "aoi", "tile_side_m", "min_pop"],
    "nightlabels": ["centroids", "gmm_k"],
    "annotations": ["annotations", "image_dims", "class_map", "min_instances"],
    "sampler": ["annotations", "image_dims", "class_map", "chip_size", "chips_per_image",
                "clip_retention"],
    "eval-det": ["detections", "ground_truth", "iou_threshold", "conf_threshold"],
    "etl": ["detections", "image_map", "provinces", "conf_threshold"],
    "ensemble": ["provinces"],
    "split": ["provinces", "test_fraction"],
    "regress": ["ensemble", "split", "ridge_lambda"],
    "cv": ["ensemble", "split", "cv_k", "lambda_grid"],
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--threads", type=int, default=None, help="numba thread count")
    common.add_argument("--out", default=None, help="output directory (default: out)")

    parser = _Parser(prog="povmap", description="Province poverty mapping pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common])
        for dest in _CONFIG_FLAGS[name]:
            p.add_argument("--" + dest.replace("_", "-"), dest=dest, default=None)
        if name == "nightlabels":
            p.add_argument("--log1p", action="store_true", help="cluster log1p(sums)")
        if name == "annotations":
            p.add_argument("--test-images", help="file of holdout image ids, one per line")
        if name == "sampler":
            p.add_argument("--dry-run", action="store_true", help="print quadrant tables only")
            p.add_argument("--sum-w", help="16 quadrant weight sums instead of annotations")
            p.add_argument("--image-size", help="WIDTHxHEIGHT for --sum-w")
            p.add_argument("--name", default="image", help="orig_filename for --sum-w")
        if name == "ensemble":
            p.add_argument("--features", nargs="+", metavar="[NAME=]PATH",
                           help="feature tables, concatenated in the order given")
            p.add_argument("--permissive", action="store_true",
                           help="inner-join mismatched geocodes with a warning")
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
            raise InputError(f"unknown subcommand {argv[0]!r}; "
                             f"choose from {', '.join(SUBCOMMANDS)}")
        args = build_parser().parse_args(argv)
        overrides = {dest: getattr(args, dest) for dest in _CONFIG_FLAGS[args.command]}
        overrides["seed"] = args.seed
        cfg = load_config(args.config, overrides)
        args.out = args.out or "out"
        os.makedirs(args.out, exist_ok=True)
        _accel.set_threads(args.threads)
        summary = COMMANDS[args.command](cfg, args)
        if summary:
            print(summary)
        return 0
    except InvariantError as exc:
        print(f"povmap: invariant violated: {exc}", file=sys.stderr)
        return 2
    except (InputError, OSError) as exc:
        print(f"povmap: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
