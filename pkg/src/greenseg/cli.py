"""``greenseg`` command line interface.

Directory conventions:

* rooms dir: ``Area_<a>/<room>.txt`` room files (output of ``convert``)
* units dir: ``train/`` and ``test/`` holding unit room files plus ``manifest.json``
* attribute/feature dirs: ``<split>/<unit>.feat`` (GSIPFEAT) and ``<split>/<unit>.labels``
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import core_io
from .attributes import DEFAULT_K_LOCAL, build_attributes
from .classifier import GbdtConfig, fit, load_model, save_model
from .core_io import (
    UnitSet,
    load_rooms_by_area,
    read_feature_file,
    read_labels,
    read_room_file,
    write_feature_file,
    write_labels,
    write_room_file,
)
from .errors import ArgumentError, GreensegError, StateError
from .evaluation import accumulate, confusion_matrix, EvalReport, export_colored_cloud, write_report
from .extractor import HopConfig, StandardizationParams, extract_units
from .pipeline import PipelineConfig, crossval
from .preprocess import (
    DEFAULT_GRID,
    dataset_stats,
    format_stats,
    make_block_units,
    make_room_units,
    make_view_units,
)

log = logging.getLogger("greenseg")


def _split_dirs(root):
    root = Path(root)
    found = [(s, root / s) for s in core_io.SPLITS if (root / s).is_dir()]
    return found or [(None, root)]


def _out_dir(out, split):
    d = Path(out) if split is None else Path(out) / split
    d.mkdir(parents=True, exist_ok=True)
    return d


def _copy_labels(src_dir, dst_dir, stem):
    src = Path(src_dir) / f"{stem}.labels"
    if src.exists():
        shutil.copyfile(src, Path(dst_dir) / f"{stem}.labels")


def cmd_convert(args):
    written = core_io.convert_s3dis(args.s3dis_root, args.out)
    print(f"converted {len(written)} rooms into {args.out}")


def cmd_preprocess(args):
    areas = load_rooms_by_area(args.inp)
    if args.test_area not in areas:
        raise ArgumentError(f"test area {args.test_area} not found in {args.inp}")
    splits = {
        "train": [r for a in sorted(areas) if a != args.test_area for r in areas[a]],
        "test": areas[args.test_area],
    }
    out = Path(args.out)
    manifest = {"style": args.style, "grid": args.grid, "test_area": args.test_area, "seed": args.seed, "units": {}}
    for split, rooms in splits.items():
        if not rooms:
            continue
        kw = dict(seed=args.seed, split=split, fold=args.test_area)
        if args.style == "room":
            units = make_room_units(rooms, args.grid, **kw)
        elif args.style == "block":
            units = make_block_units(rooms, args.block_size, args.points_per_unit, **kw)
        else:
            target = args.train_units if split == "train" else args.test_units
            units = make_view_units(rooms, args.unit_size, target, args.grid, **kw)
        manifest["unit_size"] = units.unit_size
        d = _out_dir(out, split)
        for u in units:
            write_room_file(u, d / f"{u.unit_id}.txt")
        manifest["units"][split] = [u.unit_id for u in units]
        log.info("%s: %d %s-style units", split, len(units), args.style)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _load_unitsets(root):
    root = Path(root)
    manifest_path = root / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    style = manifest.get("style", "room")
    fold = int(manifest.get("test_area", 6))
    unit_size = manifest.get("unit_size")
    sets = []
    for split, d in _split_dirs(root):
        units = [read_room_file(f) for f in sorted(d.glob("*.txt"))]
        if units:
            sets.append(UnitSet(units, style, split or "train", fold, unit_size))
    if not sets:
        raise StateError(f"{root}: no unit files found")
    return sets


def cmd_stats(args):
    sys.stdout.write(format_stats(dataset_stats(s) for s in _load_unitsets(args.inp)))


def cmd_attributes(args):
    for split, d in _split_dirs(args.inp):
        files = sorted(d.glob("*.txt"))
        dst = _out_dir(args.out, split)
        for f in files:
            unit = build_attributes(read_room_file(f), args.k_local)
            write_feature_file(unit, "f32", dst / f"{f.stem}.feat")
            if unit.labels is not None:
                write_labels(unit.labels, dst / f"{f.stem}.labels")
        log.info("%s: attributes for %d units", split or ".", len(files))


def _read_attr_units(d):
    units = []
    for f in sorted(Path(d).glob("*.feat")):
        attrs = read_feature_file(f).astype(np.float64)
        lab_path = f.with_suffix(".labels")
        units.append(
            core_io.PointCloud(
                positions=attrs[:, :3],
                colors=np.zeros((attrs.shape[0], 3), dtype=np.uint8),
                labels=read_labels(lab_path) if lab_path.exists() else None,
                attributes=attrs,
                unit_id=f.stem,
            )
        )
    return units


def cmd_extract(args):
    ratios = tuple(float(r) for r in args.ratios.split(","))
    config = HopConfig(num_hops=args.hops, k_neighbors=args.k, sample_ratios=ratios, seed=args.seed)
    params = None
    params_path = Path(args.params) if args.params else None
    if params_path is not None and params_path.exists():
        params = StandardizationParams.load(params_path)
        log.info("loaded standardization parameters from %s", params_path)
    dirs = _split_dirs(args.inp)
    # fit on the training split first so the test split reuses its statistics
    dirs.sort(key=lambda sd: sd[0] != "train")
    for split, d in dirs:
        units = _read_attr_units(d)
        if not units:
            continue
        feats, params = extract_units(units, config, params, args.precision, args.workers)
        dst = _out_dir(args.out, split)
        for u, f in zip(units, feats):
            write_feature_file(f, args.precision, dst / f"{u.unit_id}.feat")
            _copy_labels(d, dst, u.unit_id)
        log.info("%s: features for %d units, width %d", split or ".", len(units), feats[0].shape[1])
    if params_path is not None and not params_path.exists():
        params.save(params_path)


def _load_feature_dir(d, need_labels):
    xs, ys, names = [], [], []
    for f in sorted(Path(d).glob("*.feat")):
        xs.append(read_feature_file(f))
        names.append(f.stem)
        lab = f.with_suffix(".labels")
        if need_labels:
            if not lab.exists():
                raise StateError(f"{f}: missing labels file {lab.name}")
            ys.append(read_labels(lab))
    if not xs:
        raise StateError(f"{d}: no .feat files")
    return xs, ys, names


def cmd_train(args):
    root = Path(args.features)
    d = root / "train" if (root / "train").is_dir() else root
    xs, ys, _ = _load_feature_dir(d, need_labels=True)
    x, y = np.vstack(xs), np.concatenate(ys)
    if args.max_train_points and y.size > args.max_train_points:
        keep = np.sort(np.random.default_rng(args.seed).choice(y.size, args.max_train_points, replace=False))
        x, y = x[keep], y[keep]
    cfg = GbdtConfig(
        n_trees=args.trees,
        max_depth=args.max_depth,
        learning_rate=args.learning_rate,
        allow_absent_classes=args.allow_absent_classes,
        max_bins=None if args.exact else 256,
        seed=args.seed,
    )
    model = fit(x, y, cfg)
    save_model(model, args.out)
    print(f"trained {len(model.trees)} trees on {y.size} points; final log-loss {model.history[-1]:.4f}")


def cmd_predict(args):
    model = load_model(args.model)
    root = Path(args.features)
    d = root / "test" if (root / "test").is_dir() else root
    xs, _, names = _load_feature_dir(d, need_labels=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for x, name in zip(xs, names):
        write_labels(model.predict(x)[0], out / f"{name}.labels")
    print(f"predicted {len(names)} units into {out}")


def cmd_eval(args):
    truth_root = Path(args.truth)
    truth_dir = truth_root / "test" if (truth_root / "test").is_dir() else truth_root
    cm = confusion_matrix()
    n = 0
    for pred_file in sorted(Path(args.pred).glob("*.labels")):
        truth_file = truth_dir / pred_file.name
        if not truth_file.exists():
            raise StateError(f"no ground truth for {pred_file.name} in {truth_dir}")
        cm = accumulate(cm, read_labels(truth_file), read_labels(pred_file))
        n += 1
    if n == 0:
        raise StateError(f"{args.pred}: no .labels files")
    report = EvalReport.from_confusion(cm, absent=args.absent)
    write_report(report, args.report, args.json)
    print(f"mIoU {100 * report.miou:.1f}  OA {100 * report.oa:.1f}  ({report.point_count} points, {n} units)")


def cmd_crossval(args):
    areas = load_rooms_by_area(args.data)
    folds = sorted(areas)[: args.folds]
    cfg = PipelineConfig(
        grid_size=args.grid,
        hops=HopConfig(seed=args.seed),
        precision=args.precision,
        gbdt=GbdtConfig(n_trees=args.trees, allow_absent_classes=True, seed=args.seed),
        max_train_points=args.max_train_points,
        workers=args.workers,
        seed=args.seed,
    )
    reports, mean = crossval(areas, cfg, folds)
    write_report(mean, args.report, args.json, folds=reports)
    for r in reports:
        print(f"area {r.fold}: mIoU {100 * r.miou:.1f}  OA {100 * r.oa:.1f}")
    print(f"mean: mIoU {100 * mean.miou:.1f}  OA {100 * mean.oa:.1f}")


def cmd_visualize(args):
    cloud = read_room_file(args.inp)
    labels = read_labels(args.labels) if args.labels else cloud.labels
    if labels is None:
        raise StateError("input cloud has no labels; pass --labels")
    n = export_colored_cloud(cloud, labels, args.out, drop_classes=args.drop_class or ())
    print(f"wrote {n} points to {args.out}")


def build_parser():
    p = argparse.ArgumentParser(prog="greenseg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("convert", help="S3DIS Annotations folders -> room files")
    s.add_argument("--s3dis-root", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("preprocess", help="rooms -> block/view/room units")
    s.add_argument("--style", choices=core_io.STYLES, default="room")
    s.add_argument("--grid", type=float, default=DEFAULT_GRID)
    s.add_argument("--test-area", type=int, default=6, choices=range(1, 7))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--block-size", type=float, default=1.0)
    s.add_argument("--points-per-unit", type=int, default=4096, help="block style only")
    s.add_argument("--unit-size", type=int, default=40960, help="view style only")
    s.add_argument("--train-units", type=int, default=3000, help="view style only")
    s.add_argument("--test-units", type=int, default=2000, help="view style only")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("stats", help="unit-count and size statistics")
    s.add_argument("--in", dest="inp", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("attributes", help="21-D per-point attributes")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k-local", type=int, default=DEFAULT_K_LOCAL)
    s.set_defaults(func=cmd_attributes)

    s = sub.add_parser("extract", help="hop encoder/decoder features")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--hops", type=int, default=4)
    s.add_argument("--k", type=int, default=64)
    s.add_argument("--ratios", default="0.25,0.25,0.5,0.5")
    s.add_argument("--precision", choices=("f32", "f16"), default="f32")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--params", help="standardization file; loaded if present, else fitted and written")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="fit the GBDT classifier")
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--trees", type=int, default=128)
    s.add_argument("--max-depth", type=int, default=6)
    s.add_argument("--learning-rate", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--allow-absent-classes", action="store_true")
    s.add_argument("--max-train-points", type=int, default=None)
    s.add_argument("--exact", action="store_true", help="exact greedy splits instead of 256 bins")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="label feature files with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", help="mIoU / OA of predicted labels")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--report")
    s.add_argument("--json")
    s.add_argument("--absent", choices=("skip", "zero"), default="skip")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("crossval", help="leave-one-area-out room-style pipeline")
    s.add_argument("--data", required=True)
    s.add_argument("--folds", type=int, default=6)
    s.add_argument("--grid", type=float, default=DEFAULT_GRID)
    s.add_argument("--trees", type=int, default=128)
    s.add_argument("--precision", choices=("f32", "f16"), default="f32")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-train-points", type=int, default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--report")
    s.add_argument("--json")
    s.set_defaults(func=cmd_crossval)

    s = sub.add_parser("visualize", help="color a labeled cloud by class")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--labels", help="labels file overriding the cloud's own labels")
    s.add_argument("--drop-class", action="append", choices=core_io.CLASS_NAMES)
    s.set_defaults(func=cmd_visualize)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except GreensegError as exc:
        print(f"greenseg: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
