"""End-to-end room-style pipeline: units -> attributes -> hop features -> GBDT -> metrics."""

from __future__ import annotations

import dataclasses
import logging
import time
from typing import Optional

import numpy as np

from .attributes import DEFAULT_K_LOCAL, build_attributes
from .classifier import GbdtConfig, GbdtModel, fit
from .errors import ArgumentError
from .evaluation import EvalReport, aggregate_folds, evaluate
from .extractor import HopConfig, StandardizationParams, extract_units
from .preprocess import DEFAULT_GRID, make_room_units

log = logging.getLogger(__name__)


@dataclasses.dataclass
class PipelineConfig:
    grid_size: float = DEFAULT_GRID
    k_local: int = DEFAULT_K_LOCAL
    hops: HopConfig = dataclasses.field(default_factory=HopConfig)
    precision: str = "f32"
    gbdt: GbdtConfig = dataclasses.field(default_factory=lambda: GbdtConfig(allow_absent_classes=True))
    # cap on classifier training rows (seeded subsample); None uses all
    max_train_points: Optional[int] = None
    absent_policy: str = "skip"
    workers: Optional[int] = None
    seed: int = 0


@dataclasses.dataclass
class PipelineResult:
    report: EvalReport
    model: GbdtModel
    params: StandardizationParams
    train_features: list
    test_features: list
    test_units: list
    predictions: list
    timings: dict


def attributed_units(rooms, cfg: PipelineConfig, split: str, fold: int):
    units = make_room_units(rooms, cfg.grid_size, cfg.seed, split=split, fold=fold)
    return [build_attributes(u, cfg.k_local) for u in units]


def _stack(features, units):
    x = np.vstack(features)
    y = np.concatenate([u.labels for u in units])
    return x, y


def run_pipeline(train_rooms, test_rooms, cfg: PipelineConfig = None, fold: int = 6) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    timings = {}
    t0 = time.perf_counter()
    train_units = attributed_units(train_rooms, cfg, "train", fold)
    test_units = attributed_units(test_rooms, cfg, "test", fold)
    timings["preprocess_attributes"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    train_feats, params = extract_units(train_units, cfg.hops, None, cfg.precision, cfg.workers)
    test_feats, _ = extract_units(test_units, cfg.hops, params, cfg.precision, cfg.workers)
    timings["extract"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    x, y = _stack(train_feats, train_units)
    if cfg.max_train_points is not None and y.size > cfg.max_train_points:
        rng = np.random.default_rng(cfg.seed)
        keep = np.sort(rng.choice(y.size, cfg.max_train_points, replace=False))
        x, y = x[keep], y[keep]
    model = fit(x, y, cfg.gbdt)
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    preds = [model.predict(f)[0] for f in test_feats]
    xt, yt = _stack(test_feats, test_units)
    report = evaluate(yt, np.concatenate(preds), fold=fold, absent=cfg.absent_policy)
    timings["predict_eval"] = time.perf_counter() - t0
    log.info("fold %s: mIoU %.3f OA %.3f (%s)", fold, report.miou, report.oa, timings)
    return PipelineResult(report, model, params, train_feats, test_feats, test_units, preds, timings)


def run_fold(rooms_by_area: dict, test_area: int, cfg: PipelineConfig = None) -> PipelineResult:
    """Train on every area except ``test_area`` and evaluate on it."""
    if test_area not in rooms_by_area:
        raise ArgumentError(f"test area {test_area} not available (have {sorted(rooms_by_area)})")
    train = [room for a in sorted(rooms_by_area) if a != test_area for room in rooms_by_area[a]]
    if not train:
        raise ArgumentError("no training areas left")
    return run_pipeline(train, rooms_by_area[test_area], cfg, fold=test_area)


def crossval(rooms_by_area: dict, cfg: PipelineConfig = None, folds=None):
    """Leave-one-area-out over ``folds`` (default: every area). Returns (fold reports, mean)."""
    folds = sorted(rooms_by_area) if folds is None else list(folds)
    reports = [run_fold(rooms_by_area, a, cfg).report for a in folds]
    return reports, aggregate_folds(reports)
