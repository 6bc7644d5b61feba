"""End-to-end room-style run on synthetic rooms (train on the first rooms, test on the rest)."""

import argparse
import json
import logging

from greenseg.classifier import GbdtConfig
from greenseg.evaluation import format_fold_table
from greenseg.extractor import HopConfig
from greenseg.pipeline import PipelineConfig, run_pipeline
from greenseg.synthetic import make_rooms


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rooms", type=int, default=20)
    ap.add_argument("--test-rooms", type=int, default=5)
    ap.add_argument("--density", type=float, default=150)
    ap.add_argument("--grid", type=float, default=0.1)
    ap.add_argument("--trees", type=int, default=128)
    ap.add_argument("--precision", choices=["f32", "f16"], default="f32")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--json", default=None, help="optional path for a JSON report")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    rooms = make_rooms(args.rooms, seed=args.seed, density=args.density)
    split = args.rooms - args.test_rooms
    cfg = PipelineConfig(
        grid_size=args.grid,
        hops=HopConfig(seed=args.seed),
        precision=args.precision,
        gbdt=GbdtConfig(n_trees=args.trees, allow_absent_classes=True, seed=args.seed),
        workers=args.workers,
        seed=args.seed,
    )
    res = run_pipeline(rooms[:split], rooms[split:], cfg)
    print(format_fold_table([res.report], res.report))
    print("timings:", {k: round(v, 2) for k, v in res.timings.items()})
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({**res.report.to_dict(), "timings": res.timings}, fh, indent=2)


if __name__ == "__main__":
    main()
