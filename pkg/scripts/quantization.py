"""Compare f32 and f16 feature storage: mIoU, OA and feature bytes on synthetic rooms."""

import argparse

from greenseg.classifier import GbdtConfig
from greenseg.extractor import HopConfig
from greenseg.pipeline import PipelineConfig, run_pipeline
from greenseg.synthetic import make_rooms


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rooms", type=int, default=20)
    ap.add_argument("--test-rooms", type=int, default=5)
    ap.add_argument("--grid", type=float, default=0.1)
    ap.add_argument("--trees", type=int, default=128)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    rooms = make_rooms(args.rooms, seed=args.seed, density=150)
    split = args.rooms - args.test_rooms
    print(f"{'precision':<10}{'mIoU':>8}{'OA':>8}{'feature MB':>12}")
    for precision in ("f32", "f16"):
        cfg = PipelineConfig(
            grid_size=args.grid,
            hops=HopConfig(seed=args.seed),
            precision=precision,
            gbdt=GbdtConfig(n_trees=args.trees, allow_absent_classes=True, seed=args.seed),
            seed=args.seed,
        )
        res = run_pipeline(rooms[:split], rooms[split:], cfg)
        mb = sum(f.nbytes for f in res.train_features + res.test_features) / 2**20
        print(f"{precision:<10}{100 * res.report.miou:>8.1f}{100 * res.report.oa:>8.1f}{mb:>12.1f}")


if __name__ == "__main__":
    main()
