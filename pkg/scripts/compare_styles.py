"""Unit statistics for block, view and room pre-processing on the same rooms."""

import argparse
from pathlib import Path

from greenseg.core_io import load_rooms_by_area
from greenseg.preprocess import dataset_stats, format_stats, make_block_units, make_room_units, make_view_units
from greenseg.synthetic import make_rooms


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", type=Path, default=None, help="converted rooms directory (Area_*/room.txt); synthetic if omitted")
    ap.add_argument("--test-area", type=int, default=6)
    ap.add_argument("--grid", type=float, default=0.04)
    ap.add_argument("--view-size", type=int, default=40960)
    ap.add_argument("--view-units", type=int, nargs=2, default=(3000, 2000), metavar=("TRAIN", "TEST"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.data is None:
        rooms = make_rooms(12, seed=args.seed, density=400)
        areas = {1 + i // 2: [] for i in range(12)}
        for i, r in enumerate(rooms):
            areas[1 + i // 2].append(r)
        view_size, view_units = 2048, (40, 10)
    else:
        areas = load_rooms_by_area(args.data)
        view_size, view_units = args.view_size, tuple(args.view_units)
    train = [r for a in sorted(areas) if a != args.test_area for r in areas[a]]
    test = areas[args.test_area]

    stats = []
    for split, rooms, n_view in (("train", train, view_units[0]), ("test", test, view_units[1])):
        sets = [
            make_block_units(rooms, seed=args.seed, split=split),
            make_view_units(rooms, unit_size=view_size, target_units=n_view, grid_size=args.grid, seed=args.seed, split=split),
            make_room_units(rooms, args.grid, seed=args.seed, split=split),
        ]
        stats.extend(dataset_stats(s) for s in sets)
    print(format_stats(stats))


if __name__ == "__main__":
    main()
