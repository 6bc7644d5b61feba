"""Turning raw rooms into training/testing units: block, view and room styles."""

from __future__ import annotations

import dataclasses

import numpy as np

from .core_io import PointCloud, UnitSet
from .errors import ArgumentError, EmptyInputError
from .spatial import KnnIndex

DEFAULT_GRID = 0.04
BLOCK_POINTS = 4096
VIEW_POINTS = 40960


def room_seed(seed: int, room_index: int) -> int:
    """Per-room seed; rooms are independent so any processing order agrees."""
    return int(seed) ^ int(room_index)


def voxel_keys(positions, grid_size, origin=None):
    pos = np.asarray(positions, dtype=np.float64)
    if origin is None:
        origin = pos.min(axis=0)
    return np.floor((pos - origin) / grid_size).astype(np.int64)


def voxel_downsample(cloud: PointCloud, grid_size: float = DEFAULT_GRID, seed: int = 0) -> PointCloud:
    """Keep one randomly chosen member point per occupied voxel.

    Output rows are ordered by ascending voxel key (x, then y, then z).
    """
    if not grid_size > 0:
        raise ArgumentError(f"grid size must be positive, got {grid_size}")
    keys = voxel_keys(cloud.positions, grid_size)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    rng = np.random.default_rng(seed)
    # random priority inside each voxel, voxels in ascending key order
    order = np.lexsort((rng.random(len(cloud)), inverse))
    grouped = inverse[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = grouped[1:] != grouped[:-1]
    return cloud.take(order[first])


def make_room_units(rooms, grid_size: float = DEFAULT_GRID, seed: int = 0, split="train", fold=6) -> UnitSet:
    """One unit per room: the room's voxel-downsampled points."""
    rooms = list(rooms)
    if not rooms:
        raise ArgumentError("no rooms given")
    units = [voxel_downsample(room, grid_size, room_seed(seed, i)) for i, room in enumerate(rooms)]
    return UnitSet(units=units, style="room", split=split, fold=fold)


def block_membership(positions, block_size: float):
    """Block key per point over the XY plane, plus the sorted unique keys."""
    xy = np.asarray(positions, dtype=np.float64)[:, :2]
    cells = np.floor((xy - xy.min(axis=0)) / block_size).astype(np.int64)
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


def make_block_units(
    rooms, block_size: float = 1.0, points_per_unit: int = BLOCK_POINTS, seed: int = 0, split="train", fold=6
) -> UnitSet:
    """Split each room's XY plane into square blocks, each sampled to a fixed size.

    Blocks holding fewer points than ``points_per_unit`` are sampled with
    replacement; larger blocks without.
    """
    if not block_size > 0:
        raise ArgumentError(f"block size must be positive, got {block_size}")
    rooms = list(rooms)
    if not rooms:
        raise ArgumentError("no rooms given")
    units = []
    for r, room in enumerate(rooms):
        rng = np.random.default_rng(room_seed(seed, r))
        cells, inverse = block_membership(room.positions, block_size)
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(cells) + 1))
        for b, (ix, iy) in enumerate(cells):
            members = order[bounds[b] : bounds[b + 1]]
            replace = members.size < points_per_unit
            pick = rng.choice(members, size=points_per_unit, replace=replace)
            units.append(room.take(pick).replace(unit_id=f"{room.unit_id}_block_{ix}_{iy}"))
    return UnitSet(units=units, style="block", split=split, fold=fold, unit_size=points_per_unit)


@dataclasses.dataclass
class ViewConfig:
    unit_size: int = VIEW_POINTS
    # Initial possibilities are uniform in [0, init_scale); every selected point
    # gains at least update_floor, so with update_floor >= init_scale a selected
    # point never undercuts an untouched one.
    init_scale: float = 1e-3
    update_floor: float = 1e-3


def possibility_update(distances):
    """Increment ``(1 - d / d_max)^2`` for the points of one view."""
    d = np.asarray(distances, dtype=np.float64)
    dmax = d.max() if d.size else 0.0
    if dmax <= 0:
        return np.ones_like(d)
    return np.square(1.0 - d / dmax)


def make_view_units(
    rooms,
    unit_size: int = VIEW_POINTS,
    target_units: int = 1,
    grid_size=DEFAULT_GRID,
    seed: int = 0,
    split="train",
    fold=6,
    config: ViewConfig = None,
) -> UnitSet:
    """Fixed-size units grown around the lowest-possibility point.

    Rooms are voxel-downsampled first unless ``grid_size`` is None. Each round
    takes the ``unit_size`` nearest points (within its room) of the global
    minimum-possibility point, then raises the possibility of every selected
    point, most strongly near the reference.
    """
    if target_units < 1:
        raise ArgumentError("target_units must be at least 1")
    cfg = config or ViewConfig(unit_size=unit_size)
    unit_size = cfg.unit_size
    rooms = list(rooms)
    if not rooms:
        raise ArgumentError("no rooms given")
    if grid_size is not None:
        rooms = [voxel_downsample(room, grid_size, room_seed(seed, i)) for i, room in enumerate(rooms)]
    rng = np.random.default_rng(seed)
    indexes = [KnnIndex(room.positions) for room in rooms]
    poss = [rng.random(len(room)) * cfg.init_scale for room in rooms]
    room_min = np.array([p.min() for p in poss])
    units = []
    for u in range(target_units):
        r = int(np.argmin(room_min))
        ref = int(np.argmin(poss[r]))
        room = rooms[r]
        idx, dist = indexes[r].query(room.positions[ref], unit_size, return_distance=True)
        idx, dist = idx[0], dist[0]
        sel, first = np.unique(idx, return_index=True)
        poss[r][sel] += possibility_update(dist[first]) + cfg.update_floor
        room_min[r] = poss[r].min()
        units.append(room.take(idx).replace(unit_id=f"{room.unit_id}_view_{u}"))
    return UnitSet(units=units, style="view", split=split, fold=fold, unit_size=unit_size)


@dataclasses.dataclass
class DatasetStats:
    style: str
    split: str
    unit_count: int
    min_size: int
    max_size: int
    mean_size: float
    total_points: int

    def as_pairs(self):
        return [(f.name, getattr(self, f.name)) for f in dataclasses.fields(self)]


def dataset_stats(unitset: UnitSet) -> DatasetStats:
    if len(unitset) == 0:
        raise EmptyInputError("unit set is empty")
    sizes = np.array([len(u) for u in unitset.units], dtype=np.int64)
    return DatasetStats(
        style=unitset.style,
        split=unitset.split,
        unit_count=int(sizes.size),
        min_size=int(sizes.min()),
        max_size=int(sizes.max()),
        mean_size=float(sizes.mean()),
        total_points=int(sizes.sum()),
    )


def format_stats(stats) -> str:
    """Aligned table (sizes in thousands, totals in millions) followed by key=value lines."""
    stats = list(stats)
    header = f"{'style':<6} {'split':<6} {'units':>7} {'scale (x1e3)':>16} {'total (x1e6)':>13}"
    lines = [header, "-" * len(header)]
    for s in stats:
        if s.min_size == s.max_size:
            scale = f"{s.min_size / 1e3:.1f}"
        else:
            scale = f"{s.min_size / 1e3:.1f}-{s.max_size / 1e3:.1f}"
        lines.append(f"{s.style:<6} {s.split:<6} {s.unit_count:>7d} {scale:>16} {s.total_points / 1e6:>13.3f}")
    lines.append("")
    for s in stats:
        for key, value in s.as_pairs():
            if key in ("style", "split"):
                continue
            lines.append(f"{s.style}.{s.split}.{key}={value}")
    return "\n".join(lines) + "\n"
