"""Point cloud data model, room text files and the GSIPFEAT binary format."""

from __future__ import annotations

import dataclasses
import os
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ArgumentError, EmptyInputError, FormatError, ParseError, StateError

CLASS_NAMES = (
    "ceiling",
    "floor",
    "wall",
    "beam",
    "column",
    "window",
    "door",
    "table",
    "chair",
    "sofa",
    "bookcase",
    "board",
    "clutter",
)
NUM_CLASSES = len(CLASS_NAMES)
CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}

STYLES = ("block", "view", "room")
SPLITS = ("train", "test")

FEATURE_MAGIC = b"GSIPFEAT"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<8sIIIB")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f2")}
_PRECISION_CODES = {"f32": 0, "f16": 1}


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class PointCloud:
    """One unit of points: positions, RGB colors and optional labels/attributes.

    Arrays are stored read-only; use :meth:`replace` to derive a new cloud.
    """

    positions: np.ndarray
    colors: np.ndarray
    labels: Optional[np.ndarray] = None
    attributes: Optional[np.ndarray] = None
    unit_id: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ArgumentError(f"positions must be N x 3, got {pos.shape}")
        n = pos.shape[0]
        if n < 1:
            raise EmptyInputError("a point cloud needs at least one point")
        col = np.asarray(self.colors)
        if col.shape != (n, 3):
            raise ArgumentError(f"colors must be {n} x 3, got {col.shape}")
        if col.size and (col.min() < 0 or col.max() > 255):
            raise ArgumentError("colors must lie in 0..255")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "colors", _frozen(col.astype(np.uint8)))

        if self.labels is not None:
            lab = np.asarray(self.labels).reshape(-1)
            if lab.shape[0] != n:
                raise ArgumentError(f"expected {n} labels, got {lab.shape[0]}")
            if lab.size and (lab.min() < 0 or lab.max() >= NUM_CLASSES):
                raise ArgumentError(f"labels must lie in 0..{NUM_CLASSES - 1}")
            object.__setattr__(self, "labels", _frozen(lab.astype(np.int64)))

        if self.attributes is not None:
            att = np.asarray(self.attributes)
            if att.ndim != 2 or att.shape[0] != n:
                raise ArgumentError(f"attributes must be {n} x D, got {att.shape}")
            if not np.all(np.isfinite(att)):
                raise StateError("attributes contain non-finite values")
            object.__setattr__(self, "attributes", _frozen(att))

    def __len__(self):
        return self.positions.shape[0]

    def replace(self, **changes) -> "PointCloud":
        return dataclasses.replace(self, **changes)

    def take(self, index) -> "PointCloud":
        """Row subset (or repetition) of every column."""
        index = np.asarray(index, dtype=np.int64)
        return PointCloud(
            positions=self.positions[index],
            colors=self.colors[index],
            labels=None if self.labels is None else self.labels[index],
            attributes=None if self.attributes is None else self.attributes[index],
            unit_id=self.unit_id,
        )


_UNIT_SIZES = {"block": 4096, "view": 40960}


@dataclasses.dataclass(frozen=True)
class UnitSet:
    units: list
    style: str
    split: str = "train"
    fold: int = 6
    # fixed size for block/view styles; defaults to 4096 / 40960
    unit_size: Optional[int] = None

    def __post_init__(self):
        if self.style not in STYLES:
            raise ArgumentError(f"unknown style {self.style!r}")
        if self.split not in SPLITS:
            raise ArgumentError(f"unknown split {self.split!r}")
        if not 1 <= self.fold <= 6:
            raise ArgumentError("fold must be an area index in 1..6")
        if self.style == "room":
            object.__setattr__(self, "unit_size", None)
        elif self.unit_size is None:
            object.__setattr__(self, "unit_size", _UNIT_SIZES[self.style])
        size = self.unit_size
        if size is not None:
            for unit in self.units:
                if len(unit) != size:
                    raise StateError(
                        f"{self.style}-style unit {unit.unit_id!r} has {len(unit)} points, expected {size}"
                    )

    def __len__(self):
        return len(self.units)

    def __iter__(self):
        return iter(self.units)


# ---------------------------------------------------------------------------
# room text files


def parse_room_lines(lines, unit_id=""):
    """Parse ``x y z r g b [label]`` lines into a :class:`PointCloud`."""
    rows = []
    line_nos = []
    width = None
    for line_no, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (6, 7):
            raise ParseError(line_no, f"expected 6 or 7 fields, got {len(fields)}")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise ParseError(line_no, f"mixed field counts ({width} then {len(fields)})")
        rows.append(fields)
        line_nos.append(line_no)
    if not rows:
        raise EmptyInputError("room file holds no points")

    try:
        values = np.array(rows, dtype=np.float64)
    except ValueError:
        for fields, line_no in zip(rows, line_nos):
            for tok in fields:
                try:
                    float(tok)
                except ValueError:
                    raise ParseError(line_no, f"cannot parse number {tok!r}") from None
        raise

    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        raise ParseError(line_nos[int(np.argmax(bad))], "non-finite value")
    colors = values[:, 3:6]
    bad = ((colors < 0) | (colors > 255)).any(axis=1)
    if bad.any():
        raise ParseError(line_nos[int(np.argmax(bad))], "color outside 0..255")
    labels = None
    if width == 7:
        lab = values[:, 6]
        bad = (lab != np.round(lab)) | (lab < 0) | (lab >= NUM_CLASSES)
        if bad.any():
            raise ParseError(line_nos[int(np.argmax(bad))], f"label outside 0..{NUM_CLASSES - 1}")
        labels = lab.astype(np.int64)
    return PointCloud(
        positions=values[:, :3],
        colors=np.round(colors).astype(np.uint8),
        labels=labels,
        unit_id=unit_id,
    )


def read_room_file(path) -> PointCloud:
    path = Path(path)
    with open(path, "r") as fh:
        return parse_room_lines(fh, unit_id=path.stem)


def write_room_file(cloud: PointCloud, path, labels=None):
    """Write ``cloud`` as a room text file; positions round-trip exactly."""
    labels = cloud.labels if labels is None else np.asarray(labels)
    cols = [cloud.positions.tolist(), cloud.colors.tolist()]
    if labels is not None:
        cols.append(np.asarray(labels, dtype=np.int64).tolist())
    with open(path, "w") as fh:
        for row in zip(*cols):
            (x, y, z), (r, g, b) = row[0], row[1]
            line = f"{x!r} {y!r} {z!r} {r} {g} {b}"
            if labels is not None:
                line += f" {row[2]}"
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# GSIPFEAT binary feature files


def write_feature_file(cloud_or_matrix, precision: str, path):
    """Write an N x D attribute matrix as a GSIPFEAT file.

    Accepts a :class:`PointCloud` (its attributes are written) or a bare matrix.
    """
    if isinstance(cloud_or_matrix, PointCloud):
        feats = cloud_or_matrix.attributes
        if feats is None:
            raise StateError("point cloud has no attributes to write")
    else:
        feats = np.asarray(cloud_or_matrix)
    if feats.ndim != 2:
        raise StateError(f"feature matrix must be 2-D, got shape {feats.shape}")
    if not np.all(np.isfinite(feats)):
        raise StateError("feature matrix contains non-finite values")
    if precision not in _PRECISION_CODES:
        raise ArgumentError(f"precision must be one of {sorted(_PRECISION_CODES)}")
    code = _PRECISION_CODES[precision]
    data = np.ascontiguousarray(feats, dtype=_DTYPES[code])
    if not np.all(np.isfinite(data)):
        raise StateError(f"feature values overflow {precision}")
    n, d = data.shape
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, d, code))
        fh.write(data.tobytes(order="C"))


def read_feature_file(path) -> np.ndarray:
    """Read a GSIPFEAT file; values come back at their stored precision."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _FEATURE_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, d, code = _FEATURE_HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dtype = _DTYPES[code]
    expected = _FEATURE_HEADER.size + n * d * dtype.itemsize
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype=dtype, offset=_FEATURE_HEADER.size, count=n * d)
    return data.reshape(n, d).astype(dtype.newbyteorder("="))


def write_labels(labels, path):
    np.savetxt(path, np.asarray(labels, dtype=np.int64), fmt="%d")


def read_labels(path) -> np.ndarray:
    labels = np.loadtxt(path, dtype=np.int64, ndmin=1)
    if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
        raise ParseError(0, f"{path}: label outside 0..{NUM_CLASSES - 1}")
    return labels


# ---------------------------------------------------------------------------
# S3DIS conversion


def s3dis_label(object_file_name: str) -> int:
    """Class id from an Annotations file name such as ``chair_3.txt``.

    Unknown categories (S3DIS ships a few ``stairs`` objects) map to clutter.
    """
    prefix = os.path.basename(object_file_name).split("_")[0].lower()
    return CLASS_INDEX.get(prefix, CLASS_INDEX["clutter"])


def convert_s3dis_room(room_dir) -> PointCloud:
    """Concatenate the per-object files of one S3DIS room into a labeled cloud."""
    room_dir = Path(room_dir)
    ann = room_dir / "Annotations"
    parts = []
    for obj in sorted(ann.glob("*.txt")):
        # S3DIS object files carry 6 columns; the label comes from the file name.
        data = np.loadtxt(obj, dtype=np.float64, ndmin=2, usecols=range(6))
        if data.size == 0:
            continue
        lab = np.full((data.shape[0], 1), s3dis_label(obj.name), dtype=np.float64)
        parts.append(np.hstack([data, lab]))
    if not parts:
        raise EmptyInputError(f"{room_dir}: no annotation files")
    data = np.vstack(parts)
    return PointCloud(
        positions=data[:, :3],
        colors=np.clip(np.round(data[:, 3:6]), 0, 255).astype(np.uint8),
        labels=data[:, 6].astype(np.int64),
        unit_id=room_dir.name,
    )


def convert_s3dis(root, out):
    """Convert ``<root>/Area_<a>/<room>/Annotations`` into ``<out>/Area_<a>/<room>.txt``.

    Returns the list of written paths.
    """
    root, out = Path(root), Path(out)
    written = []
    for area_dir in sorted(root.glob("Area_*")):
        if not area_dir.is_dir():
            continue
        for room_dir in sorted(p for p in area_dir.iterdir() if (p / "Annotations").is_dir()):
            cloud = convert_s3dis_room(room_dir)
            dest = out / area_dir.name / f"{room_dir.name}.txt"
            dest.parent.mkdir(parents=True, exist_ok=True)
            write_room_file(cloud, dest)
            written.append(dest)
    return written


def load_rooms_by_area(rooms_dir) -> dict:
    """Read ``<dir>/Area_<a>/*.txt`` into ``{area: [PointCloud, ...]}``.

    Unit ids are prefixed with the area so they stay unique across areas.
    """
    rooms_dir = Path(rooms_dir)
    areas = {}
    for area_dir in sorted(rooms_dir.glob("Area_*")):
        try:
            area = int(area_dir.name.split("_")[1])
        except (IndexError, ValueError):
            continue
        rooms = []
        for f in sorted(area_dir.glob("*.txt")):
            cloud = read_room_file(f)
            rooms.append(cloud.replace(unit_id=f"Area_{area}_{f.stem}"))
        if rooms:
            areas[area] = rooms
    if not areas:
        raise EmptyInputError(f"{rooms_dir}: no Area_<n> directories with room files")
    return areas
