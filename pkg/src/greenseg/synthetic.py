"""Labeled synthetic rooms built from planar primitives.

A room is a box (floor at z=0, ceiling at z=height, four walls) with a few
box-shaped tables. Surfaces are sampled uniformly with a little positional
jitter; colors are a per-room tint of a class base color plus per-point noise.
"""

from __future__ import annotations

import numpy as np

from .core_io import CLASS_INDEX, PointCloud

_BASE_COLORS = {
    "ceiling": (225, 225, 215),
    "floor": (120, 95, 70),
    "wall": (190, 185, 170),
    "table": (150, 110, 60),
}


def _rect(rng, origin, u, v, density):
    """Uniform samples on the parallelogram ``origin + a*u + b*v``, a, b in [0, 1)."""
    area = np.linalg.norm(np.cross(u, v))
    n = max(1, int(round(area * density)))
    ab = rng.random((n, 2))
    return origin + ab[:, :1] * u + ab[:, 1:] * v


def _box_faces(rng, lo, hi, density, bottom=False):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    dx, dy, dz = hi - lo
    ex, ey, ez = np.eye(3)
    faces = [
        _rect(rng, np.array([lo[0], lo[1], hi[2]]), dx * ex, dy * ey, density),  # top
        _rect(rng, lo, dx * ex, dz * ez, density),
        _rect(rng, np.array([lo[0], hi[1], lo[2]]), dx * ex, dz * ez, density),
        _rect(rng, lo, dy * ey, dz * ez, density),
        _rect(rng, np.array([hi[0], lo[1], lo[2]]), dy * ey, dz * ez, density),
    ]
    if bottom:
        faces.append(_rect(rng, lo, dx * ex, dy * ey, density))
    return np.vstack(faces)


def make_room(rng, density=400.0, jitter=0.005, color_noise=12.0, n_tables=None, unit_id="room"):
    """One synthetic room as a labeled :class:`PointCloud`."""
    sx, sy = rng.uniform(3.0, 6.0, size=2)
    h = rng.uniform(2.6, 3.2)
    ex, ey, ez = np.eye(3)
    parts = {
        "floor": _rect(rng, np.zeros(3), sx * ex, sy * ey, density),
        "ceiling": _rect(rng, np.array([0, 0, h]), sx * ex, sy * ey, density),
        "wall": np.vstack(
            [
                _rect(rng, np.zeros(3), sx * ex, h * ez, density),
                _rect(rng, np.array([0, sy, 0]), sx * ex, h * ez, density),
                _rect(rng, np.zeros(3), sy * ey, h * ez, density),
                _rect(rng, np.array([sx, 0, 0]), sy * ey, h * ez, density),
            ]
        ),
    }
    if n_tables is None:
        n_tables = int(rng.integers(1, 4))
    tables = []
    for _ in range(n_tables):
        w, d = rng.uniform(0.6, 1.6), rng.uniform(0.5, 1.0)
        th = rng.uniform(0.65, 0.8)
        x0 = rng.uniform(0.4, max(0.41, sx - w - 0.4))
        y0 = rng.uniform(0.4, max(0.41, sy - d - 0.4))
        tables.append(_box_faces(rng, (x0, y0, 0.0), (x0 + w, y0 + d, th), density))
    parts["table"] = np.vstack(tables) if tables else np.empty((0, 3))

    pos, col, lab = [], [], []
    for name, pts in parts.items():
        if pts.shape[0] == 0:
            continue
        tint = np.asarray(_BASE_COLORS[name], float) + rng.normal(0, 10.0, 3)
        pos.append(pts + rng.normal(0, jitter, pts.shape))
        col.append(tint + rng.normal(0, color_noise, pts.shape))
        lab.append(np.full(pts.shape[0], CLASS_INDEX[name]))
    return PointCloud(
        positions=np.vstack(pos),
        colors=np.clip(np.round(np.vstack(col)), 0, 255).astype(np.uint8),
        labels=np.concatenate(lab),
        unit_id=unit_id,
    )


def make_rooms(n_rooms=20, seed=0, **kwargs):
    rng = np.random.default_rng(seed)
    return [make_room(rng, unit_id=f"synthetic_{i:03d}", **kwargs) for i in range(n_rooms)]
