"""Per-point input attributes (21 columns).

Column layout::

    0-2   xyz (meters)          9-11  normal
    3-5   rgb in [0, 1]         12-17 linearity, planarity, sphericity,
    6-8   normalized xyz              omnivariance, anisotropy, surface variation
                                18-20 hsv
"""

from __future__ import annotations

import numpy as np

from .core_io import PointCloud
from .errors import ArgumentError, StateError
from .spatial import KnnIndex

ATTRIBUTE_NAMES = (
    "x", "y", "z",
    "r", "g", "b",
    "nx_norm", "ny_norm", "nz_norm",
    "normal_x", "normal_y", "normal_z",
    "linearity", "planarity", "sphericity", "omnivariance", "anisotropy", "surface_variation",
    "h", "s", "v",
)  # fmt: skip
NUM_ATTRIBUTES = len(ATTRIBUTE_NAMES)
DEFAULT_K_LOCAL = 16
_EPS = 1e-12


def canonical_orientation(vectors):
    """Flip each row so z >= 0; rows with z == 0 use y, then x, as tie-breakers."""
    v = np.array(vectors, dtype=np.float64)
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    flip = (z < 0) | ((z == 0) & (y < 0)) | ((z == 0) & (y == 0) & (x < 0))
    v[flip] *= -1.0
    return v


def eigen_features(eigenvalues):
    """Six shape descriptors from descending eigenvalues ``(l1, l2, l3)`` per row."""
    ev = np.asarray(eigenvalues, dtype=np.float64)
    l1, l2, l3 = ev[:, 0], ev[:, 1], ev[:, 2]
    ok1 = l1 >= _EPS
    total = l1 + l2 + l3
    oks = total >= _EPS
    safe1 = np.where(ok1, l1, 1.0)
    safes = np.where(oks, total, 1.0)
    geom = np.zeros((ev.shape[0], 6))
    geom[:, 0] = np.where(ok1, (l1 - l2) / safe1, 0.0)
    geom[:, 1] = np.where(ok1, (l2 - l3) / safe1, 0.0)
    geom[:, 2] = np.where(ok1, l3 / safe1, 0.0)
    geom[:, 3] = np.cbrt(l1 * l2 * l3)
    geom[:, 4] = np.where(ok1, (l1 - l3) / safe1, 0.0)
    geom[:, 5] = np.where(oks, l3 / safes, 0.0)
    return geom


def local_covariances(positions, neighbors):
    """Population covariance of each point's neighborhood, shape (N, 3, 3)."""
    nb = positions[neighbors]
    centered = nb - nb.mean(axis=1, keepdims=True)
    return np.einsum("nki,nkj->nij", centered, centered) / neighbors.shape[1]


def compute_normals_and_geom(cloud: PointCloud, k_local: int = DEFAULT_K_LOCAL):
    """Normals and eigenvalue features from each point's ``k_local`` nearest neighbors."""
    n = len(cloud)
    if n < 3:
        raise StateError(f"need at least 3 points for local geometry, got {n}")
    if k_local < 3:
        raise ArgumentError("k_local must be at least 3")
    pos = cloud.positions
    nbrs = KnnIndex(pos).query(pos, min(k_local, n))
    normals = np.empty((n, 3))
    geom = np.empty((n, 6))
    step = 65536
    for s in range(0, n, step):
        cov = local_covariances(pos, nbrs[s : s + step])
        w, v = np.linalg.eigh(cov)  # ascending
        w = np.clip(w[:, ::-1], 0.0, None)
        normals[s : s + step] = canonical_orientation(v[:, :, 0])
        geom[s : s + step] = eigen_features(w)
    return normals, geom


def rgb_to_hsv(rgb):
    """Hexcone RGB -> HSV for values in [0, 1]; hue is scaled to [0, 1)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    single = rgb.ndim == 1
    rgb = np.atleast_2d(rgb)
    if np.any(~np.isfinite(rgb)) or rgb.min() < 0 or rgb.max() > 1:
        raise ArgumentError("rgb components must lie in [0, 1]")
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    maxc = rgb.max(axis=1)
    minc = rgb.min(axis=1)
    c = maxc - minc
    v = maxc
    s = np.where(maxc > 0, c / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(c > 0, c, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(c > 0, (h / 6.0) % 1.0, 0.0)
    h = np.where(h >= 1.0, 0.0, h)
    out = np.stack([h, s, v], axis=1)
    return out[0] if single else out


def normalize_xyz(cloud: PointCloud):
    """Per-unit min-max scaling to [0, 1]; a constant coordinate maps to 0."""
    pos = cloud.positions
    lo = pos.min(axis=0)
    span = pos.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (pos - lo) / safe, 0.0)


def build_attributes(cloud: PointCloud, k_local: int = DEFAULT_K_LOCAL) -> PointCloud:
    rgb = cloud.colors.astype(np.float64) / 255.0
    normals, geom = compute_normals_and_geom(cloud, k_local)
    attrs = np.hstack([cloud.positions, rgb, normalize_xyz(cloud), normals, geom, rgb_to_hsv(rgb)])
    return cloud.replace(attributes=attrs)
