"""Unsupervised hop-based encoder/decoder feature extraction.

Each encoder hop samples centers at random, gathers their K nearest neighbors
in the previous level, appends a relative positional code to every neighbor
feature, max-pools over the neighborhood and standardizes the pooled matrix
with one scalar mean and one scalar std. The decoder walks back up the hops by
inverse-distance interpolation and concatenates each level's own features.

Nothing here reads labels.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .core_io import PointCloud
from .errors import ArgumentError, FormatError, StateError
from .spatial import KnnIndex, SampleSpec, random_sample

POSENC_DIM = 10
STD_EPS = 1e-8
_GATHER_BUDGET = 4_000_000  # floats per gather block


@dataclasses.dataclass(frozen=True)
class HopConfig:
    num_hops: int = 4
    k_neighbors: int = 64
    sample_ratios: tuple = (0.25, 0.25, 0.5, 0.5)
    interp_neighbors: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sample_ratios", tuple(float(r) for r in self.sample_ratios))
        if self.num_hops < 1:
            raise ArgumentError("num_hops must be at least 1")
        if len(self.sample_ratios) != self.num_hops:
            raise ArgumentError(f"need {self.num_hops} sample ratios, got {len(self.sample_ratios)}")
        if any(not 0 < r <= 1 for r in self.sample_ratios):
            raise ArgumentError("sample ratios must lie in (0, 1]")
        if self.k_neighbors < 1 or self.interp_neighbors < 1:
            raise ArgumentError("k_neighbors and interp_neighbors must be >= 1")

    def hop_seed(self, hop_index: int, unit_index: int = 0) -> int:
        ss = np.random.SeedSequence([int(self.seed), int(unit_index), int(hop_index)])
        return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclasses.dataclass(frozen=True)
class StandardizationParams:
    """Per-hop (mean, std) pairs: the extractor's only stored parameters."""

    means: tuple
    stds: tuple

    def __len__(self):
        return len(self.means)

    @property
    def parameter_count(self) -> int:
        return len(self.means) + len(self.stds)

    def save(self, path):
        lines = ["# greenseg extractor standardization (one mean and std per hop)"]
        for h, (m, s) in enumerate(zip(self.means, self.stds), start=1):
            lines.append(f"hop{h}.mean={float(m)!r}")
            lines.append(f"hop{h}.std={float(s)!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "StandardizationParams":
        values = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise FormatError(f"{path}: expected key=value, got {raw!r}")
            values[key.strip()] = float(val)
        hops = sorted({int(k[3:].split(".")[0]) for k in values if k.startswith("hop")})
        if hops != list(range(1, len(hops) + 1)) or not hops:
            raise FormatError(f"{path}: hop indices must run 1..H")
        try:
            means = tuple(values[f"hop{h}.mean"] for h in hops)
            stds = tuple(values[f"hop{h}.std"] for h in hops)
        except KeyError as exc:
            raise FormatError(f"{path}: missing {exc.args[0]}") from None
        return cls(means, stds)


@dataclasses.dataclass
class HopLevel:
    indices: np.ndarray  # rows of the previous level that became centers
    positions: np.ndarray
    features: np.ndarray
    mean: float
    std: float


@dataclasses.dataclass
class HopPyramid:
    positions: np.ndarray  # full-resolution unit points
    attributes: np.ndarray
    hops: List[HopLevel]
    decoded: Optional[np.ndarray] = None

    @property
    def params(self) -> StandardizationParams:
        return StandardizationParams(tuple(h.mean for h in self.hops), tuple(h.std for h in self.hops))

    @property
    def widths(self):
        return [self.attributes.shape[1]] + [h.features.shape[1] for h in self.hops]

    @property
    def sizes(self):
        return [self.positions.shape[0]] + [h.features.shape[0] for h in self.hops]


def positional_encode(p_center, p_neighbor):
    """``center ++ neighbor ++ (center - neighbor) ++ |center - neighbor|``; broadcasts."""
    c = np.asarray(p_center, dtype=np.float64)
    nb = np.asarray(p_neighbor, dtype=np.float64)
    c, nb = np.broadcast_arrays(c, nb)
    diff = c - nb
    dist = np.sqrt((diff * diff).sum(axis=-1, keepdims=True))
    return np.concatenate([c, nb, diff, dist], axis=-1)


def pool_neighbors(points, feats, centers, k):
    """Max over each center's ``k`` nearest neighbors of ``feats ++ positional code``."""
    points = np.asarray(points, dtype=np.float64)
    feats = np.asarray(feats, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.int64)
    index = KnnIndex(points)
    m = centers.size
    width = feats.shape[1] + POSENC_DIM
    out = np.empty((m, width))
    step = max(1, _GATHER_BUDGET // (k * width))
    for s in range(0, m, step):
        cidx = centers[s : s + step]
        cpos = points[cidx]
        nbr = index.query(cpos, k)
        code = positional_encode(cpos[:, None, :], points[nbr])
        out[s : s + step, : feats.shape[1]] = feats[nbr].max(axis=1)
        out[s : s + step, feats.shape[1] :] = code.max(axis=1)
    return out


def standardize(pooled, mean=None, std=None):
    """Scalar standardization; returns ``(standardized, mean, std)``."""
    if mean is None or std is None:
        mean = float(pooled.mean())
        std = float(pooled.std())
    return (pooled - mean) / max(std, STD_EPS), mean, std


def _check_input(points, feats):
    points = np.asarray(points, dtype=np.float64)
    feats = np.asarray(feats, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise StateError("encoder hop needs at least one point")
    if feats.shape[0] != points.shape[0]:
        raise StateError(f"{points.shape[0]} points but {feats.shape[0]} feature rows")
    if not (np.all(np.isfinite(points)) and np.all(np.isfinite(feats))):
        raise StateError("encoder input contains non-finite values")
    return points, feats


def encoder_sample_and_pool(points, feats, config: HopConfig, hop_index: int, unit_index: int = 0):
    """Steps before standardization: returns ``(center indices, pooled)``."""
    points, feats = _check_input(points, feats)
    spec = SampleSpec(config.sample_ratios[hop_index], config.hop_seed(hop_index, unit_index))
    centers = random_sample(points.shape[0], spec)
    return centers, pool_neighbors(points, feats, centers, config.k_neighbors)


def encoder_hop(points, feats, config: HopConfig, hop_index: int, params=None, unit_index: int = 0):
    """One encoder hop (``hop_index`` counts from 0).

    Standardization statistics are taken from ``params`` when given (test
    time), otherwise computed from this hop's pooled matrix.

    Returns ``(sampled points, features, mean, std, center indices)``.
    """
    centers, pooled = encoder_sample_and_pool(points, feats, config, hop_index, unit_index)
    if params is not None:
        mean, std = params.means[hop_index], params.stds[hop_index]
    else:
        mean = std = None
    out, mean, std = standardize(pooled, mean, std)
    return np.asarray(points, dtype=np.float64)[centers], out, mean, std, centers


def _unit_arrays(unit: PointCloud):
    if unit.attributes is None:
        raise StateError(f"unit {unit.unit_id!r} has no attributes")
    return unit.positions, np.asarray(unit.attributes, dtype=np.float64)


def encode(unit: PointCloud, config: HopConfig = HopConfig(), params=None, unit_index: int = 0) -> HopPyramid:
    """Chain the encoder hops over one unit."""
    positions, feats = _unit_arrays(unit)
    if params is not None and len(params) != config.num_hops:
        raise StateError(f"params hold {len(params)} hops, config has {config.num_hops}")
    hops = []
    pts, f = positions, feats
    for h in range(config.num_hops):
        pts, f, mean, std, centers = encoder_hop(pts, f, config, h, params, unit_index)
        hops.append(HopLevel(centers, pts, f, mean, std))
    return HopPyramid(positions=positions, attributes=feats, hops=hops)


class _Moments:
    """Pooled count/mean/M2 merged in a fixed order (Chan et al.)."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, values):
        n_b = values.size
        if n_b == 0:
            return
        mean_b = float(values.mean())
        m2_b = float(((values - mean_b) ** 2).sum())
        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean += delta * n_b / n
        self.m2 += m2_b + delta * delta * self.n * n_b / n
        self.n = n

    @property
    def std(self):
        return float(np.sqrt(self.m2 / self.n)) if self.n else 0.0


def _map(fn, items, workers):
    if workers is None or workers <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def fit_encode(units: Sequence[PointCloud], config: HopConfig = HopConfig(), workers=None):
    """Encode training units hop by hop with statistics pooled over all of them.

    Returns ``(pyramids, params)``. Results do not depend on ``workers``.
    """
    units = list(units)
    if not units:
        raise ArgumentError("no training units")
    arrays = [_unit_arrays(u) for u in units]
    levels = [[] for _ in units]
    current = [(pos, f) for pos, f in arrays]
    means, stds = [], []
    for h in range(config.num_hops):
        pooled = _map(
            lambda i, pts, f: encoder_sample_and_pool(pts, f, config, h, i),
            [(i, pts, f) for i, (pts, f) in enumerate(current)],
            workers,
        )
        moments = _Moments()
        for _, p in pooled:
            moments.add(p)
        mean, std = moments.mean, moments.std
        means.append(mean)
        stds.append(std)
        nxt = []
        for i, (centers, p) in enumerate(pooled):
            out, _, _ = standardize(p, mean, std)
            pts = current[i][0][centers]
            levels[i].append(HopLevel(centers, pts, out, mean, std))
            nxt.append((pts, out))
        current = nxt
    pyramids = [HopPyramid(pos, f, lv) for (pos, f), lv in zip(arrays, levels)]
    return pyramids, StandardizationParams(tuple(means), tuple(stds))


def interpolate(coarse_positions, coarse_feats, fine_positions, k: int = 3):
    """Inverse-distance interpolation of coarse features onto fine positions.

    Uses ``min(k, n_coarse)`` neighbors; a fine point that coincides with a
    coarse point copies that point's feature row unchanged.
    """
    coarse_feats = np.asarray(coarse_feats)
    kk = min(k, len(coarse_positions))
    idx, dist = KnnIndex(coarse_positions).query(fine_positions, kk, return_distance=True)
    exact = dist[:, 0] == 0.0
    safe = np.where(dist > 0, dist, 1.0)
    w = 1.0 / safe
    w /= w.sum(axis=1, keepdims=True)
    out = np.einsum("mk,mkd->md", w, coarse_feats[idx])
    out[exact] = coarse_feats[idx[exact, 0]]
    return out


def decode(pyramid: HopPyramid, positions, config: HopConfig = HopConfig()) -> np.ndarray:
    """Full-resolution features: interpolated coarse levels ++ each level's own features.

    Column order is deepest hop first and the input attributes last.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != pyramid.positions.shape or not np.array_equal(positions, pyramid.positions):
        raise StateError("positions do not match the encoded pyramid")
    if not pyramid.hops:
        raise StateError("pyramid has no encoded hops")
    level_pos = [pyramid.positions] + [h.positions for h in pyramid.hops]
    level_feat = [pyramid.attributes] + [h.features for h in pyramid.hops]
    feats = level_feat[-1]
    for lvl in range(len(level_pos) - 2, -1, -1):
        up = interpolate(level_pos[lvl + 1], feats, level_pos[lvl], config.interp_neighbors)
        feats = np.hstack([up, level_feat[lvl]])
    pyramid.decoded = feats
    return feats


def quantize_features(feats, precision: str = "f32"):
    dtypes = {"f32": np.float32, "f16": np.float16}
    if precision not in dtypes:
        raise ArgumentError(f"precision must be one of {sorted(dtypes)}")
    arr = np.asarray(feats)
    if not np.all(np.isfinite(arr)):
        raise StateError("cannot quantize non-finite features")
    return arr.astype(dtypes[precision])


def extract_units(units, config: HopConfig = HopConfig(), params=None, precision="f32", workers=None):
    """Encode+decode a batch of units.

    Without ``params`` the statistics are fitted over ``units`` (training);
    with ``params`` each unit is encoded with the stored statistics.
    Returns ``(feature matrices, params)``.
    """
    units = list(units)
    if params is None:
        pyramids, params = fit_encode(units, config, workers)
    else:
        pyramids = _map(lambda i, u: encode(u, config, params, i), list(enumerate(units)), workers)
    feats = _map(lambda p: quantize_features(decode(p, p.positions, config), precision), [(p,) for p in pyramids], workers)
    return feats, params


def output_width(input_dim: int, num_hops: int) -> int:
    return sum(input_dim + POSENC_DIM * h for h in range(num_hops + 1))
