"""Multiclass gradient-boosted trees for point classification.

Softmax objective, second-order (Newton) leaf values, depth-wise growth on
pre-binned features. Trees are fitted class by class: tree ``t`` belongs to
class ``t % n_classes`` and gradients are refreshed once per round, so the
total tree count need not be a multiple of the class count.
"""

from __future__ import annotations

import dataclasses
import struct
from typing import List, Optional, Protocol

import numpy as np

from .core_io import NUM_CLASSES
from .errors import ArgumentError, FormatError, StateError

MODEL_MAGIC = b"GSIPGBDT"
MODEL_VERSION = 1
LEAF = -1
_U32_LEAF = 0xFFFFFFFF
_HEADER = struct.Struct("<8sIIIIIf")
_TREE_HEADER = struct.Struct("<II")
_NODE = struct.Struct("<IfIIf")


@dataclasses.dataclass
class GbdtConfig:
    n_trees: int = 128
    max_depth: int = 6
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    min_split_gain: float = 1e-10
    # None selects every distinct value as a candidate threshold (exact greedy)
    max_bins: Optional[int] = 256
    class_weighting: bool = True
    allow_absent_classes: bool = False
    n_classes: int = NUM_CLASSES
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 1:
            raise ArgumentError("n_trees must be >= 0 and max_depth >= 1")
        if self.max_bins is not None and not 2 <= self.max_bins <= 65536:
            raise ArgumentError("max_bins must be in [2, 65536] or None")

    @property
    def n_rounds(self) -> int:
        return -(-self.n_trees // self.n_classes)


@dataclasses.dataclass
class Tree:
    """Flat binary tree; ``x[feature] < threshold`` goes left."""

    class_id: int
    feature: np.ndarray  # int32, LEAF for leaves
    threshold: np.ndarray  # float32
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float32, learning rate already applied

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def n_internal(self):
        return int(np.count_nonzero(self.feature != LEAF))

    @property
    def n_leaves(self):
        return self.n_nodes - self.n_internal

    def depth(self):
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, x32):
        node = np.zeros(x32.shape[0], dtype=np.int64)
        rows = np.arange(x32.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat != LEAF
            if not inner.any():
                return node
            r = rows[inner]
            n = node[inner]
            go_left = x32[r, feat[inner]] < self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])


@dataclasses.dataclass
class GbdtModel:
    trees: List[Tree]
    n_classes: int
    feature_dim: int
    learning_rate: float
    max_depth: int
    class_weights: np.ndarray
    history: list = dataclasses.field(default_factory=list)

    def decision_function(self, features):
        x32 = _as_f32(features, self.feature_dim)
        margin = np.zeros((x32.shape[0], self.n_classes))
        for tree in self.trees:
            margin[:, tree.class_id] += tree.value[tree.apply(x32)]
        return margin

    def predict_proba(self, features):
        return softmax(self.decision_function(features))

    def predict(self, features):
        """Class ids (argmax, ties to the lower id) and per-class softmax scores."""
        margin = self.decision_function(features)
        return np.argmax(margin, axis=1), softmax(margin)


def softmax(margin):
    z = margin - margin.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_f32(features, feature_dim=None):
    x = np.asarray(features)
    if x.ndim != 2:
        raise ArgumentError(f"features must be 2-D, got shape {x.shape}")
    if feature_dim is not None and x.shape[1] != feature_dim:
        raise ArgumentError(f"model expects {feature_dim} features, got {x.shape[1]}")
    x32 = np.ascontiguousarray(x, dtype=np.float32)
    if not np.all(np.isfinite(x32)):
        raise StateError("features contain non-finite values")
    return x32


def class_weights(labels, n_classes=NUM_CLASSES):
    """Inverse-frequency weights ``T / (n_classes * count_c)``; absent classes get 0."""
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    w = np.zeros(n_classes)
    present = counts > 0
    w[present] = labels.size / (n_classes * counts[present])
    return w


def candidate_thresholds(column, max_bins):
    """Sorted float32 thresholds; splitting at ``t`` sends ``x < t`` left."""
    uniq = np.unique(column)
    cand = uniq[1:]
    if max_bins is not None and cand.size > max_bins - 1:
        pick = np.linspace(0, cand.size - 1, max_bins - 1)
        cand = np.unique(cand[np.round(pick).astype(np.int64)])
    return cand


class _Binned:
    def __init__(self, x32, max_bins):
        self.n, self.d = x32.shape
        self.edges = [candidate_thresholds(x32[:, f], max_bins) for f in range(self.d)]
        self.n_bins = np.array([e.size + 1 for e in self.edges])
        self.stride = int(self.n_bins.max())
        dtype = np.uint8 if self.stride <= 256 else np.uint16 if self.stride <= 65536 else np.uint32
        # column-major: one contiguous row vector per feature
        self.bins = np.empty((self.d, self.n), dtype=dtype)
        for f in range(self.d):
            self.bins[f] = np.searchsorted(self.edges[f], x32[:, f], side="right")
        # bin j is a usable split point iff j < number of edges
        self.valid = np.arange(self.stride)[None, :] < (self.n_bins - 1)[:, None]

    def histograms(self, rows, slot, n_slots, g, h):
        size = n_slots * self.stride
        hg = np.empty((self.d, n_slots, self.stride))
        hh = np.empty((self.d, n_slots, self.stride))
        base = slot * self.stride
        gr, hr = g[rows], h[rows]
        for f in range(self.d):
            key = base + self.bins[f, rows]
            hg[f] = np.bincount(key, weights=gr, minlength=size).reshape(n_slots, self.stride)
            hh[f] = np.bincount(key, weights=hr, minlength=size).reshape(n_slots, self.stride)
        return hg.transpose(1, 0, 2), hh.transpose(1, 0, 2)  # (slot, feature, bin)


def _leaf_value(g, h, cfg):
    return -g / (h + cfg.reg_lambda)


def _grow_tree(binned: _Binned, g, h, cfg: GbdtConfig, class_id: int):
    lam = cfg.reg_lambda
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(0)
        right.append(0)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    row_node = np.zeros(binned.n, dtype=np.int64)
    frontier = [root]
    sums = {root: (float(g.sum()), float(h.sum()))}

    for _ in range(cfg.max_depth):
        cand = [nd for nd in frontier if sums[nd][1] >= 2 * cfg.min_child_weight]
        if not cand:
            break
        slot_of = np.full(len(feature), -1, dtype=np.int64)
        slot_of[cand] = np.arange(len(cand))
        slot_all = slot_of[row_node]
        rows = np.flatnonzero(slot_all >= 0)
        hg, hh = binned.histograms(rows, slot_all[rows], len(cand), g, h)
        gl = np.cumsum(hg, axis=2)
        hl = np.cumsum(hh, axis=2)
        gt = np.array([sums[nd][0] for nd in cand])[:, None, None]
        ht = np.array([sums[nd][1] for nd in cand])[:, None, None]
        gr, hr = gt - gl, ht - hl
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - gt * gt / (ht + lam)
        ok = binned.valid[None] & (hl >= cfg.min_child_weight) & (hr >= cfg.min_child_weight)
        gain = np.where(ok, gain, -np.inf)
        flat = gain.reshape(len(cand), -1)
        best = np.argmax(flat, axis=1)  # first max: lower feature, then lower threshold
        next_frontier = []
        go_right_bin = {}
        for s, nd in enumerate(cand):
            b = int(best[s])
            if not flat[s, b] > cfg.min_split_gain:
                continue
            f, j = divmod(b, binned.stride)
            lc, rc = new_node(), new_node()
            feature[nd] = f
            threshold[nd] = float(binned.edges[f][j])
            left[nd], right[nd] = lc, rc
            sums[lc] = (float(gl[s, f, j]), float(hl[s, f, j]))
            sums[rc] = (float(gr[s, f, j]), float(hr[s, f, j]))
            go_right_bin[nd] = (f, j, lc, rc)
            next_frontier += [lc, rc]
        if not go_right_bin:
            break
        for nd, (f, j, lc, rc) in go_right_bin.items():
            members = np.flatnonzero(row_node == nd)
            to_left = binned.bins[f, members] <= j
            row_node[members] = np.where(to_left, lc, rc)
        frontier = next_frontier

    for nd in range(len(feature)):
        if feature[nd] == LEAF:
            gs, hs = sums[nd]
            value[nd] = cfg.learning_rate * _leaf_value(gs, hs, cfg)
    tree = Tree(
        class_id=class_id,
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float32),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float32),
    )
    return tree, row_node


def log_loss(margin, labels, weights=None):
    z = margin - margin.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    nll = -logp[np.arange(labels.size), labels]
    if weights is None:
        return float(nll.mean())
    return float((weights * nll).sum() / weights.sum())


def fit(features, labels, config: GbdtConfig = None) -> GbdtModel:
    """Boost ``config.n_trees`` softmax trees.

    ``model.history`` records the weighted training log-loss before the first
    round and after every round.
    """
    cfg = config or GbdtConfig()
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size == 0:
        raise ArgumentError("training set is empty")
    x32 = _as_f32(features)
    if x32.shape[0] != labels.size:
        raise ArgumentError(f"{x32.shape[0]} feature rows but {labels.size} labels")
    if labels.min() < 0 or labels.max() >= cfg.n_classes:
        raise ArgumentError(f"labels must lie in 0..{cfg.n_classes - 1}")
    counts = np.bincount(labels, minlength=cfg.n_classes)
    if not cfg.allow_absent_classes and (counts == 0).any():
        missing = np.flatnonzero(counts == 0).tolist()
        raise ArgumentError(f"classes {missing} absent from training data (set allow_absent_classes)")

    cw = class_weights(labels, cfg.n_classes) if cfg.class_weighting else np.ones(cfg.n_classes)
    w = cw[labels]
    onehot = np.zeros((labels.size, cfg.n_classes))
    onehot[np.arange(labels.size), labels] = 1.0
    binned = _Binned(x32, cfg.max_bins)
    margin = np.zeros((labels.size, cfg.n_classes))
    trees = []
    history = [log_loss(margin, labels, w)]
    for t0 in range(0, cfg.n_trees, cfg.n_classes):
        p = softmax(margin)
        grad = w[:, None] * (p - onehot)
        hess = w[:, None] * np.maximum(p * (1.0 - p), 1e-16)
        for c in range(min(cfg.n_classes, cfg.n_trees - t0)):
            tree, leaf_of_row = _grow_tree(binned, grad[:, c], hess[:, c], cfg, c)
            margin[:, c] += tree.value[leaf_of_row]
            trees.append(tree)
        history.append(log_loss(margin, labels, w))
    return GbdtModel(
        trees=trees,
        n_classes=cfg.n_classes,
        feature_dim=x32.shape[1],
        learning_rate=cfg.learning_rate,
        max_depth=cfg.max_depth,
        class_weights=cw,
        history=history,
    )


def predict(model: GbdtModel, features):
    return model.predict(features)


def count_parameters(model_or_trees) -> int:
    """Two per internal node (feature, threshold) plus one per leaf."""
    trees = model_or_trees.trees if isinstance(model_or_trees, GbdtModel) else model_or_trees
    return sum(2 * t.n_internal + t.n_leaves for t in trees)


def full_tree(depth: int, class_id: int = 0, feature: int = 0) -> Tree:
    """A complete binary tree of the given depth (used for parameter accounting)."""
    n_internal = 2**depth - 1
    n = 2 ** (depth + 1) - 1
    idx = np.arange(n)
    inner = idx < n_internal
    return Tree(
        class_id=class_id,
        feature=np.where(inner, feature, LEAF).astype(np.int32),
        threshold=np.zeros(n, dtype=np.float32),
        left=np.where(inner, 2 * idx + 1, 0).astype(np.int32),
        right=np.where(inner, 2 * idx + 2, 0).astype(np.int32),
        value=np.zeros(n, dtype=np.float32),
    )


def save_model(model: GbdtModel, path):
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MODEL_MAGIC,
                MODEL_VERSION,
                model.n_classes,
                model.feature_dim,
                len(model.trees),
                model.max_depth,
                model.learning_rate,
            )
        )
        fh.write(np.asarray(model.class_weights, dtype="<f4").tobytes())
        for tree in model.trees:
            fh.write(_TREE_HEADER.pack(tree.class_id, tree.n_nodes))
            rec = np.zeros(
                tree.n_nodes,
                dtype=[("f", "<u4"), ("t", "<f4"), ("l", "<u4"), ("r", "<u4"), ("v", "<f4")],
            )
            rec["f"] = np.where(tree.feature == LEAF, _U32_LEAF, tree.feature).astype(np.uint32)
            rec["t"] = tree.threshold
            rec["l"] = tree.left
            rec["r"] = tree.right
            rec["v"] = tree.value
            fh.write(rec.tobytes())


def load_model(path) -> GbdtModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_classes, dim, n_trees, max_depth, lr = _HEADER.unpack_from(blob)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    off = _HEADER.size
    try:
        cw = np.frombuffer(blob, dtype="<f4", count=n_classes, offset=off).astype(np.float64)
        off += 4 * n_classes
        trees = []
        for _ in range(n_trees):
            class_id, n_nodes = _TREE_HEADER.unpack_from(blob, off)
            off += _TREE_HEADER.size
            rec = np.frombuffer(
                blob,
                dtype=[("f", "<u4"), ("t", "<f4"), ("l", "<u4"), ("r", "<u4"), ("v", "<f4")],
                count=n_nodes,
                offset=off,
            )
            off += _NODE.size * n_nodes
            feat = np.where(rec["f"] == _U32_LEAF, LEAF, rec["f"]).astype(np.int32)
            tree = Tree(
                class_id=int(class_id),
                feature=feat,
                threshold=rec["t"].astype(np.float32),
                left=rec["l"].astype(np.int32),
                right=rec["r"].astype(np.int32),
                value=rec["v"].astype(np.float32),
            )
            _validate_tree(tree, n_classes, dim, path)
            trees.append(tree)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated or corrupt model ({exc})") from None
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")
    return GbdtModel(trees, int(n_classes), int(dim), float(lr), int(max_depth), cw)


def _validate_tree(tree, n_classes, dim, path):
    inner = tree.feature != LEAF
    if tree.class_id >= n_classes:
        raise FormatError(f"{path}: tree class {tree.class_id} out of range")
    if np.any(tree.feature[inner] >= dim):
        raise FormatError(f"{path}: split feature out of range")
    kids = np.concatenate([tree.left[inner], tree.right[inner]])
    if kids.size and (kids.min() <= 0 or kids.max() >= tree.n_nodes):
        raise FormatError(f"{path}: child offset out of range")


class PointClassifier(Protocol):
    """What the pipeline needs from a classifier."""

    def fit(self, features, labels) -> "PointClassifier": ...

    def predict(self, features) -> np.ndarray: ...


class GbdtClassifier:
    def __init__(self, config: GbdtConfig = None, **overrides):
        self.config = dataclasses.replace(config or GbdtConfig(), **overrides)
        self.model: Optional[GbdtModel] = None

    def fit(self, features, labels):
        self.model = fit(features, labels, self.config)
        return self

    def predict(self, features):
        if self.model is None:
            raise StateError("classifier is not fitted")
        return self.model.predict(features)[0]


class SklearnGbdtClassifier:
    """scikit-learn's histogram GBDT behind the same interface, for cross-checks."""

    def __init__(self, n_trees=128, max_depth=6, learning_rate=0.3, class_weighting=True, seed=0):
        self.params = dict(n_trees=n_trees, max_depth=max_depth, learning_rate=learning_rate)
        self.class_weighting = class_weighting
        self.seed = seed
        self.model = None

    def fit(self, features, labels):
        from sklearn.ensemble import HistGradientBoostingClassifier

        labels = np.asarray(labels, dtype=np.int64)
        n_classes = max(1, np.unique(labels).size)
        self.model = HistGradientBoostingClassifier(
            max_iter=max(1, self.params["n_trees"] // n_classes),
            max_depth=self.params["max_depth"],
            learning_rate=self.params["learning_rate"],
            early_stopping=False,
            class_weight="balanced" if self.class_weighting else None,
            random_state=self.seed,
        )
        self.model.fit(np.asarray(features, dtype=np.float32), labels)
        return self

    def predict(self, features):
        return self.model.predict(np.asarray(features, dtype=np.float32)).astype(np.int64)


CLASSIFIERS = {"gbdt": GbdtClassifier, "sklearn": SklearnGbdtClassifier}


def make_classifier(name="gbdt", **kwargs) -> PointClassifier:
    try:
        return CLASSIFIERS[name](**kwargs)
    except KeyError:
        raise ArgumentError(f"unknown classifier {name!r}; choose from {sorted(CLASSIFIERS)}") from None
