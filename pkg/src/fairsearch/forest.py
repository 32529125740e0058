"""From-scratch CART trees and a bagged random-forest classifier.

The hyperparameter surface is exactly the tuning grid used by the search
module. Induction is deterministic given a seed: bootstrap draws and
per-node feature subsets come from per-tree generator streams, split ties
resolve to the lowest feature index and lowest threshold, and vote ties
resolve to class 0, so refits are bit-identical across platforms and
parallel schedules.

The hot loops (node splitting, tree traversal) are JIT-compiled; the
recursive :class:`TreeNode` view is materialized only on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ParameterError, ShapeError, TrainingError
from .rng import rng_from

N_ESTIMATORS_DOMAIN = (10, 20, 50, 80, 100, 150, 200)
CRITERION_DOMAIN = ("gini", "entropy", "log_loss")
MAX_DEPTH_DOMAIN = (None, 10, 15, 20, 30, 40, 50)
MIN_SAMPLES_SPLIT_DOMAIN = (2, 3, 4)
MAX_FEATURES_DOMAIN = ("sqrt", "log2", "all")


@dataclass(frozen=True)
class ForestHyperparams:
    """Forest configuration; defaults are the conventional untuned setup.

    Any structurally valid value is accepted here (the search genome
    separately restricts genes to its tuning-grid domains).
    """

    n_estimators: int = 100
    criterion: str = "gini"
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: str = "sqrt"

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ParameterError(f"n_estimators={self.n_estimators!r} must be >= 1")
        if self.criterion not in CRITERION_DOMAIN:
            raise ParameterError(f"criterion={self.criterion!r} not in {CRITERION_DOMAIN}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ParameterError(f"max_depth={self.max_depth!r} must be None or >= 1")
        if self.min_samples_split < 2:
            raise ParameterError(
                f"min_samples_split={self.min_samples_split!r} must be >= 2"
            )
        if self.max_features not in MAX_FEATURES_DOMAIN:
            raise ParameterError(
                f"max_features={self.max_features!r} not in {MAX_FEATURES_DOMAIN}"
            )


@dataclass
class TreeNode:
    """Either an internal split (feature, threshold, children) or a leaf
    holding weighted class counts."""

    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: tuple[float, float] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def impurity(counts, criterion: str) -> float:
    """Node impurity from a (class0, class1) count pair. ``log_loss`` is
    the same function as ``entropy`` for two-class splits."""
    if criterion not in CRITERION_DOMAIN:
        raise ParameterError(f"unknown criterion {criterion!r}")
    c0, c1 = float(counts[0]), float(counts[1])
    if c0 < 0 or c1 < 0 or c0 + c1 == 0:
        raise ParameterError(f"invalid class counts {counts!r}")
    total = c0 + c1
    p0, p1 = c0 / total, c1 / total
    if criterion == "gini":
        return 1.0 - (p0 * p0 + p1 * p1)
    out = 0.0
    for p in (p0, p1):
        if p > 0.0:
            out -= p * math.log2(p)
    return out


@njit(cache=True)
def _impurity_sum(w0, w1, use_entropy):
    # (w0 + w1) * impurity; the common total cancels out of comparisons
    wt = w0 + w1
    if wt <= 0.0:
        return 0.0
    if use_entropy:
        out = 0.0
        if w0 > 0.0:
            out -= w0 * np.log2(w0 / wt)
        if w1 > 0.0:
            out -= w1 * np.log2(w1 / wt)
        return out
    return wt - (w0 * w0 + w1 * w1) / wt


@njit(cache=True)
def _build_tree(
    x, y, w, sample_idx, max_depth, min_samples_split, n_candidates, use_entropy,
    rand, feat_out, thr_out, left_out, right_out, c0_out, c1_out,
):
    """Iterative depth-first CART induction over sample_idx; returns the
    node count. Nodes land in preorder; -1 marks leaves in feat_out."""
    d = x.shape[1]
    max_nodes = feat_out.shape[0]
    stack_start = np.empty(max_nodes, np.int64)
    stack_end = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    stack_parent = np.empty(max_nodes, np.int64)
    stack_isleft = np.empty(max_nodes, np.uint8)
    stack_start[0] = 0
    stack_end[0] = sample_idx.shape[0]
    stack_depth[0] = 0
    stack_parent[0] = -1
    stack_isleft[0] = 0
    sp = 1
    n_nodes = 0
    rp = 0
    feat_pool = np.empty(d, np.int64)
    while sp > 0:
        sp -= 1
        start = stack_start[sp]
        end = stack_end[sp]
        depth = stack_depth[sp]
        parent = stack_parent[sp]
        node_id = n_nodes
        n_nodes += 1
        if parent >= 0:
            if stack_isleft[sp] == 1:
                left_out[parent] = node_id
            else:
                right_out[parent] = node_id
        w0 = 0.0
        w1 = 0.0
        for i in range(start, end):
            r = sample_idx[i]
            if y[r] == 1:
                w1 += w[r]
            else:
                w0 += w[r]
        c0_out[node_id] = w0
        c1_out[node_id] = w1
        feat_out[node_id] = -1
        thr_out[node_id] = 0.0
        left_out[node_id] = -1
        right_out[node_id] = -1
        if w0 == 0.0 or w1 == 0.0:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if w0 + w1 < min_samples_split:
            continue

        if n_candidates < d:
            # partial Fisher-Yates over the feature pool
            for f in range(d):
                feat_pool[f] = f
            for j in range(n_candidates):
                u = rand[rp]
                rp += 1
                pick = j + int(u * (d - j))
                if pick >= d:
                    pick = d - 1
                tmp = feat_pool[j]
                feat_pool[j] = feat_pool[pick]
                feat_pool[pick] = tmp
            chosen = np.sort(feat_pool[:n_candidates])
        else:
            chosen = np.arange(d)

        parent_imp = _impurity_sum(w0, w1, use_entropy)
        best_score = parent_imp - 1e-12
        best_feat = -1
        best_thr = 0.0
        m = end - start
        vals = np.empty(m, np.float64)
        for jj in range(chosen.shape[0]):
            f = chosen[jj]
            for i in range(m):
                vals[i] = x[sample_idx[start + i], f]
            order = np.argsort(vals)
            lw0 = 0.0
            lw1 = 0.0
            prev = vals[order[0]]
            for i in range(m):
                v = vals[order[i]]
                if v != prev:
                    score = _impurity_sum(lw0, lw1, use_entropy) + _impurity_sum(
                        w0 - lw0, w1 - lw1, use_entropy
                    )
                    if score < best_score:
                        best_score = score
                        best_feat = f
                        best_thr = 0.5 * (prev + v)
                    prev = v
                r = sample_idx[start + order[i]]
                if y[r] == 1:
                    lw1 += w[r]
                else:
                    lw0 += w[r]
        if best_feat < 0:
            continue

        lo = start
        hi = end - 1
        while lo <= hi:
            if x[sample_idx[lo], best_feat] <= best_thr:
                lo += 1
            else:
                tmp2 = sample_idx[lo]
                sample_idx[lo] = sample_idx[hi]
                sample_idx[hi] = tmp2
                hi -= 1
        feat_out[node_id] = best_feat
        thr_out[node_id] = best_thr
        stack_start[sp] = lo
        stack_end[sp] = end
        stack_depth[sp] = depth + 1
        stack_parent[sp] = node_id
        stack_isleft[sp] = 0
        sp += 1
        stack_start[sp] = start
        stack_end[sp] = lo
        stack_depth[sp] = depth + 1
        stack_parent[sp] = node_id
        stack_isleft[sp] = 1
        sp += 1
    return n_nodes


@njit(cache=True)
def _add_tree_votes(x, feat, thr, left, right, leaf_one, votes):
    for i in range(x.shape[0]):
        node = 0
        while feat[node] >= 0:
            if x[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        votes[i] += leaf_one[node]


@dataclass
class FlatTree:
    """Array form of one fitted tree (preorder; feature -1 marks leaves)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count0: np.ndarray
    count1: np.ndarray

    def to_node(self) -> TreeNode:
        nodes = [TreeNode() for _ in range(self.feature.shape[0])]
        for i, node in enumerate(nodes):
            if self.feature[i] >= 0:
                node.feature = int(self.feature[i])
                node.threshold = float(self.threshold[i])
                node.left = nodes[self.left[i]]
                node.right = nodes[self.right[i]]
            else:
                node.counts = (float(self.count0[i]), float(self.count1[i]))
        return nodes[0]

    @property
    def leaf_votes(self) -> np.ndarray:
        return (self.count1 > self.count0).astype(np.int64)


def _n_candidates(max_features: str, d: int) -> int:
    if max_features == "sqrt":
        return max(1, int(math.floor(math.sqrt(d))))
    if max_features == "log2":
        return max(1, int(math.floor(math.log2(d))))
    return d


def _as_training_arrays(x, y):
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.int8))
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"incompatible training shapes {x.shape} and {y.shape}")
    return x, y


def _fit_flat_tree(x, y, weights, hp: ForestHyperparams, rng) -> FlatTree:
    sample_idx = np.flatnonzero(weights > 0).astype(np.int64)
    if sample_idx.size == 0:
        raise TrainingError("no rows with positive weight")
    k = _n_candidates(hp.max_features, x.shape[1])
    rand = rng.random((2 * sample_idx.size + 2) * k) if k < x.shape[1] else np.empty(0)
    max_nodes = 2 * sample_idx.size + 1
    feat = np.empty(max_nodes, np.int64)
    thr = np.empty(max_nodes, np.float64)
    left = np.empty(max_nodes, np.int64)
    right = np.empty(max_nodes, np.int64)
    c0 = np.empty(max_nodes, np.float64)
    c1 = np.empty(max_nodes, np.float64)
    depth = -1 if hp.max_depth is None else hp.max_depth
    n = _build_tree(
        x, y, np.asarray(weights, dtype=np.float64), sample_idx, depth,
        float(hp.min_samples_split), k, hp.criterion != "gini", rand,
        feat, thr, left, right, c0, c1,
    )
    return FlatTree(feat[:n].copy(), thr[:n].copy(), left[:n].copy(),
                    right[:n].copy(), c0[:n].copy(), c1[:n].copy())


def fit_tree(x, y, weights, hp: ForestHyperparams, seed: int) -> TreeNode:
    """Fit one CART tree on multiplicty-weighted rows; deterministic per seed."""
    x, y = _as_training_arrays(x, y)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != y.shape:
        raise ShapeError("weights length must match rows")
    return _fit_flat_tree(x, y, weights, hp, rng_from(seed, "tree")).to_node()


@dataclass
class ForestModel:
    """Immutable fitted ensemble; prediction is a pure function of (model, row)."""

    flat_trees: list[FlatTree] = field(repr=False)
    hyperparams: ForestHyperparams = field(default_factory=ForestHyperparams)
    n_features_seen: int = 0

    @property
    def trees(self) -> list[TreeNode]:
        return [t.to_node() for t in self.flat_trees]


def fit_forest(x, y, hp: ForestHyperparams, seed: int) -> ForestModel:
    """Bagged ensemble of ``hp.n_estimators`` trees, each on a bootstrap
    sample of size n drawn from a per-tree stream derived from (seed, t)."""
    x, y = _as_training_arrays(x, y)
    n = y.shape[0]
    if n < 2:
        raise TrainingError(f"need at least 2 rows, got {n}")
    if (y == y[0]).all():
        raise TrainingError("training labels contain a single class")
    trees = []
    for t in range(hp.n_estimators):
        rng = rng_from(seed, "tree", t)
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
        trees.append(_fit_flat_tree(x, y, weights, hp, rng))
    return ForestModel(flat_trees=trees, hyperparams=hp, n_features_seen=x.shape[1])


def predict(model: ForestModel, x) -> np.ndarray:
    """Majority vote over trees (each tree votes its leaf majority); all
    ties resolve to class 0."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != model.n_features_seen:
        raise ShapeError(
            f"expected {model.n_features_seen} feature columns, got {x.shape}"
        )
    votes = np.zeros(x.shape[0], np.int64)
    for tree in model.flat_trees:
        _add_tree_votes(x, tree.feature, tree.threshold, tree.left, tree.right,
                        tree.leaf_votes, votes)
    return (2 * votes > len(model.flat_trees)).astype(np.int8)


def dump_model(model: ForestModel) -> str:
    """Debugging JSON of the full ensemble; thresholds carry 17 significant
    digits so reload is bit-exact."""
    import json

    payload = {
        "hyperparams": {
            "n_estimators": model.hyperparams.n_estimators,
            "criterion": model.hyperparams.criterion,
            "max_depth": model.hyperparams.max_depth,
            "min_samples_split": model.hyperparams.min_samples_split,
            "max_features": model.hyperparams.max_features,
        },
        "n_features_seen": model.n_features_seen,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": [format(v, ".17g") for v in t.threshold],
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "count0": t.count0.tolist(),
                "count1": t.count1.tolist(),
            }
            for t in model.flat_trees
        ],
    }
    return json.dumps(payload, sort_keys=True)


def load_model(text: str) -> ForestModel:
    import json

    payload = json.loads(text)
    trees = [
        FlatTree(
            feature=np.asarray(t["feature"], np.int64),
            threshold=np.asarray([float(v) for v in t["threshold"]], np.float64),
            left=np.asarray(t["left"], np.int64),
            right=np.asarray(t["right"], np.int64),
            count0=np.asarray(t["count0"], np.float64),
            count1=np.asarray(t["count1"], np.float64),
        )
        for t in payload["trees"]
    ]
    return ForestModel(
        flat_trees=trees,
        hyperparams=ForestHyperparams(**payload["hyperparams"]),
        n_features_seen=payload["n_features_seen"],
    )


class RandomForest(BaseEstimator, ClassifierMixin):
    """Estimator wrapper so the forest composes with scikit-learn tooling.

    Parameters mirror :class:`ForestHyperparams`; ``max_features=None`` is
    accepted as an alias for ``"all"``.
    """

    def __init__(self, n_estimators=100, criterion="gini", max_depth=None,
                 min_samples_split=2, max_features="sqrt", random_state=0):
        self.n_estimators = n_estimators
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.random_state = random_state

    def _hyperparams(self) -> ForestHyperparams:
        mf = "all" if self.max_features is None else self.max_features
        return ForestHyperparams(
            n_estimators=self.n_estimators,
            criterion=self.criterion,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            max_features=mf,
        )

    def fit(self, X, y):
        self.model_ = fit_forest(X, y, self._hyperparams(), self.random_state)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = self.model_.n_features_seen
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise TrainingError("estimator is not fitted; call fit first")
        return predict(self.model_, X)
