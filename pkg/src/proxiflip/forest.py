"""CART random forests over binary feature vectors.

Trees are stored as flat parallel arrays (preorder, node 0 = root) so that
traversal, batch application, and leaf-signature extraction stay cheap.
Training is bit-reproducible: every tree draws from its own random stream
derived from (seed, tree index), so the result does not depend on the
order in which trees are built.
"""

import json
import sys
from dataclasses import dataclass

import numpy as np

from .dataset import BinarizationSpec, SourceFeature, ThresholdRule

MODEL_FORMAT_VERSION = 1

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class TrainConfig:
    tree_count: int
    feature_subset_size: object = "sqrt"  # positive int or the "sqrt" sentinel
    max_depth: int = None  # None = unlimited
    min_leaf_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1:
            raise ValueError("tree_count must be positive")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")
        if self.feature_subset_size != "sqrt" and (
            not isinstance(self.feature_subset_size, int) or self.feature_subset_size < 1
        ):
            raise ValueError('feature_subset_size must be a positive int or "sqrt"')

    def resolve_subset_size(self, feature_count):
        if self.feature_subset_size == "sqrt":
            return max(1, int(np.sqrt(feature_count)))
        if self.feature_subset_size > feature_count:
            raise ValueError(
                f"feature_subset_size {self.feature_subset_size} exceeds "
                f"feature count {feature_count}"
            )
        return self.feature_subset_size


class DecisionTree:
    """Flat-array binary decision tree.

    ``feature[i] >= 0`` marks an internal node; its left child handles
    feature value 0 and its right child value 1. Leaves carry a dense
    ``leaf_id`` (preorder over leaves), per-class training counts, and the
    majority class.
    """

    __slots__ = ("feature", "left", "right", "leaf_id", "majority", "class_counts",
                 "leaf_count")

    def __init__(self, feature, left, right, leaf_id, majority, class_counts, leaf_count):
        self.feature = feature
        self.left = left
        self.right = right
        self.leaf_id = leaf_id
        self.majority = majority
        self.class_counts = class_counts
        self.leaf_count = leaf_count

    @property
    def node_count(self):
        return len(self.feature)

    def apply_one(self, v):
        """Leaf id reached by one vector."""
        node = 0
        feature = self.feature
        while feature[node] >= 0:
            node = self.right[node] if v[feature[node]] else self.left[node]
        return int(self.leaf_id[node])

    def apply_one_flipped(self, v, k):
        """Leaf id reached by v with bit k read inverted; v itself is untouched."""
        node = 0
        feature = self.feature
        while feature[node] >= 0:
            f = feature[node]
            val = v[f] if f != k else 1 - v[f]
            node = self.right[node] if val else self.left[node]
        return int(self.leaf_id[node])

    def apply_one_with_path(self, v):
        """(leaf id, frozenset of feature indices tested on the path)."""
        node = 0
        feature = self.feature
        path = []
        while feature[node] >= 0:
            f = feature[node]
            path.append(int(f))
            node = self.right[node] if v[f] else self.left[node]
        return int(self.leaf_id[node]), frozenset(path)

    def apply_batch(self, X):
        """Leaf ids for every row of X, vectorized level by level."""
        cur = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feats = self.feature[cur]
            internal = feats >= 0
            if not internal.any():
                break
            idx = rows[internal]
            vals = X[idx, feats[internal]]
            cur[idx] = np.where(vals == 1, self.right[cur[idx]], self.left[cur[idx]])
        return self.leaf_id[cur].astype(np.int32)


@dataclass(frozen=True)
class Forest:
    trees: tuple
    config: TrainConfig
    class_count: int
    spec: BinarizationSpec
    train_size: int
    feature_count: int

    @property
    def tree_count(self):
        return len(self.trees)


def gini_impurity(class_counts):
    """1 - sum((c/n)^2) over per-class counts."""
    counts = np.asarray(class_counts, dtype=np.float64)
    n = counts.sum()
    if n <= 0:
        raise ValueError("class counts sum to zero")
    p = counts / n
    return float(1.0 - np.dot(p, p))


def _one_hot(labels, class_count):
    out = np.zeros((labels.shape[0], class_count), dtype=np.int64)
    out[np.arange(labels.shape[0]), labels] = 1
    return out


def _best_split_counts(X, onehot, samples, candidates, min_leaf_size):
    """Best (feature, gain) over candidate features for the given samples.

    Admissible splits have strictly positive Gini gain and leave at least
    ``min_leaf_size`` samples on each side; None when nothing qualifies.
    Candidate order must be ascending so gain ties resolve to the lowest
    feature index.
    """
    n = samples.shape[0]
    Y = onehot[samples]  # (n, C)
    parent_counts = Y.sum(axis=0)
    parent_imp = 1.0 - float(np.dot(parent_counts, parent_counts)) / (n * n)
    if parent_imp == 0.0:
        return None

    sub = X[samples][:, candidates].astype(np.int64)  # (n, m)
    right_counts = sub.T @ Y  # (m, C), exact integer counts
    n_right = right_counts.sum(axis=1)
    n_left = n - n_right
    left_counts = parent_counts[None, :] - right_counts

    valid = (n_left >= min_leaf_size) & (n_right >= min_leaf_size)
    if not valid.any():
        return None
    nl = np.maximum(n_left, 1).astype(np.float64)
    nr = np.maximum(n_right, 1).astype(np.float64)
    imp_left = 1.0 - (left_counts.astype(np.float64) ** 2).sum(axis=1) / nl ** 2
    imp_right = 1.0 - (right_counts.astype(np.float64) ** 2).sum(axis=1) / nr ** 2
    gain = parent_imp - (n_left * imp_left + n_right * imp_right) / n
    gain[~valid] = -np.inf
    best = int(np.argmax(gain))  # first max = lowest candidate index
    if gain[best] <= 0.0:
        return None
    return int(candidates[best]), float(gain[best])


def best_split(sample_indices, data, candidate_features, min_leaf_size=1):
    """Public split search over a BinaryDataset; see _best_split_counts."""
    samples = np.asarray(sample_indices, dtype=np.int64)
    if samples.size == 0:
        raise ValueError("empty sample")
    candidates = np.asarray(sorted(candidate_features), dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("empty candidate feature set")
    class_count = int(data.labels.max()) + 1
    onehot = _one_hot(data.labels, class_count)
    return _best_split_counts(data.vectors, onehot, samples, candidates, min_leaf_size)


class _TreeBuilder:
    def __init__(self, X, onehot, class_count, rng, subset_size, max_depth, min_leaf_size):
        self.X = X
        self.onehot = onehot
        self.class_count = class_count
        self.rng = rng
        self.m = subset_size
        self.F = X.shape[1]
        self.max_depth = max_depth
        self.min_leaf_size = min_leaf_size
        self.feature = []
        self.left = []
        self.right = []
        self.counts = []
        self.next_leaf_id = 0

    def build(self, samples):
        self._grow(samples, depth=0, path_features=set())
        n_nodes = len(self.feature)
        feature = np.array(self.feature, dtype=np.int32)
        left = np.array(self.left, dtype=np.int32)
        right = np.array(self.right, dtype=np.int32)
        class_counts = np.array(self.counts, dtype=np.int64)
        leaf_id = np.full(n_nodes, -1, dtype=np.int32)
        majority = np.full(n_nodes, -1, dtype=np.int32)
        leaves = feature < 0
        # preorder node order makes leaf ids stable across rebuilds
        leaf_id[leaves] = np.arange(int(leaves.sum()), dtype=np.int32)
        majority[leaves] = np.argmax(class_counts[leaves], axis=1)
        return DecisionTree(feature=feature, left=left, right=right, leaf_id=leaf_id,
                            majority=majority, class_counts=class_counts,
                            leaf_count=int(leaves.sum()))

    def _grow(self, samples, depth, path_features):
        node = len(self.feature)
        self.feature.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(self.onehot[samples].sum(axis=0))

        counts = self.counts[node]
        pure = int((counts > 0).sum()) <= 1
        depth_capped = self.max_depth is not None and depth >= self.max_depth
        if pure or depth_capped or samples.shape[0] < 2 * self.min_leaf_size:
            return node

        cand = np.sort(self.rng.choice(self.F, size=self.m, replace=False))
        found = _best_split_counts(self.X, self.onehot, samples, cand, self.min_leaf_size)
        if found is None:
            return node
        feat, _gain = found
        # a positive-gain split cannot reuse a feature already fixed on this path
        assert feat not in path_features, f"feature {feat} retested on one path"

        mask = self.X[samples, feat] == 1
        left_samples = samples[~mask]
        right_samples = samples[mask]
        self.feature[node] = feat
        path_features.add(feat)
        self.left[node] = self._grow(left_samples, depth + 1, path_features)
        self.right[node] = self._grow(right_samples, depth + 1, path_features)
        path_features.discard(feat)
        return node


def _tree_rng(seed, tree_index):
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed & _SEED_MASK, spawn_key=(tree_index,)))
    )


def train(data, config):
    """Train a bagged forest of CART trees on a BinaryDataset.

    Each tree gets an independent bootstrap sample of size n (drawn with
    replacement from its own (seed, tree index) stream) and a fresh
    feature subset of size m at every node. The result is a pure function
    of (data, config).
    """
    n, F = data.vectors.shape
    if n == 0:
        raise ValueError("empty dataset")
    if F < 1:
        raise ValueError("dataset has no features")
    present = np.unique(data.labels)
    if present.size < 2:
        raise ValueError("training requires at least 2 classes present")
    class_count = int(data.labels.max()) + 1
    m = config.resolve_subset_size(F)
    onehot = _one_hot(data.labels, class_count)
    # path depth is bounded by F (no feature repeats on a path); give the
    # recursive builder headroom beyond the interpreter default
    sys.setrecursionlimit(max(sys.getrecursionlimit(), min(F, n) + 2000))

    trees = []
    for t in range(config.tree_count):
        rng = _tree_rng(config.seed, t)
        bootstrap = np.sort(rng.integers(0, n, size=n))
        builder = _TreeBuilder(data.vectors, onehot, class_count, rng, m,
                               config.max_depth, config.min_leaf_size)
        trees.append(builder.build(bootstrap))

    return Forest(trees=tuple(trees), config=config, class_count=class_count,
                  spec=data.spec, train_size=n, feature_count=F)


def _check_vector(forest, v):
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] != forest.feature_count:
        raise ValueError(
            f"vector length {v.shape[-1] if v.ndim else 0} does not match "
            f"feature count {forest.feature_count}"
        )
    return v


def predict(forest, v):
    """(class, per-class vote counts); vote ties go to the lowest class id."""
    v = _check_vector(forest, v)
    votes = np.zeros(forest.class_count, dtype=np.int64)
    for tree in forest.trees:
        node = 0
        while tree.feature[node] >= 0:
            node = tree.right[node] if v[tree.feature[node]] else tree.left[node]
        votes[tree.majority[node]] += 1
    return int(np.argmax(votes)), votes


def predict_batch(forest, X):
    """Vectorized predict over the rows of X: (classes, votes matrix)."""
    votes = np.zeros((X.shape[0], forest.class_count), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for tree in forest.trees:
        cur = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feats = tree.feature[cur]
            internal = feats >= 0
            if not internal.any():
                break
            idx = rows[internal]
            vals = X[idx, feats[internal]]
            cur[idx] = np.where(vals == 1, tree.right[cur[idx]], tree.left[cur[idx]])
        votes[rows, tree.majority[cur]] += 1
    return np.argmax(votes, axis=1), votes


def leaf_signature(forest, v):
    """Per-tree terminal leaf ids for one vector, in tree order."""
    v = _check_vector(forest, v)
    return np.array([tree.apply_one(v) for tree in forest.trees], dtype=np.int32)


def leaf_signatures_batch(forest, X):
    if X.shape[1] != forest.feature_count:
        raise ValueError(
            f"vectors have {X.shape[1]} features, forest expects {forest.feature_count}"
        )
    sigs = np.empty((X.shape[0], forest.tree_count), dtype=np.int32)
    for t, tree in enumerate(forest.trees):
        sigs[:, t] = tree.apply_batch(X)
    return sigs


def accuracy(forest, data):
    pred, _ = predict_batch(forest, data.vectors)
    return float(np.mean(pred == data.labels))


# --- persistence ---------------------------------------------------------

def _spec_to_dict(spec):
    return {
        "features": [
            {
                "kind": f.kind,
                "source": f.source,
                "name": f.name,
                "rules": [{"cut": r.cut, "op": r.op} for r in f.rules],
                "categories": list(f.categories),
            }
            for f in spec.features
        ],
        "derived_names": list(spec.derived_feature_names),
        "pixel_threshold": spec.pixel_threshold,
        "warnings": list(spec.warnings),
    }


def _spec_from_dict(d):
    features = tuple(
        SourceFeature(
            kind=f["kind"],
            source=int(f["source"]),
            name=f["name"],
            rules=tuple(ThresholdRule(cut=float(r["cut"]), op=r["op"]) for r in f["rules"]),
            categories=tuple(float(c) for c in f["categories"]),
        )
        for f in d["features"]
    )
    return BinarizationSpec(
        features=features,
        derived_feature_names=tuple(d["derived_names"]),
        pixel_threshold=d["pixel_threshold"],
        warnings=tuple(d["warnings"]),
    )


def _tree_to_nodes(tree):
    nodes = []
    for i in range(tree.node_count):
        if tree.feature[i] >= 0:
            nodes.append({"feature": int(tree.feature[i]), "left": int(tree.left[i]),
                          "right": int(tree.right[i])})
        else:
            nodes.append({"leaf_id": int(tree.leaf_id[i]),
                          "counts": [int(c) for c in tree.class_counts[i]],
                          "majority": int(tree.majority[i])})
    return nodes


def _tree_from_nodes(nodes, class_count):
    n = len(nodes)
    feature = np.full(n, -1, dtype=np.int32)
    left = np.full(n, -1, dtype=np.int32)
    right = np.full(n, -1, dtype=np.int32)
    leaf_id = np.full(n, -1, dtype=np.int32)
    majority = np.full(n, -1, dtype=np.int32)
    counts = np.zeros((n, class_count), dtype=np.int64)
    leaf_count = 0
    for i, node in enumerate(nodes):
        if "feature" in node:
            feature[i] = node["feature"]
            left[i] = node["left"]
            right[i] = node["right"]
        else:
            leaf_id[i] = node["leaf_id"]
            majority[i] = node["majority"]
            counts[i] = node["counts"]
            leaf_count += 1
    return DecisionTree(feature=feature, left=left, right=right, leaf_id=leaf_id,
                        majority=majority, class_counts=counts, leaf_count=leaf_count)


def forest_to_json(forest):
    """Serialize with fixed field order so equal forests give equal bytes."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "class_count": forest.class_count,
        "train_size": forest.train_size,
        "feature_count": forest.feature_count,
        "config": {
            "tree_count": forest.config.tree_count,
            "feature_subset_size": forest.config.feature_subset_size,
            "max_depth": forest.config.max_depth,
            "min_leaf_size": forest.config.min_leaf_size,
            "seed": forest.config.seed,
        },
        "binarization_spec": _spec_to_dict(forest.spec),
        "trees": [{"nodes": _tree_to_nodes(tree)} for tree in forest.trees],
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=True) + "\n"


def save_model(forest, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(forest_to_json(forest))


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: corrupt model file: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ValueError(f"{path}: not a model file")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported model format version {doc['format_version']}, "
            f"this build reads version {MODEL_FORMAT_VERSION}"
        )
    try:
        cfg = doc["config"]
        config = TrainConfig(
            tree_count=int(cfg["tree_count"]),
            feature_subset_size=cfg["feature_subset_size"]
            if cfg["feature_subset_size"] == "sqrt" else int(cfg["feature_subset_size"]),
            max_depth=None if cfg["max_depth"] is None else int(cfg["max_depth"]),
            min_leaf_size=int(cfg["min_leaf_size"]),
            seed=int(cfg["seed"]),
        )
        class_count = int(doc["class_count"])
        trees = tuple(_tree_from_nodes(t["nodes"], class_count) for t in doc["trees"])
        return Forest(trees=trees, config=config, class_count=class_count,
                      spec=_spec_from_dict(doc["binarization_spec"]),
                      train_size=int(doc["train_size"]),
                      feature_count=int(doc["feature_count"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: corrupt model file: missing field {exc}") from None
