"""Proximity-distance space over a trained forest's training set.

Two instances are close when they land in the same leaf of many trees.
Proximity = shared-leaf fraction; proximity distance = 1 - proximity,
which is the Hamming distance between leaf signatures divided by the
number of trees. Distance vectors against the training set are computed
lazily; the full n x n matrix is only materialized by the CSV export.
"""

from dataclasses import dataclass

import numpy as np

from .forest import leaf_signatures_batch, predict_batch


@dataclass(frozen=True)
class ProximityStore:
    """Frozen per-training-instance leaf signatures and labels."""

    signatures: np.ndarray  # (n, T) int32
    predicted_labels: np.ndarray  # (n,) int64, from the owning forest
    true_labels: np.ndarray  # (n,) int64
    class_count: int

    @property
    def tree_count(self):
        return self.signatures.shape[1]

    def __len__(self):
        return self.signatures.shape[0]


def build_store(forest, train):
    """Compute leaf signatures and forest predictions for the training set."""
    if train.feature_count != forest.feature_count:
        raise ValueError(
            f"dataset has {train.feature_count} features, forest expects "
            f"{forest.feature_count}"
        )
    signatures = leaf_signatures_batch(forest, train.vectors)
    predicted, _votes = predict_batch(forest, train.vectors)
    return ProximityStore(signatures=signatures,
                          predicted_labels=predicted.astype(np.int64),
                          true_labels=train.labels.copy(),
                          class_count=forest.class_count)


def proximity(a, b):
    """Fraction of trees in which the two signatures share a leaf."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"signature lengths differ: {a.shape} vs {b.shape}")
    return float(np.mean(a == b))


def distance_vector(store, sig):
    """Proximity distances from one signature to every training instance."""
    sig = np.asarray(sig)
    if sig.shape != (store.tree_count,):
        raise ValueError(
            f"signature length {sig.shape} does not match tree count {store.tree_count}"
        )
    return 1.0 - np.mean(store.signatures == sig, axis=1)


def _group_mask(store, target_class, group, use_true_labels):
    if not 0 <= target_class < store.class_count:
        raise ValueError(f"class {target_class} out of range (have {store.class_count})")
    if group not in ("in", "out"):
        raise ValueError(f'group must be "in" or "out", got {group!r}')
    labels = store.true_labels if use_true_labels else store.predicted_labels
    mask = labels == target_class
    return mask if group == "in" else ~mask


def group_mean_sq_distance(d, store, target_class, group, exclude_index=None,
                           use_true_labels=False):
    """Mean squared proximity distance over one class covering.

    The in-group holds training instances the forest assigned to
    ``target_class``; the out-group is the complement. ``exclude_index``
    drops one training instance (used for self-distances).
    """
    d = np.asarray(d, dtype=np.float64)
    mask = _group_mask(store, target_class, group, use_true_labels)
    if exclude_index is not None:
        mask = mask.copy()
        mask[exclude_index] = False
    if not mask.any():
        raise ValueError(f"{group}-group for class {target_class} is empty")
    vals = d[mask]
    return float(np.mean(vals * vals))


def outlier_scores(store, sd_multiplier=2.0, use_true_labels=False):
    """Per-instance outlier score and flag.

    The score is the instance's mean squared in-group proximity distance
    (itself excluded). An instance is flagged when its score exceeds
    mean + sd_multiplier * sd of the scores inside its own class.
    """
    labels = store.true_labels if use_true_labels else store.predicted_labels
    n = len(store)
    for c in np.unique(labels):
        if int((labels == c).sum()) < 2:
            raise ValueError(f"class {c} has a single member; scores undefined")

    scores = np.empty(n, dtype=np.float64)
    for i in range(n):
        d = 1.0 - np.mean(store.signatures == store.signatures[i], axis=1)
        mask = labels == labels[i]
        mask = mask.copy()
        mask[i] = False
        vals = d[mask]
        scores[i] = float(np.mean(vals * vals))

    flags = np.zeros(n, dtype=bool)
    for c in np.unique(labels):
        members = labels == c
        mu = scores[members].mean()
        sd = scores[members].std()
        flags[members] = scores[members] > mu + sd_multiplier * sd
    return scores, flags


def export_distance_matrix(store, path):
    """Write the full n x n proximity-distance matrix as CSV.

    Row/column order is training order; values carry 6 decimal places.
    Rows are streamed so only one row is ever materialized.
    """
    n = len(store)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("index," + ",".join(str(j) for j in range(n)) + "\n")
        for i in range(n):
            row = 1.0 - np.mean(store.signatures == store.signatures[i], axis=1)
            fh.write(str(i) + "," + ",".join(f"{x:.6f}" for x in row) + "\n")
