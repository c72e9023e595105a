"""Per-feature contribution and closeness via single-bit flips.

Flipping one bit of an input vector moves the instance through the
forest's leaves and therefore through proximity-distance space. Weighting
the per-training-instance movement by class agreement (-1 inside the
target class, +1 outside) gives a signed contribution: positive means the
original bit value pulled the instance toward the target class, negative
means it pushed away, zero means the bit never touched a decision path.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .forest import predict
from .proximity import distance_vector, group_mean_sq_distance


@dataclass(frozen=True)
class Closeness:
    """Mean squared in/out-group distances before and after one flip."""

    in_before: float
    out_before: float
    in_after: float
    out_after: float
    delta_in: float
    delta_out: float


@dataclass(frozen=True)
class FeatureContribution:
    feature_index: int
    contribution: float
    closeness: Closeness
    changed_tree_count: int


@dataclass(frozen=True)
class ContributionReport:
    """Full explanation record for one instance against one target class."""

    instance_id: str
    model_id: str
    vector: np.ndarray
    predicted_class: int
    target_class: int
    votes: tuple
    features: tuple  # FeatureContribution per feature index 0..F-1
    feature_names: tuple
    normalized: bool

    @property
    def contributions(self):
        return np.array([f.contribution for f in self.features], dtype=np.float64)


@dataclass(frozen=True)
class PathContext:
    """Traversal cache for one vector: its signature plus, per tree, the
    set of features tested on its root-to-leaf path (inverted to a
    feature -> tree-indices map for flip queries)."""

    vector: np.ndarray
    signature: np.ndarray
    path_feature_sets: tuple
    trees_by_feature: dict


def flip(v, k):
    """Copy of v with bit k toggled."""
    v = np.asarray(v)
    if not 0 <= k < v.shape[0]:
        raise IndexError(f"feature index {k} out of range for {v.shape[0]} features")
    out = v.copy()
    out[k] = 1 - out[k]
    return out


def ingroup_vector(store, target_class, use_true_labels=False):
    """-1 for training instances the forest put in target_class, +1 otherwise."""
    if not 0 <= target_class < store.class_count:
        raise ValueError(f"class {target_class} out of range (have {store.class_count})")
    labels = store.true_labels if use_true_labels else store.predicted_labels
    return np.where(labels == target_class, -1, 1).astype(np.int8)


def build_path_context(forest, v):
    v = np.asarray(v)
    sig = np.empty(forest.tree_count, dtype=np.int32)
    path_sets = []
    trees_by_feature = {}
    for t, tree in enumerate(forest.trees):
        leaf, feats = tree.apply_one_with_path(v)
        sig[t] = leaf
        path_sets.append(feats)
        for f in feats:
            trees_by_feature.setdefault(f, []).append(t)
    return PathContext(vector=v.copy(), signature=sig,
                       path_feature_sets=tuple(path_sets),
                       trees_by_feature={f: tuple(ts) for f, ts in trees_by_feature.items()})


def fast_leaf_signature(forest, context, v, k):
    """Signature of flip(v, k) by re-descending only the trees whose path
    for v tested feature k; bit-identical to the naive traversal."""
    v = np.asarray(v)
    if not np.array_equal(context.vector, v):
        raise ValueError("stale path context: built for a different vector")
    if not 0 <= k < forest.feature_count:
        raise IndexError(f"feature index {k} out of range")
    sig = context.signature.copy()
    for t in context.trees_by_feature.get(int(k), ()):
        sig[t] = forest.trees[t].apply_one_flipped(v, k)
    return sig


def _zero_closeness(in_before, out_before):
    return Closeness(in_before=in_before, out_before=out_before,
                     in_after=in_before, out_after=out_before,
                     delta_in=0.0, delta_out=0.0)


def _contribution_core(store, target_class, k, d, z, in_before, out_before, sig, sig_after):
    changed = int(np.count_nonzero(sig != sig_after))
    if changed == 0:
        # untouched leaves leave the position in decision space unchanged;
        # report exact zeros rather than recomputed float noise
        return FeatureContribution(feature_index=int(k), contribution=0.0,
                                   closeness=_zero_closeness(in_before, out_before),
                                   changed_tree_count=0)
    d_after = distance_vector(store, sig_after)
    delta = d - d_after
    contribution = float(np.sum(z * delta * np.abs(delta)))
    in_after = group_mean_sq_distance(d_after, store, target_class, "in")
    out_after = group_mean_sq_distance(d_after, store, target_class, "out")
    closeness = Closeness(in_before=in_before, out_before=out_before,
                          in_after=in_after, out_after=out_after,
                          delta_in=in_after - in_before,
                          delta_out=out_after - out_before)
    return FeatureContribution(feature_index=int(k), contribution=contribution,
                               closeness=closeness, changed_tree_count=changed)


def feature_contribution(forest, store, v, k, target_class, context=None):
    """Contribution and closeness of feature k for instance v.

    With d the distance vector of v and d' that of flip(v, k), the
    contribution is sum_i z_i * (d_i - d'_i) * |d_i - d'_i|: a signed
    squared movement, oriented so positive values mean the original bit
    pulled v toward the target class.
    """
    v = np.asarray(v)
    if context is None:
        context = build_path_context(forest, v)
    d = distance_vector(store, context.signature)
    z = ingroup_vector(store, target_class)
    in_before = group_mean_sq_distance(d, store, target_class, "in")
    out_before = group_mean_sq_distance(d, store, target_class, "out")
    sig_after = fast_leaf_signature(forest, context, v, k)
    return _contribution_core(store, target_class, k, d, z, in_before, out_before,
                              context.signature, sig_after)


def explain(forest, store, v, target_class=None, parallel=False, normalize=False,
            instance_id="", model_id=""):
    """Full per-feature explanation of one instance.

    The target defaults to the forest's prediction. Features are
    independent, so they may be evaluated in parallel; results are
    assembled in feature order and do not depend on the schedule.
    ``normalize`` divides contributions by the training-set size.
    """
    v = np.asarray(v)
    predicted, votes = predict(forest, v)
    target = predicted if target_class is None else int(target_class)
    if not 0 <= target < forest.class_count:
        raise ValueError(f"target class {target} out of range (have {forest.class_count})")

    context = build_path_context(forest, v)
    d = distance_vector(store, context.signature)
    z = ingroup_vector(store, target)
    in_before = group_mean_sq_distance(d, store, target, "in")
    out_before = group_mean_sq_distance(d, store, target, "out")

    def one(k):
        sig_after = fast_leaf_signature(forest, context, v, k)
        return _contribution_core(store, target, k, d, z, in_before, out_before,
                                  context.signature, sig_after)

    ks = range(forest.feature_count)
    if parallel:
        with ThreadPoolExecutor() as pool:
            features = list(pool.map(one, ks))
    else:
        features = [one(k) for k in ks]

    if normalize:
        n = float(len(store))
        features = [
            FeatureContribution(feature_index=f.feature_index,
                                contribution=f.contribution / n,
                                closeness=f.closeness,
                                changed_tree_count=f.changed_tree_count)
            for f in features
        ]

    return ContributionReport(instance_id=instance_id, model_id=model_id,
                              vector=v.copy(), predicted_class=predicted,
                              target_class=target,
                              votes=tuple(int(x) for x in votes),
                              features=tuple(features),
                              feature_names=tuple(forest.spec.derived_feature_names),
                              normalized=bool(normalize))


def misclassification_diff(report_wrong, report_right):
    """Per-feature squared difference between two contribution maps.

    ``report_wrong`` targets the incorrectly predicted class and
    ``report_right`` the correct one; the result highlights features whose
    pull differs most between the two readings (symmetric in its inputs).
    """
    if len(report_wrong.features) != len(report_right.features):
        raise ValueError("reports cover different feature counts")
    if report_wrong.instance_id != report_right.instance_id or not np.array_equal(
        report_wrong.vector, report_right.vector
    ):
        raise ValueError("reports describe different instances")
    cw = report_wrong.contributions
    cr = report_right.contributions
    return (cw - cr) ** 2
