"""Shared builders for the test suite."""

import numpy as np
import pytest

from proxiflip.dataset import BinarizationSpec, BinaryDataset, SourceFeature
from proxiflip.forest import TrainConfig, train


def passthrough_spec(width, prefix="b", pixel_threshold=None):
    feats = tuple(SourceFeature(kind="passthrough", source=j, name=f"{prefix}{j}")
                  for j in range(width))
    return BinarizationSpec(features=feats,
                            derived_feature_names=tuple(f.name for f in feats),
                            pixel_threshold=pixel_threshold)


def bits_dataset(vectors, labels, label_names=()):
    vectors = np.asarray(vectors, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.int64)
    return BinaryDataset(vectors=vectors, labels=labels,
                         spec=passthrough_spec(vectors.shape[1]),
                         label_names=tuple(label_names))


def random_bits_dataset(n, width, seed, label_rule=None):
    """Random 0/1 dataset; labels from ``label_rule(vectors)`` or random with
    both classes guaranteed present."""
    rng = np.random.default_rng(seed)
    vectors = rng.integers(0, 2, size=(n, width)).astype(np.uint8)
    if label_rule is not None:
        labels = label_rule(vectors)
    else:
        labels = rng.integers(0, 2, size=n).astype(np.int64)
        labels[0] = 0
        labels[1] = 1
    return bits_dataset(vectors, labels)


def decisive_dataset(n, noise_features, seed):
    """Bit 0 decides the class; other bits are independent noise."""
    data = random_bits_dataset(n, 1 + noise_features, seed,
                               label_rule=lambda v: v[:, 0].astype(np.int64))
    if len(np.unique(data.labels)) < 2:  # tiny n edge
        data.vectors[0, 0] = 1 - data.vectors[0, 0]
        data.labels[0] = data.vectors[0, 0]
    return data


@pytest.fixture
def toy_forest_store():
    """Separable toy: class = bit 0, plus five noise bits."""
    from proxiflip.proximity import build_store

    data = decisive_dataset(60, 5, seed=11)
    forest = train(data, TrainConfig(tree_count=12, seed=3))
    return forest, build_store(forest, data), data
