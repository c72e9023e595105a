"""Data ingestion and binary discretization.

CSV tables and IDX image files are turned into fixed-length 0/1 feature
vectors. Numeric columns are cut into threshold indicator bits, small
cardinality columns are one-hot encoded, and columns that are already
binary pass through unchanged.
"""

import csv
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RawDataset:
    """Numeric table with contiguous integer class labels.

    ``label_names[c]`` holds the original label text for class id ``c``.
    """

    rows: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64, contiguous from 0
    feature_names: tuple
    label_names: tuple

    @property
    def feature_count(self):
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]


@dataclass(frozen=True)
class ThresholdRule:
    """One indicator bit on a numeric value: 1 when x < cut ("lt") or x > cut ("gt")."""

    cut: float
    op: str = "lt"

    def __post_init__(self):
        if self.op not in ("lt", "gt"):
            raise ValueError(f"unknown threshold op {self.op!r}")

    def evaluate(self, x):
        return x < self.cut if self.op == "lt" else x > self.cut


@dataclass(frozen=True)
class SourceFeature:
    """How one source column maps to derived bits.

    kind is one of "passthrough" (1 bit, value copied), "onehot" (one bit
    per category), "threshold" (one bit per rule, rule order = bit order)
    or "constant" (no derived bits).
    """

    kind: str
    source: int
    name: str
    rules: tuple = ()
    categories: tuple = ()

    def __post_init__(self):
        if self.kind not in ("passthrough", "onehot", "threshold", "constant"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        seen = set()
        for r in self.rules:
            key = (r.cut, r.op)
            if key in seen:
                raise ValueError(f"duplicate threshold rule {key} on feature {self.name!r}")
            seen.add(key)
        if len(set(self.categories)) != len(self.categories):
            raise ValueError(f"duplicate one-hot category on feature {self.name!r}")

    @property
    def width(self):
        if self.kind == "passthrough":
            return 1
        if self.kind == "onehot":
            return len(self.categories)
        if self.kind == "threshold":
            return len(self.rules)
        return 0


@dataclass(frozen=True)
class BinarizationSpec:
    """Complete recipe for turning a numeric row into a binary vector.

    ``pixel_threshold`` is set for image data loaded from IDX files, where
    binarization happened at load time and every feature is a passthrough
    pixel bit.
    """

    features: tuple
    derived_feature_names: tuple
    pixel_threshold: int = None
    warnings: tuple = ()

    def __post_init__(self):
        width = sum(f.width for f in self.features)
        if width != len(self.derived_feature_names):
            raise ValueError(
                f"spec yields {width} derived features but "
                f"{len(self.derived_feature_names)} names were given"
            )

    @property
    def source_count(self):
        return len(self.features)

    @property
    def derived_count(self):
        return len(self.derived_feature_names)


@dataclass(frozen=True)
class BinaryDataset:
    """Binary feature vectors plus class labels and the spec that made them."""

    vectors: np.ndarray  # (n, F) uint8, each value 0 or 1
    labels: np.ndarray  # (n,) int64
    spec: BinarizationSpec
    label_names: tuple = ()

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array")
        if len(self.labels) != self.vectors.shape[0]:
            raise ValueError("labels length does not match vector count")
        bad = (self.vectors != 0) & (self.vectors != 1)
        if bad.any():
            raise ValueError("binary vectors may only contain 0 and 1")

    @property
    def feature_count(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]


def load_csv(path, label_column=-1, has_header=True):
    """Read a numeric CSV into a RawDataset.

    ``label_column`` is a column name (requires a header) or an integer
    index, negative-from-the-end allowed. Labels may be arbitrary text and
    are remapped to contiguous integers 0..C-1; the mapping is kept in
    ``label_names``. Any other cell must parse as a number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: empty dataset")

    if has_header:
        header, data_rows = rows[0], rows[1:]
        first_line = 2
    else:
        header, data_rows = None, rows
        first_line = 1
    if not data_rows:
        raise ValueError(f"{path}: no data rows")

    ncol = len(data_rows[0])
    if isinstance(label_column, str):
        if header is None:
            raise ValueError("label column given by name but file has no header")
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise ValueError(f"label column {label_column!r} not in header {header}") from None
    else:
        label_idx = label_column if label_column >= 0 else ncol + label_column
        if not 0 <= label_idx < ncol:
            raise ValueError(f"label column index {label_column} out of range for {ncol} columns")

    values = np.empty((len(data_rows), ncol - 1), dtype=np.float64)
    raw_labels = []
    for i, row in enumerate(data_rows):
        line = first_line + i
        if len(row) != ncol:
            raise ValueError(f"{path}: row at line {line} has {len(row)} columns, expected {ncol}")
        col = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                raw_labels.append(cell.strip())
                continue
            try:
                values[i, col] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric value {cell!r} at line {line}, column {j}"
                ) from None
            col += 1

    labels, label_names = _contiguous_labels(raw_labels)
    if header is not None:
        feature_names = tuple(name for j, name in enumerate(header) if j != label_idx)
    else:
        feature_names = tuple(f"f{j}" for j in range(ncol - 1))
    return RawDataset(rows=values, labels=labels, feature_names=feature_names,
                      label_names=label_names)


def _contiguous_labels(raw_labels):
    """Map label strings to 0..C-1, numerically sorted when all are integers."""
    uniq = sorted(set(raw_labels))
    try:
        uniq.sort(key=int)
    except ValueError:
        pass
    index = {name: c for c, name in enumerate(uniq)}
    labels = np.array([index[s] for s in raw_labels], dtype=np.int64)
    return labels, tuple(uniq)


def _read_idx_header(fh, path, expected_magic, expected_dims):
    head = fh.read(4 * (1 + expected_dims))
    if len(head) < 4 * (1 + expected_dims):
        raise ValueError(f"{path}: truncated IDX header")
    fields = struct.unpack(f">{1 + expected_dims}I", head)
    if fields[0] != expected_magic:
        raise ValueError(f"{path}: bad IDX magic {fields[0]}, expected {expected_magic}")
    return fields[1:]


def load_idx(images_path, labels_path, pixel_threshold=128):
    """Load big-endian IDX image/label files into a BinaryDataset.

    Pixels at or above ``pixel_threshold`` become 1, others 0.
    """
    with open(images_path, "rb") as fh:
        count, nrows, ncols = _read_idx_header(fh, images_path, IDX_IMAGE_MAGIC, 3)
        data = np.frombuffer(fh.read(count * nrows * ncols), dtype=np.uint8)
    if data.size != count * nrows * ncols:
        raise ValueError(f"{images_path}: truncated image data")
    with open(labels_path, "rb") as fh:
        (label_count,) = _read_idx_header(fh, labels_path, IDX_LABEL_MAGIC, 1)
        raw_labels = np.frombuffer(fh.read(label_count), dtype=np.uint8)
    if raw_labels.size != label_count:
        raise ValueError(f"{labels_path}: truncated label data")
    if label_count != count:
        raise ValueError(
            f"image/label count mismatch: {count} images vs {label_count} labels"
        )

    vectors = (data.reshape(count, nrows * ncols) >= pixel_threshold).astype(np.uint8)
    features = tuple(
        SourceFeature(kind="passthrough", source=j, name=f"px{j}")
        for j in range(nrows * ncols)
    )
    spec = BinarizationSpec(
        features=features,
        derived_feature_names=tuple(f.name for f in features),
        pixel_threshold=int(pixel_threshold),
    )
    labels = raw_labels.astype(np.int64)
    class_count = int(labels.max()) + 1 if len(labels) else 0
    return BinaryDataset(vectors=vectors, labels=labels, spec=spec,
                         label_names=tuple(str(c) for c in range(class_count)))


def write_idx_images(path, images):
    """Write a (n, rows, cols) uint8 array as an IDX image file."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABEL_MAGIC, labels.size))
        fh.write(labels.tobytes())


def _gini(counts):
    n = counts.sum()
    p = counts / n
    return 1.0 - float(np.dot(p, p))


def _best_cut_of_segment(sorted_vals, sorted_onehot, lo, hi, total_n):
    """Best single cut inside sorted_vals[lo:hi], scored as the drop in
    total weighted Gini impurity of the whole column. Returns (gain, cut)
    or None when the segment has no internal distinct boundary.
    """
    seg_vals = sorted_vals[lo:hi]
    seg_counts = sorted_onehot[lo:hi]
    n = hi - lo
    boundaries = np.nonzero(seg_vals[1:] != seg_vals[:-1])[0]  # cut after index b
    if boundaries.size == 0:
        return None
    prefix = np.cumsum(seg_counts, axis=0)
    total = prefix[-1]
    seg_imp = _gini(total)
    left = prefix[boundaries].astype(np.float64)  # (k, C)
    right = total.astype(np.float64) - left
    nl = left.sum(axis=1)
    nr = right.sum(axis=1)
    gini_l = 1.0 - (left ** 2).sum(axis=1) / nl ** 2
    gini_r = 1.0 - (right ** 2).sum(axis=1) / nr ** 2
    child = (nl * gini_l + nr * gini_r) / n
    gains = (n / total_n) * (seg_imp - child)
    best = int(np.argmax(gains))  # scanned ascending, first max = smallest cut
    b = boundaries[best]
    cut = (seg_vals[b] + seg_vals[b + 1]) / 2.0
    return float(gains[best]), float(cut), int(lo + b + 1)


def fit_binarizer(data, max_splits_per_feature=4, onehot_max_cardinality=16):
    """Choose a binarization for every source feature of a RawDataset.

    Already-binary columns pass through, columns with few distinct values
    are one-hot encoded, and the rest get up to ``max_splits_per_feature``
    less-than cuts. Cuts sit at midpoints of adjacent distinct sorted
    values and are picked greedily: each round commits the cut with the
    largest drop in weighted Gini impurity of the partition built so far
    (ties go to the smaller cut), stopping early when no cut helps.
    Constant columns derive no features and only leave a warning.
    """
    if len(data) == 0:
        raise ValueError("cannot fit a binarizer on an empty dataset")
    if max_splits_per_feature < 1:
        raise ValueError("max_splits_per_feature must be positive")

    class_count = int(data.labels.max()) + 1
    onehot_labels = np.zeros((len(data), class_count), dtype=np.int64)
    onehot_labels[np.arange(len(data)), data.labels] = 1

    features = []
    names = []
    warnings = []
    for j in range(data.feature_count):
        col = data.rows[:, j]
        fname = data.feature_names[j]
        uniq = np.unique(col)
        if uniq.size == 1:
            msg = f"feature {fname!r} is constant ({uniq[0]:g}); no derived features"
            log.warning(msg)
            warnings.append(msg)
            features.append(SourceFeature(kind="constant", source=j, name=fname))
            continue
        if set(uniq.tolist()) <= {0.0, 1.0}:
            features.append(SourceFeature(kind="passthrough", source=j, name=fname))
            names.append(fname)
            continue
        if uniq.size <= onehot_max_cardinality:
            cats = tuple(float(v) for v in uniq)
            features.append(SourceFeature(kind="onehot", source=j, name=fname,
                                          categories=cats))
            names.extend(f"{fname}={v:g}" for v in cats)
            continue

        cuts = _greedy_threshold_cuts(col, onehot_labels, max_splits_per_feature)
        if not cuts:
            msg = f"feature {fname!r} has no impurity-reducing cut; no derived features"
            log.warning(msg)
            warnings.append(msg)
            features.append(SourceFeature(kind="constant", source=j, name=fname))
            continue
        rules = tuple(ThresholdRule(cut=c, op="lt") for c in sorted(cuts))
        features.append(SourceFeature(kind="threshold", source=j, name=fname, rules=rules))
        names.extend(f"{fname}<{r.cut:g}" for r in rules)

    return BinarizationSpec(features=tuple(features), derived_feature_names=tuple(names),
                            warnings=tuple(warnings))


def _greedy_threshold_cuts(col, onehot_labels, max_cuts):
    order = np.argsort(col, kind="stable")
    sorted_vals = col[order]
    sorted_onehot = onehot_labels[order]
    total_n = col.size

    segments = [(0, total_n)]
    cuts = []
    while len(cuts) < max_cuts:
        best = None
        for seg_i, (lo, hi) in enumerate(segments):
            found = _best_cut_of_segment(sorted_vals, sorted_onehot, lo, hi, total_n)
            if found is None:
                continue
            gain, cut, split_at = found
            if gain <= 0.0:
                continue
            if best is None or (gain, -cut) > (best[0], -best[1]):
                best = (gain, cut, split_at, seg_i)
        if best is None:
            break
        _, cut, split_at, seg_i = best
        lo, hi = segments.pop(seg_i)
        segments.extend([(lo, split_at), (split_at, hi)])
        cuts.append(cut)
    return cuts


def apply_binarizer(spec, row):
    """Binarize one numeric row. Pure: equal inputs give equal outputs."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] != spec.source_count:
        raise ValueError(
            f"row has {row.shape[-1] if row.ndim else 0} values, "
            f"spec covers {spec.source_count} source features"
        )
    return binarize_rows(spec, row[None, :])[0]


def binarize_rows(spec, rows):
    """Vectorized binarization of a (n, source_count) numeric array."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != spec.source_count:
        raise ValueError(
            f"rows have {rows.shape[-1]} columns, spec covers {spec.source_count}"
        )
    out = np.empty((rows.shape[0], spec.derived_count), dtype=np.uint8)
    pos = 0
    for feat in spec.features:
        x = rows[:, feat.source]
        if feat.kind == "passthrough":
            out[:, pos] = (x != 0).astype(np.uint8)
            pos += 1
        elif feat.kind == "onehot":
            for v in feat.categories:
                out[:, pos] = (x == v).astype(np.uint8)
                pos += 1
        elif feat.kind == "threshold":
            for rule in feat.rules:
                out[:, pos] = rule.evaluate(x).astype(np.uint8)
                pos += 1
        # constant: no derived bits
    return out


def binarize_dataset(spec, data):
    """Apply a fitted spec to a whole RawDataset."""
    vectors = binarize_rows(spec, data.rows)
    return BinaryDataset(vectors=vectors, labels=data.labels.copy(), spec=spec,
                         label_names=data.label_names)


def split_holdout(data, fraction, seed):
    """Deterministically split off a holdout part of the given fraction.

    Returns (train, test); the two index sets are disjoint and cover the
    dataset, with original row order preserved inside each part.
    """
    n = len(data)
    n_test = int(round(n * fraction))
    if n_test <= 0 or n_test >= n:
        raise ValueError(f"fraction {fraction} leaves an empty part for {n} rows")
    rng = np.random.default_rng(np.random.SeedSequence(seed & _SEED_MASK))
    perm = rng.permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])

    def take(idx):
        return BinaryDataset(vectors=data.vectors[idx], labels=data.labels[idx],
                             spec=data.spec, label_names=data.label_names)

    return take(train_idx), take(test_idx)
