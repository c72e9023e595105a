"""Cross-model audit of paired feature contributions.

Two models explained over a shared feature space should agree (or, for
converse prediction targets, disagree) about which features matter. The
audit pairs up per-feature contributions, correlates them, and runs a
2x2 sign contingency test with Pearson residuals.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

DEFAULT_THRESHOLD = 0.0001


@dataclass(frozen=True)
class PairedSample:
    """Paired contributions that survived the collection filter."""

    a: np.ndarray  # model A contributions
    b: np.ndarray  # model B contributions
    provenance: tuple  # (instance_id, feature_index) per pair
    threshold: float
    mode: str  # "both" or "either"

    def __len__(self):
        return self.a.shape[0]


@dataclass(frozen=True)
class ContingencyTable:
    """2x2 sign counts; rows = model A -/+, columns = model B -/+."""

    counts: np.ndarray

    def __post_init__(self):
        if self.counts.shape != (2, 2):
            raise ValueError("contingency table must be 2x2")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")

    @property
    def total(self):
        return int(self.counts.sum())


def collect_pairs(reports_a, reports_b, high_class_a, high_class_b,
                  threshold=DEFAULT_THRESHOLD, mode="both"):
    """Gather (instance, feature) contribution pairs for the audit.

    A pair is kept when at least one model predicted its high class for
    the instance and the contribution magnitudes clear the threshold in
    both models ("both", default) or in at least one ("either").
    """
    if mode not in ("both", "either"):
        raise ValueError(f'mode must be "both" or "either", got {mode!r}')
    if len(reports_a) != len(reports_b):
        raise ValueError("report sets cover different instance counts")

    a_vals, b_vals, provenance = [], [], []
    for ra, rb in zip(reports_a, reports_b):
        if ra.instance_id != rb.instance_id:
            raise ValueError(
                f"instance mismatch: {ra.instance_id!r} vs {rb.instance_id!r}"
            )
        if len(ra.features) != len(rb.features):
            raise ValueError("reports cover different feature spaces")
        if ra.predicted_class != high_class_a and rb.predicted_class != high_class_b:
            continue
        ca = ra.contributions
        cb = rb.contributions
        above_a = np.abs(ca) > threshold
        above_b = np.abs(cb) > threshold
        keep = (above_a & above_b) if mode == "both" else (above_a | above_b)
        for k in np.nonzero(keep)[0]:
            a_vals.append(ca[k])
            b_vals.append(cb[k])
            provenance.append((ra.instance_id, int(k)))

    return PairedSample(a=np.array(a_vals, dtype=np.float64),
                        b=np.array(b_vals, dtype=np.float64),
                        provenance=tuple(provenance),
                        threshold=float(threshold), mode=mode)


def _check_pairs(sample):
    if len(sample) < 2:
        raise ValueError(f"need at least 2 pairs, have {len(sample)}")
    if np.ptp(sample.a) == 0 or np.ptp(sample.b) == 0:
        raise ValueError("correlation undefined for a constant sequence")


def pearson_r(sample):
    _check_pairs(sample)
    return float(stats.pearsonr(sample.a, sample.b).statistic)


def spearman_rho(sample):
    """Pearson correlation of average ranks (ties share their mean rank)."""
    _check_pairs(sample)
    return float(stats.spearmanr(sample.a, sample.b).statistic)


def kendall_tau(sample):
    """Tie-corrected tau-b; contributions carry heavy ties near zero."""
    _check_pairs(sample)
    return float(stats.kendalltau(sample.a, sample.b).statistic)


def sign_table(sample):
    """Classify every pair by (sign a, sign b) and count.

    Requires strictly signed components; the default collection threshold
    guarantees this in "both" mode.
    """
    if (sample.a == 0).any() or (sample.b == 0).any():
        raise ValueError("sign table undefined for zero-valued contributions")
    counts = np.zeros((2, 2), dtype=np.int64)
    rows = (sample.a > 0).astype(np.int64)
    cols = (sample.b > 0).astype(np.int64)
    np.add.at(counts, (rows, cols), 1)
    return ContingencyTable(counts=counts)


def chi_square_2x2(table):
    """Pearson chi-square without continuity correction, df = 1.

    Returns (statistic, df, residuals) with residuals (O - E) / sqrt(E).
    """
    obs = table.counts.astype(np.float64)
    row_sums = obs.sum(axis=1)
    col_sums = obs.sum(axis=0)
    if (row_sums == 0).any() or (col_sums == 0).any():
        raise ValueError("chi-square undefined with a zero marginal total")
    expected = np.outer(row_sums, col_sums) / obs.sum()
    residuals = (obs - expected) / np.sqrt(expected)
    statistic = float((residuals ** 2).sum())
    return statistic, 1, residuals


def audit_summary(reports_a, reports_b, high_class_a, high_class_b,
                  threshold=DEFAULT_THRESHOLD, mode="both"):
    """Run the whole audit and return a plain-dict document.

    In "either" mode a surviving pair may carry an exactly-zero component
    (a feature untouched by one model); such pairs stay in the
    correlations but are dropped from the sign table, with the dropped
    count reported.
    """
    sample = collect_pairs(reports_a, reports_b, high_class_a, high_class_b,
                           threshold=threshold, mode=mode)
    signed = (sample.a != 0) & (sample.b != 0)
    dropped = int(len(sample) - signed.sum())
    signed_sample = PairedSample(a=sample.a[signed], b=sample.b[signed],
                                 provenance=tuple(p for p, s in zip(sample.provenance, signed) if s),
                                 threshold=sample.threshold, mode=sample.mode)
    table = sign_table(signed_sample)
    statistic, df, residuals = chi_square_2x2(table)
    return {
        "pair_count": len(sample),
        "threshold": sample.threshold,
        "filter_mode": sample.mode,
        "pearson_r": pearson_r(sample),
        "spearman_rho": spearman_rho(sample),
        "kendall_tau": kendall_tau(sample),
        "sign_table": [[int(c) for c in row] for row in table.counts],
        "sign_table_dropped_zero_pairs": dropped,
        "chi_square": {
            "statistic": statistic,
            "df": df,
            "residuals": [[float(r) for r in row] for row in residuals],
        },
    }
