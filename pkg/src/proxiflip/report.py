"""Serialization of explanations to JSON, CSV, and PGM heatmaps."""

import json

import numpy as np


def report_to_dict(report):
    """Fixed-field-order dict for a ContributionReport."""
    return {
        "model_id": report.model_id,
        "instance_id": report.instance_id,
        "predicted_class": report.predicted_class,
        "target_class": report.target_class,
        "votes": list(report.votes),
        "normalized": report.normalized,
        "features": [
            {
                "index": f.feature_index,
                "name": report.feature_names[f.feature_index]
                if report.feature_names else f"f{f.feature_index}",
                "contribution": f.contribution,
                "closeness": {
                    "in_before": f.closeness.in_before,
                    "out_before": f.closeness.out_before,
                    "in_after": f.closeness.in_after,
                    "out_after": f.closeness.out_after,
                    "delta_in": f.closeness.delta_in,
                    "delta_out": f.closeness.delta_out,
                },
                "changed_trees": f.changed_tree_count,
            }
            for f in report.features
        ],
    }


def export_report_json(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, separators=(",", ":"), ensure_ascii=True)
        fh.write("\n")


CSV_HEADER = "feature_index,name,contribution,in_before,out_before,in_after,out_after"


def export_report_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for f in report.features:
            name = (report.feature_names[f.feature_index]
                    if report.feature_names else f"f{f.feature_index}")
            c = f.closeness
            fh.write(
                f"{f.feature_index},{name},{f.contribution:.6f},"
                f"{c.in_before:.6f},{c.out_before:.6f},{c.in_after:.6f},{c.out_after:.6f}\n"
            )


def values_to_pixels(values, scale):
    """Map reals to uint8 grayscale.

    "symmetric" centers zero on 128 and stretches +-max|value| to 255/0,
    so sign survives rendering (an all-zero map is uniform 128).
    "minmax" stretches [min, max] onto [0, 255]; a constant map becomes 0.
    """
    values = np.asarray(values, dtype=np.float64)
    if scale == "symmetric":
        m = float(np.max(np.abs(values))) if values.size else 0.0
        if m == 0.0:
            return np.full(values.shape, 128, dtype=np.uint8)
        return np.rint(255.0 * (values + m) / (2.0 * m)).astype(np.uint8)
    if scale == "minmax":
        lo = float(values.min()) if values.size else 0.0
        hi = float(values.max()) if values.size else 0.0
        if hi == lo:
            return np.zeros(values.shape, dtype=np.uint8)
        return np.rint(255.0 * (values - lo) / (hi - lo)).astype(np.uint8)
    raise ValueError(f'scale must be "symmetric" or "minmax", got {scale!r}')


def export_heatmap_pgm(values, shape, path, scale="symmetric"):
    """Write per-feature values as a binary PGM (P5, maxval 255) image."""
    rows, cols = shape
    values = np.asarray(values, dtype=np.float64)
    if rows < 1 or cols < 1:
        raise ValueError(f"grid shape {rows}x{cols} is not positive")
    if values.size != rows * cols:
        raise ValueError(f"{values.size} values do not fill a {rows}x{cols} grid")
    pixels = values_to_pixels(values, scale).reshape(rows, cols)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path):
    """Read back a P5 PGM written by export_heatmap_pgm: (array, rows, cols)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path}: not a P5 PGM")
        dims = fh.readline().split()
        cols, rows = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError(f"{path}: unsupported maxval {maxval}")
        data = np.frombuffer(fh.read(rows * cols), dtype=np.uint8)
    return data.reshape(rows, cols), rows, cols
