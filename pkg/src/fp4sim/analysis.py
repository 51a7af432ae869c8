"""Distribution diagnostics for weight/activation tensors: histograms and channel outliers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .occ import fidelity_metrics


@dataclass
class TensorReport:
    edges: np.ndarray
    counts: np.ndarray
    per_channel_absmax: np.ndarray
    outlier_channels: np.ndarray
    fidelity: dict = field(default_factory=dict)


def histogram(x, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform bins over [min, max]; each bin is [lo, hi) except the last, which is closed."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("histogram of an empty tensor")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        # degenerate range: a unit-wide window centered on the value
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.searchsorted(edges, x, side="right") - 1
    idx = np.clip(idx, 0, bins - 1)
    return edges, np.bincount(idx, minlength=bins)


def channel_outlier_stats(x, factor: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-column absmax and the columns whose absmax exceeds factor * median."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.size == 0:
        raise ValueError("empty tensor")
    absmax = np.abs(x).max(axis=0)
    flagged = np.flatnonzero(absmax > factor * np.median(absmax))
    return absmax, flagged


def tensor_report(x, bins: int = 100, factor: float = 10.0, quantized=None) -> TensorReport:
    edges, counts = histogram(x, bins)
    absmax, flagged = channel_outlier_stats(x, factor)
    fid = fidelity_metrics(x, quantized) if quantized is not None else {}
    return TensorReport(edges, counts, absmax, flagged, fid)


def write_histogram_csv(path, edges, counts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["edge_lo", "edge_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def write_channels_csv(path, absmax, flagged) -> None:
    flagged = set(int(i) for i in flagged)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "absmax", "flagged"])
        for i, a in enumerate(absmax):
            w.writerow([i, repr(float(a)), int(i in flagged)])
