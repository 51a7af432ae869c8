import csv

import numpy as np
import pytest

from fp4sim.analysis import (
    channel_outlier_stats, histogram, tensor_report, write_channels_csv, write_histogram_csv,
)


def test_histogram_counts_every_element():
    x = np.random.default_rng(0).standard_normal((30, 40))
    edges, counts = histogram(x, 17)
    assert len(edges) == 18 and counts.sum() == x.size
    assert edges[0] == x.min() and edges[-1] == x.max()


def test_histogram_bin_edges_inclusive_last():
    edges, counts = histogram(np.array([0.0, 1.0, 2.0, 3.0, 4.0]), 4)
    np.testing.assert_array_equal(edges, [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(counts, [1, 1, 1, 2])


def test_histogram_constant_tensor():
    edges, counts = histogram(np.full(5, 2.0), 3)
    assert edges[0] == 1.5 and edges[-1] == 2.5
    assert counts.sum() == 5


def test_histogram_errors():
    with pytest.raises(ValueError):
        histogram(np.array([]), 3)
    with pytest.raises(ValueError):
        histogram(np.ones(3), 0)


def test_injected_channels_are_flagged():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((128, 64))
    injected = [3, 17, 40]
    x[:, injected] *= 50.0
    absmax, flagged = channel_outlier_stats(x, factor=10.0)
    assert list(flagged) == injected
    assert absmax.shape == (64,)


def test_no_flags_on_gaussian():
    x = np.random.default_rng(2).standard_normal((256, 32))
    assert channel_outlier_stats(x)[1].size == 0


def test_tensor_report_fidelity():
    x = np.random.default_rng(3).standard_normal((8, 8))
    rep = tensor_report(x, bins=4, quantized=x)
    assert rep.fidelity["mse"] == 0.0
    assert rep.counts.sum() == 64
    assert tensor_report(x).fidelity == {}


def test_csv_writers(tmp_path):
    edges, counts = histogram(np.arange(10.0), 5)
    write_histogram_csv(tmp_path / "h.csv", edges, counts)
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["edge_lo", "edge_hi", "count"] and len(rows) == 6
    assert sum(int(r[2]) for r in rows[1:]) == 10

    write_channels_csv(tmp_path / "c.csv", np.array([1.0, 20.0]), np.array([1]))
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows == [["channel", "absmax", "flagged"], ["0", "1.0", "0"], ["1", "20.0", "1"]]
