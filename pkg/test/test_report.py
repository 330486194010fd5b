import os

import numpy as np
import pandas as pd
import pytest

from asvlab.core import AsvLabError, AsvLabValidationError
from asvlab.utils.filesystem import read_csv, read_json, write_to_csv
from asvlab.report import (
    REPORT_COLUMNS,
    confidence_interval,
    gaussian_weights,
    quartile_trend,
    report_export,
    report_summarize,
    smooth,
    summarize_episodes,
    training_curves,
)


def _direct_smooth(values, window):
    """Weighted mean at each index over the samples the kernel covers"""
    weights = gaussian_weights(window)
    half = len(weights) // 2
    out = np.empty(len(values))
    for i in range(len(values)):
        num = den = 0.0
        for k, w in enumerate(weights):
            j = i + k - half
            if 0 <= j < len(values):
                num += w * values[j]
                den += w
        out[i] = num / den
    return out


def _episodes(n=12, seed=0):
    gen = np.random.default_rng(seed)
    return pd.DataFrame(
        {
            "episode": np.arange(n),
            "progress": gen.uniform(0.5, 1.0, size=n),
            "mean_cte": gen.uniform(5.0, 30.0, size=n),
            "steps": gen.integers(100, 800, size=n),
            "collision": (np.arange(n) % 4 == 0).astype(int),
        }
    )


def test_gaussian_weights():
    weights = gaussian_weights(8)
    assert len(weights) == 9
    assert weights[4] == 1.0
    np.testing.assert_allclose(weights, weights[::-1])
    # sigma = window / 4 puts offset 2 one standard deviation away
    assert weights[6] == pytest.approx(np.exp(-0.5))
    np.testing.assert_array_equal(gaussian_weights(1), [1.0])


@pytest.mark.parametrize("window", [2, 5, 10, 100])
def test_smooth_matches_weighted_sums(window, rng):
    values = rng.normal(size=40)
    series = smooth(values, window)
    np.testing.assert_allclose(series.smoothed, _direct_smooth(values, window))
    assert series.raw.shape == series.rolling_std.shape == (40,)
    assert np.all(series.rolling_std >= 0)


def test_smooth_window_one_is_identity(rng):
    values = rng.normal(size=10)
    series = smooth(values, 1)
    np.testing.assert_allclose(series.smoothed, values)
    np.testing.assert_allclose(series.rolling_std, 0.0)


def test_smooth_constant_series():
    series = smooth(np.full(7, 3.0), 4)
    np.testing.assert_allclose(series.smoothed, 3.0)
    np.testing.assert_allclose(series.rolling_std, 0.0, atol=1e-12)


def test_smooth_bad_input():
    with pytest.raises(AsvLabValidationError):
        smooth([], 4)
    with pytest.raises(AsvLabValidationError):
        smooth([1.0, 2.0], 0)
    with pytest.raises(AsvLabValidationError):
        smooth([1.0, 2.0], 2.5)


def test_confidence_interval():
    samples = np.array([42.6, 42.7, 42.8, 42.5, 42.75])
    mean, low, high = confidence_interval(samples)
    half = 1.96 * samples.std(ddof=1) / np.sqrt(5)
    assert mean == pytest.approx(samples.mean())
    assert low == pytest.approx(mean - half)
    assert high == pytest.approx(mean + half)

    with pytest.raises(AsvLabValidationError):
        confidence_interval([1.0])


def test_summarize_episodes():
    frame = _episodes()
    table = summarize_episodes(frame)
    assert list(table.columns) == REPORT_COLUMNS
    rows = table.set_index("metric")
    assert rows.loc["progress", "mean"] == pytest.approx(100.0 * frame["progress"].mean())
    assert rows.loc["cte", "mean"] == pytest.approx(frame["mean_cte"].mean())
    assert rows.loc["duration", "mean"] == pytest.approx(frame["steps"].mean())
    assert rows.loc["collision_rate", "mean"] == pytest.approx(25.0)
    assert (rows["n"] == 12).all()

    with pytest.raises(AsvLabValidationError):
        summarize_episodes(frame.drop(columns=["mean_cte"]))


def test_training_curves():
    curves = training_curves(_episodes(), window=4)
    assert len(curves) == 12
    assert list(curves.columns) == ["episode"] + [
        column
        for metric in ("progress", "cte", "duration", "collision_rate")
        for column in (metric, metric + "_smoothed", metric + "_std")
    ]


def test_quartile_trend():
    first, last = quartile_trend([1, 1, 0, 0, 0, 0, 0, 0])
    assert (first, last) == (1.0, 0.0)
    assert quartile_trend([3.0]) == (3.0, 3.0)


def test_report_actions(tmp_path):
    log_path = str(tmp_path / "episodes.csv")
    write_to_csv(log_path, _episodes())

    out = str(tmp_path / "curves")
    result = report_export([log_path], window=4, out=out)
    assert result["episodes"]["episodes"] == 12
    assert result["episodes"]["collision_rate_first_quarter"] == pytest.approx(1.0 / 3.0)
    assert os.path.exists(os.path.join(out, "episodes_curves.csv"))
    manifest = read_json(os.path.join(out, "manifest.json"))
    assert manifest["command"] == "report export"
    assert list(manifest["artifacts"]) == ["episodes_curves.csv"]

    out = str(tmp_path / "summary")
    summary = report_summarize(log_path, out=out)
    assert set(summary) == {"progress", "cte", "duration", "collision_rate"}
    low, high = summary["progress"]["ci"]
    assert low <= summary["progress"]["mean"] <= high
    assert len(read_csv(os.path.join(out, "summary.csv"))) == 4


def test_report_missing_log(tmp_path):
    with pytest.raises(AsvLabError):
        report_summarize(str(tmp_path / "nope.csv"), out=str(tmp_path))
