# -*- coding: utf-8 -*-
"""Smoothed training curves and confidence interval tables"""

import os
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from asvlab.core import AsvLabValidationError
from asvlab.config import RunConfig
from asvlab.utils.filesystem import read_csv, write_to_csv

logger = logging.getLogger("asvlab.report")

SMOOTHING_WINDOW = 100
Z_95 = 1.96

REPORT_COLUMNS = ["metric", "mean", "ci_low", "ci_high", "std", "n"]

# reported metric, episode log column, scale
EPISODE_METRICS = (
    ("progress", "progress", 100.0),
    ("cte", "mean_cte", 1.0),
    ("duration", "steps", 1.0),
    ("collision_rate", "collision", 100.0),
)


@dataclass
class MetricsSeries:
    """Raw per-episode values with their Gaussian rolling mean and std"""

    name: str
    raw: np.ndarray
    smoothed: np.ndarray
    rolling_std: np.ndarray
    window: int

    def to_frame(self):
        return pd.DataFrame(
            {
                "episode": np.arange(len(self.raw)),
                self.name: self.raw,
                self.name + "_smoothed": self.smoothed,
                self.name + "_std": self.rolling_std,
            }
        )


def gaussian_weights(window):
    """Kernel over offsets -window//2 .. window//2 with sigma = window / 4"""
    half = window // 2
    if half == 0:
        return np.ones(1)
    offsets = np.arange(-half, half + 1)
    sigma = window / 4.0
    return np.exp(-0.5 * (offsets / sigma) ** 2)


def smooth(series, window=SMOOTHING_WINDOW, name="value") -> MetricsSeries:
    """Gaussian-kernel rolling mean and std of a series

    Kernels truncated by the ends of the series are renormalized over
    the samples they still cover.
    """
    raw = np.asarray(series, dtype=float).reshape(-1)
    if raw.size == 0:
        raise AsvLabValidationError("series_empty", name=name)
    if int(window) != window or window < 1:
        raise AsvLabValidationError("invalid_config_value", key="window", value=window)
    window = int(window)

    weights = gaussian_weights(window)
    half = len(weights) // 2
    padded = np.pad(raw, half, constant_values=np.nan)
    views = sliding_window_view(padded, len(weights))
    covered = ~np.isnan(views)
    w = np.where(covered, weights, 0.0)
    values = np.where(covered, views, 0.0)

    total = w.sum(axis=1)
    mean = (w * values).sum(axis=1) / total
    spread = np.where(covered, views - mean[:, None], 0.0)
    std = np.sqrt((w * spread**2).sum(axis=1) / total)
    return MetricsSeries(name, raw, mean, std, window)


def confidence_interval(samples):
    """Return (mean, low, high) of the normal-approximation 95% interval"""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size < 2:
        raise AsvLabValidationError("ci_too_few_samples", n=samples.size)
    mean = float(samples.mean())
    half = Z_95 * float(samples.std(ddof=1)) / np.sqrt(samples.size)
    return mean, mean - half, mean + half


def summary_row(metric, samples):
    samples = np.asarray(samples, dtype=float).reshape(-1)
    mean, low, high = confidence_interval(samples)
    return {
        "metric": metric,
        "mean": mean,
        "ci_low": low,
        "ci_high": high,
        "std": float(samples.std(ddof=1)),
        "n": int(samples.size),
    }


def summarize_episodes(frame):
    """Progress, CTE, duration and collision rate rows of an episode table"""
    missing = [column for _, column, _ in EPISODE_METRICS if column not in frame.columns]
    if missing:
        raise AsvLabValidationError(
            "csv_bad_columns",
            path="<episodes>",
            expected=",".join(c for _, c, _ in EPISODE_METRICS),
        )
    rows = [
        summary_row(metric, frame[column].to_numpy(dtype=float) * scale)
        for metric, column, scale in EPISODE_METRICS
    ]
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def training_curves(frame, window=SMOOTHING_WINDOW):
    """Smoothed curves of every episode metric, one frame"""
    curves = None
    for metric, column, scale in EPISODE_METRICS:
        series = smooth(frame[column].to_numpy(dtype=float) * scale, window, name=metric)
        part = series.to_frame()
        curves = part if curves is None else curves.merge(part, on="episode")
    return curves


def quartile_trend(values):
    """Means of the first and last quarters of a series"""
    values = np.asarray(values, dtype=float)
    quarter = max(1, len(values) // 4)
    return float(values[:quarter].mean()), float(values[-quarter:].mean())


# Actions --------------------------------------------------------------


def report_export(episodes, window=SMOOTHING_WINDOW, config=None, seed=None, out=None):
    """Write the smoothed training curves of episode logs

    Keyword arguments:
        - episodes -- Episode log CSV files written by agent training
        - window -- Smoothing window in episodes

    """
    run = RunConfig.load(config, seed, out)
    run.record("report", {"window": window, "episodes": sorted(episodes)})

    written = []
    result = {}
    for log_path in episodes:
        frame = read_csv(log_path)
        stem = os.path.splitext(os.path.basename(log_path))[0]
        curves_path = run.path(stem + "_curves.csv")
        write_to_csv(curves_path, training_curves(frame, window))
        written.append(curves_path)

        first, last = quartile_trend(frame["collision"].to_numpy(dtype=float))
        result[stem] = {
            "episodes": int(len(frame)),
            "curves": curves_path,
            "collision_rate_first_quarter": first,
            "collision_rate_last_quarter": last,
        }
        logger.success("training curves written to %s", curves_path)

    run.write_manifest("report export", written)
    return result


def report_summarize(episodes, config=None, seed=None, out=None):
    """Build the confidence interval table of an evaluation

    Keyword arguments:
        - episodes -- Episode CSV written by agent evaluation

    """
    run = RunConfig.load(config, seed, out)
    run.record("report", {"episodes": episodes})

    table = summarize_episodes(read_csv(episodes))
    report_path = run.path("summary.csv")
    write_to_csv(report_path, table)
    run.write_manifest("report summarize", [report_path])
    logger.success("summary written to %s", report_path)

    return {
        row["metric"]: {"mean": row["mean"], "ci": [row["ci_low"], row["ci_high"]]}
        for row in table.to_dict("records")
    }
