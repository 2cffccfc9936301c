"""Handcrafted window features.

Eleven statistics per channel (mean, population std, average absolute
difference, max, min, median, skewness, excess kurtosis, interquartile range,
trapezoidal area and squared area) followed by the average resultant
magnitude of each 3-axis channel triplet.  A window with C channels and G
triplets yields 11*C + G values.

Conventions: central moments use 1/W; quantiles interpolate linearly at
position (W-1)*q; the trapezoid uses unit sample spacing; skewness and
kurtosis are 0 for (numerically) constant channels.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from harbench.dataset import DatasetManifest
from harbench.windowing import Window, WindowSet

CHANNEL_FEATURES = (
    "mean",
    "std",
    "aad",
    "max",
    "min",
    "median",
    "skew",
    "kurtosis",
    "iqr",
    "auc",
    "sq_auc",
)
N_CHANNEL_FEATURES = len(CHANNEL_FEATURES)

# relative to max(1, max|x|)
DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: tuple[str, ...]


def _trapezoid(x: np.ndarray) -> np.ndarray:
    return x.sum(axis=0) - 0.5 * (x[0] + x[-1])


def window_channel_features(data: np.ndarray) -> np.ndarray:
    """Per-channel statistics of a W x C block, returned as C x 11."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 samples per channel, got {x.shape[0]}")
    mean = x.mean(axis=0)
    dev = x - mean
    dev2 = dev * dev
    m2 = dev2.mean(axis=0)
    m3 = (dev2 * dev).mean(axis=0)
    m4 = (dev2 * dev2).mean(axis=0)
    std = np.sqrt(m2)
    aad = np.abs(dev).mean(axis=0)
    q1, median, q3 = np.quantile(x, [0.25, 0.5, 0.75], axis=0)

    scale = np.maximum(1.0, np.abs(x).max(axis=0))
    flat = std < DEGENERATE_STD * scale
    safe_m2 = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, m3 / safe_m2**1.5)
    kurt = np.where(flat, 0.0, m4 / (safe_m2 * safe_m2) - 3.0)

    return np.stack(
        [
            mean,
            std,
            aad,
            x.max(axis=0),
            x.min(axis=0),
            median,
            skew,
            kurt,
            q3 - q1,
            _trapezoid(x),
            _trapezoid(x * x),
        ],
        axis=1,
    )


def channel_features(series: Sequence[float] | np.ndarray) -> np.ndarray:
    """The 11 statistics of one channel, in :data:`CHANNEL_FEATURES` order."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("channel_features expects a 1-D series")
    return window_channel_features(x[:, None])[0]


def resultant_magnitude(x, y, z) -> np.ndarray:
    x, y, z = (np.asarray(a, dtype=np.float64) for a in (x, y, z))
    if not x.shape == y.shape == z.shape:
        raise ValueError(f"axis length mismatch: {x.shape}, {y.shape}, {z.shape}")
    return np.sqrt(x * x + y * y + z * z)


def ara(x, y, z) -> float:
    """Average resultant magnitude of a 3-axis triplet."""
    return float(resultant_magnitude(x, y, z).mean())


def feature_layout(manifest: DatasetManifest) -> tuple[str, ...]:
    names = [f"{ch}:{feat}" for ch in manifest.channel_names for feat in CHANNEL_FEATURES]
    for group in manifest.triplet_groups:
        names.append("ara:" + "|".join(manifest.channel_names[i] for i in group))
    return tuple(names)


def _window_values(data: np.ndarray, groups: Sequence[Sequence[int]]) -> np.ndarray:
    per_channel = window_channel_features(data).ravel()
    if not groups:
        return per_channel
    idx = np.asarray(groups, dtype=np.intp)
    # W x G x 3
    trip = data[:, idx]
    aras = np.sqrt((trip * trip).sum(axis=2)).mean(axis=0)
    return np.concatenate([per_channel, aras])


def extract_features(window: Window, manifest: DatasetManifest) -> FeatureVector:
    if window.data.ndim != 2 or window.data.shape[1] != manifest.n_channels:
        raise ValueError(
            f"window has shape {window.data.shape}, manifest declares {manifest.n_channels} channels"
        )
    values = _window_values(window.data, manifest.triplet_groups)
    return FeatureVector(values=values, layout=feature_layout(manifest))


def extract_feature_matrix(
    ws: WindowSet, manifest: DatasetManifest
) -> tuple[np.ndarray, tuple[str, ...], np.ndarray]:
    """Featurise every window.

    Returns ``(X, layout, seconds)`` where ``X`` is N x D and ``seconds`` holds
    the wall-clock extraction time of each window.
    """
    layout = feature_layout(manifest)
    X = np.empty((len(ws), len(layout)), dtype=np.float64)
    seconds = np.empty(len(ws), dtype=np.float64)
    groups = manifest.triplet_groups
    for i, w in enumerate(ws.windows):
        if w.data.shape[1] != manifest.n_channels:
            raise ValueError(f"window {i} has {w.data.shape[1]} channels, expected {manifest.n_channels}")
        t0 = time.perf_counter()
        X[i] = _window_values(w.data, groups)
        seconds[i] = time.perf_counter() - t0
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.isfinite(X))[0, 0])
        raise ValueError(f"non-finite feature in window {bad} (trial {ws.windows[bad].trial_id})")
    return X, layout, seconds


PROVENANCE_COLUMNS = ("trial_id", "subject_id", "label", "start_index")


def write_feature_csv(path: str | Path, X: np.ndarray, layout: Sequence[str], ws: WindowSet) -> None:
    """One row per window: features then provenance columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*layout, *PROVENANCE_COLUMNS])
        for row, w in zip(X, ws.windows):
            writer.writerow(
                [repr(float(v)) for v in row]
                + [w.trial_id, w.subject_id, w.activity_id, w.start_index]
            )
