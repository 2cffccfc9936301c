"""Synthetic multi-subject recordings with class-dependent signals.

Used by the test suite and for trying the CLI without downloading a public
dataset.  Each class is a sinusoid with its own frequency and offset on
every channel, plus subject-specific gain and Gaussian noise, so a window
classifier can separate the classes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from harbench.dataset import TECHNIQUES, DatasetManifest, TrialSource, TrialSet, build_trialset


def _channel_layout(n_triplets: int, n_scalar: int) -> tuple[list[str], list[list[int]]]:
    names: list[str] = []
    groups: list[list[int]] = []
    for g in range(n_triplets):
        groups.append([len(names), len(names) + 1, len(names) + 2])
        names.extend(f"s{g}_{axis}" for axis in "xyz")
    names.extend(f"aux{j}" for j in range(n_scalar))
    return names, groups


def synthetic_signals(
    n_classes: int = 3,
    n_subjects: int = 4,
    trials_per_cell: int = 2,
    trial_length: int = 200,
    n_triplets: int = 2,
    n_scalar: int = 0,
    sample_rate_hz: float = 50.0,
    noise: float = 0.3,
    seed: int = 0,
) -> list[tuple[str, int, str, np.ndarray]]:
    """(subject_id, activity_id, trial_id, T x C samples) for every trial.

    Activity ids start at 1, as in most public datasets.
    """
    rng = np.random.default_rng(seed)
    n_channels = 3 * n_triplets + n_scalar
    t = np.arange(trial_length) / sample_rate_hz
    trials = []
    for s in range(n_subjects):
        gain = 1.0 + 0.1 * rng.standard_normal(n_channels)
        for c in range(n_classes):
            freq = 1.0 + 1.5 * c
            offset = 2.0 * c - (n_classes - 1)
            for r in range(trials_per_cell):
                phase = rng.uniform(0, 2 * np.pi, n_channels)
                clean = offset + (1.0 + 0.5 * c) * np.sin(2 * np.pi * freq * t[:, None] + phase)
                samples = gain * clean + noise * rng.standard_normal((trial_length, n_channels))
                trials.append((f"subj{s + 1}", c + 1, f"subj{s + 1}_act{c + 1}_rep{r + 1}", samples))
    return trials


def synthetic_manifest(
    name: str = "synthetic",
    n_triplets: int = 2,
    n_scalar: int = 0,
    sample_rate_hz: float = 50.0,
    window_seconds: float = 0.64,
    sources: tuple[TrialSource, ...] = (),
) -> DatasetManifest:
    names, groups = _channel_layout(n_triplets, n_scalar)
    return DatasetManifest(
        name=name,
        sample_rate_hz=sample_rate_hz,
        channel_names=tuple(names),
        triplet_groups=tuple(tuple(g) for g in groups),
        window_seconds=window_seconds,
        trial_sources=sources,
        supported_windowing=frozenset(TECHNIQUES),
    )


def make_synthetic_trialset(
    n_classes: int = 3,
    n_subjects: int = 4,
    trials_per_cell: int = 2,
    trial_length: int = 200,
    n_triplets: int = 2,
    n_scalar: int = 0,
    sample_rate_hz: float = 50.0,
    window_seconds: float = 0.64,
    noise: float = 0.3,
    seed: int = 0,
) -> TrialSet:
    """In-memory TrialSet (no files)."""
    raw = synthetic_signals(
        n_classes, n_subjects, trials_per_cell, trial_length, n_triplets, n_scalar,
        sample_rate_hz, noise, seed,
    )
    sources = tuple(TrialSource(s, a, tid, Path(f"{tid}.csv")) for s, a, tid, _ in raw)
    manifest = synthetic_manifest("synthetic", n_triplets, n_scalar, sample_rate_hz, window_seconds, sources)
    return build_trialset(manifest, [(src, x) for src, (_, _, _, x) in zip(sources, raw)])


def write_synthetic_dataset(
    directory: str | Path,
    name: str = "synthetic",
    window_seconds: float = 0.64,
    sample_rate_hz: float = 50.0,
    n_triplets: int = 2,
    n_scalar: int = 0,
    **signal_kwargs,
) -> Path:
    """Write canonical trial CSVs plus ``manifest.json``; returns the manifest path."""
    root = Path(directory)
    (root / "trials").mkdir(parents=True, exist_ok=True)
    raw = synthetic_signals(
        n_triplets=n_triplets, n_scalar=n_scalar, sample_rate_hz=sample_rate_hz, **signal_kwargs
    )
    names, groups = _channel_layout(n_triplets, n_scalar)
    entries = []
    for subject, activity, trial_id, samples in raw:
        rel = f"trials/{trial_id}.csv"
        np.savetxt(root / rel, samples, delimiter=",", fmt="%.17g")
        entries.append({"subject_id": subject, "activity_id": activity, "trial_id": trial_id, "path": rel})
    manifest = {
        "name": name,
        "sample_rate_hz": sample_rate_hz,
        "channel_names": names,
        "triplet_groups": groups,
        "window_seconds": window_seconds,
        "supported_windowing": list(TECHNIQUES),
        "trial_sources": entries,
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path
