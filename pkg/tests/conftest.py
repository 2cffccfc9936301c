from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from harbench.dataset import TECHNIQUES, DatasetManifest, Trial, TrialSource, build_trialset
from harbench.synthetic import make_synthetic_trialset

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[str, tuple[str, str]] = {}


def make_trial(length: int, channels: int = 3, trial_id: str = "t0", subject: str = "s0",
               label: int = 0, seed: int = 0) -> Trial:
    rng = np.random.default_rng(seed)
    return Trial(
        subject_id=subject,
        activity_id=label,
        trial_id=trial_id,
        samples=rng.normal(size=(length, channels)),
        sample_rate_hz=50.0,
    )


def make_manifest(name: str = "toy", channels: int = 3, groups=((0, 1, 2),), window_seconds: float = 0.16,
                  rate: float = 50.0, sources=()) -> DatasetManifest:
    return DatasetManifest(
        name=name,
        sample_rate_hz=rate,
        channel_names=tuple(f"c{i}" for i in range(channels)),
        triplet_groups=tuple(tuple(g) for g in groups),
        window_seconds=window_seconds,
        trial_sources=tuple(sources),
        supported_windowing=frozenset(TECHNIQUES),
    )


def random_trialset(rng: np.random.Generator, n_classes: int | None = None):
    """Random-shaped TrialSet: 2-4 classes, 2-4 subjects, 1-2 trials per cell, varied lengths."""
    n_classes = n_classes or int(rng.integers(2, 5))
    n_subjects = int(rng.integers(2, 5))
    w_seconds = float(rng.choice([0.08, 0.12, 0.16, 0.2]))
    manifest = make_manifest(window_seconds=w_seconds)
    raw = []
    for s in range(n_subjects):
        for c in range(n_classes):
            for r in range(int(rng.integers(1, 3))):
                tid = f"s{s}_c{c}_r{r}"
                length = int(rng.integers(manifest.window_samples, 6 * manifest.window_samples))
                raw.append((TrialSource(f"s{s}", c, tid, Path(tid)), rng.normal(size=(length, 3))))
    return build_trialset(manifest, raw)


@pytest.fixture(scope="session")
def synthetic_ts():
    return make_synthetic_trialset(seed=0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        status, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {detail}")
