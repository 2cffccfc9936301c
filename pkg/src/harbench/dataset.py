"""Dataset manifests and trial ingestion.

A manifest (JSON or TOML) describes one dataset: sample rate, channel names,
which channels form 3-axis sensor triplets, the window length in seconds and
a list of trial sources.  Each trial source points at a canonical trial file,
a header-less CSV with one row per time step and one column per channel.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import statistics
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from harbench.errors import ConfigError, DataError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

FULL_NON_OVERLAPPING = "full_non_overlapping"
SEMI_NON_OVERLAPPING = "semi_non_overlapping"
LEAVE_ONE_TRIAL_OUT = "leave_one_trial_out"
TECHNIQUES = (FULL_NON_OVERLAPPING, SEMI_NON_OVERLAPPING, LEAVE_ONE_TRIAL_OUT)

# Window-technique support per benchmark dataset.  Keys are normalised names.
TABLE1_SUPPORT: dict[str, frozenset[str]] = {
    "mhealth": frozenset(TECHNIQUES),
    "uschad": frozenset(TECHNIQUES),
    "utd1": frozenset(TECHNIQUES),
    "utd2": frozenset(TECHNIQUES),
    "wharf": frozenset(TECHNIQUES),
    "wisdm": frozenset(TECHNIQUES),
    "opportunity": frozenset({SEMI_NON_OVERLAPPING}),
}
# Display names in benchmark table order.
TABLE1_DATASETS = ("MHealth", "USCHAD", "UTD-1", "UTD-2", "WHARF", "WISDM", "OPPORTUNITY")

DATA_DIR_ENV = "HARBENCH_DATA_DIR"


def normalize_dataset_name(name: str) -> str:
    """Map e.g. ``"USC-HAD"`` or ``"UTD 1"`` onto the keys of :data:`TABLE1_SUPPORT`."""
    return re.sub(r"[^a-z0-9]", "", name.lower())


def table1_support(name: str) -> frozenset[str] | None:
    """Supported windowing techniques for a benchmark dataset, or None if unknown."""
    return TABLE1_SUPPORT.get(normalize_dataset_name(name))


@dataclass(frozen=True)
class TrialSource:
    subject_id: str
    activity_id: int
    trial_id: str
    path: Path


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    sample_rate_hz: float
    channel_names: tuple[str, ...]
    triplet_groups: tuple[tuple[int, int, int], ...]
    window_seconds: float
    trial_sources: tuple[TrialSource, ...]
    supported_windowing: frozenset[str]
    source_path: Path | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("manifest name must be non-empty")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ConfigError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not (self.window_seconds > 0 and math.isfinite(self.window_seconds)):
            raise ConfigError(f"window_seconds must be positive, got {self.window_seconds}")
        if not self.channel_names:
            raise ConfigError("channel_names must list at least one channel")
        n_channels = len(self.channel_names)
        seen: set[int] = set()
        for group in self.triplet_groups:
            if len(group) != 3:
                raise ConfigError(f"triplet group {list(group)} must have exactly 3 channels")
            if len(set(group)) != 3:
                raise ConfigError(f"duplicate channel in triplet {list(group)}")
            for idx in group:
                if not 0 <= idx < n_channels:
                    raise ConfigError(
                        f"triplet group {list(group)} references channel {idx}, "
                        f"but the manifest has {n_channels} channels"
                    )
                if idx in seen:
                    raise ConfigError(f"channel {idx} appears in more than one triplet group")
                seen.add(idx)
        unknown = set(self.supported_windowing) - set(TECHNIQUES)
        if unknown:
            raise ConfigError(f"unknown windowing technique(s): {sorted(unknown)}")
        if not self.supported_windowing:
            raise ConfigError("supported_windowing must not be empty")
        expected = table1_support(self.name)
        if expected is not None and set(self.supported_windowing) != expected:
            raise ConfigError(
                f"supported_windowing for {self.name} must be {sorted(expected)} "
                f"(benchmark support table), got {sorted(self.supported_windowing)}"
            )
        if self.window_samples < 2:
            raise ConfigError(
                f"window of {self.window_seconds} s at {self.sample_rate_hz} Hz "
                "gives fewer than 2 samples"
            )
        ids = Counter(src.trial_id for src in self.trial_sources)
        dupes = sorted(t for t, n in ids.items() if n > 1)
        if dupes:
            raise ConfigError(f"duplicate trial_id(s): {dupes[:5]}")

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    @property
    def window_samples(self) -> int:
        """Window length in samples, rounded down to an even number."""
        w = int(math.floor(self.window_seconds * self.sample_rate_hz + 1e-9))
        return w - (w % 2)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "sample_rate_hz": self.sample_rate_hz,
            "channel_names": list(self.channel_names),
            "triplet_groups": [list(g) for g in self.triplet_groups],
            "window_seconds": self.window_seconds,
            "supported_windowing": sorted(self.supported_windowing),
            "trial_sources": [
                {
                    "subject_id": s.subject_id,
                    "activity_id": s.activity_id,
                    "trial_id": s.trial_id,
                    "path": str(s.path),
                }
                for s in self.trial_sources
            ],
        }


def _resolve_path(raw: str, base_dir: Path) -> Path:
    path = Path(raw).expanduser()
    if path.is_absolute():
        return path
    candidate = base_dir / path
    if not candidate.exists():
        data_dir = os.environ.get(DATA_DIR_ENV)
        if data_dir:
            fallback = Path(data_dir) / path
            if fallback.exists():
                return fallback
    return candidate


def manifest_from_dict(raw: Mapping[str, Any], base_dir: Path | None = None) -> DatasetManifest:
    """Build a manifest from parsed JSON/TOML content.

    Relative trial paths are resolved against ``data_root`` (if given),
    otherwise against ``base_dir``; ``$HARBENCH_DATA_DIR`` is the fallback
    when the file is not found there.
    """
    base_dir = Path(".") if base_dir is None else base_dir
    required = ("name", "sample_rate_hz", "channel_names", "window_seconds", "trial_sources")
    missing = [key for key in required if key not in raw]
    if missing:
        raise ConfigError(f"manifest is missing field(s): {missing}")
    root = raw.get("data_root")
    if root is not None:
        root_path = Path(str(root)).expanduser()
        base_dir = root_path if root_path.is_absolute() else base_dir / root_path

    try:
        sources = []
        for entry in raw["trial_sources"]:
            sources.append(
                TrialSource(
                    subject_id=str(entry["subject_id"]),
                    activity_id=int(entry["activity_id"]),
                    trial_id=str(entry["trial_id"]),
                    path=_resolve_path(str(entry["path"]), base_dir),
                )
            )
        name = str(raw["name"])
        supported = raw.get("supported_windowing")
        if supported is None:
            supported = table1_support(name) or TECHNIQUES
        return DatasetManifest(
            name=name,
            sample_rate_hz=float(raw["sample_rate_hz"]),
            channel_names=tuple(str(c) for c in raw["channel_names"]),
            triplet_groups=tuple(tuple(int(i) for i in g) for g in raw.get("triplet_groups", [])),
            window_seconds=float(raw["window_seconds"]),
            trial_sources=tuple(sources),
            supported_windowing=frozenset(str(t) for t in supported),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed manifest: {exc!r}") from exc


def load_manifest(path: str | os.PathLike[str]) -> DatasetManifest:
    """Read and validate a JSON or TOML dataset manifest."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse manifest {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"manifest {path} must contain a table/object at top level")
    manifest = manifest_from_dict(raw, base_dir=path.parent)
    object.__setattr__(manifest, "source_path", path.resolve())
    return manifest


@dataclass(frozen=True)
class Trial:
    """One subject performing one activity: ``samples`` is T x C."""

    subject_id: str
    activity_id: int
    trial_id: str
    samples: np.ndarray
    sample_rate_hz: float

    @property
    def length(self) -> int:
        return int(self.samples.shape[0])


@dataclass(frozen=True)
class TrialSet:
    manifest: DatasetManifest
    trials: tuple[Trial, ...]
    class_count: int
    subject_ids: tuple[str, ...]
    # source activity id -> contiguous label
    label_map: Mapping[int, int] = field(default_factory=dict)
    skipped_trials: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        labels = {t.activity_id for t in self.trials}
        if labels and labels != set(range(self.class_count)):
            raise DataError(f"labels {sorted(labels)} are not a contiguous 0..{self.class_count - 1} range")
        known = set(self.subject_ids)
        for t in self.trials:
            if t.subject_id not in known:
                raise DataError(f"trial {t.trial_id} has unknown subject {t.subject_id}")


def _read_trial_file(source: TrialSource, n_channels: int) -> np.ndarray:
    if not source.path.is_file():
        raise DataError(f"trial {source.trial_id}: file not found: {source.path}")
    try:
        data = np.loadtxt(source.path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"trial {source.trial_id}: cannot parse {source.path}: {exc}") from exc
    if data.shape[1] != n_channels:
        raise DataError(
            f"trial {source.trial_id}: expected {n_channels} columns, found {data.shape[1]}"
        )
    if not np.all(np.isfinite(data)):
        bad_row = int(np.argwhere(~np.isfinite(data))[0, 0])
        raise DataError(f"trial {source.trial_id}: non-finite sample at row {bad_row}")
    data.setflags(write=False)
    return data


def build_trialset(
    manifest: DatasetManifest,
    raw_trials: Sequence[tuple[TrialSource, np.ndarray]],
) -> TrialSet:
    """Assemble a TrialSet from already-read sample matrices.

    Shared by :func:`load_trials` and in-memory constructions (synthetic data).
    """
    if not raw_trials:
        raise DataError("no trials")
    w = manifest.window_samples
    kept: list[tuple[TrialSource, np.ndarray]] = []
    skipped: list[str] = []
    for source, samples in raw_trials:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != manifest.n_channels:
            raise DataError(
                f"trial {source.trial_id}: expected T x {manifest.n_channels} samples, "
                f"got shape {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            raise DataError(f"trial {source.trial_id}: non-finite sample")
        if samples.shape[0] < w:
            skipped.append(source.trial_id)
            continue
        kept.append((source, samples))
    if skipped:
        logger.warning(
            "%s: skipped %d trial(s) shorter than one window (%d samples)",
            manifest.name,
            len(skipped),
            w,
        )
    if not kept:
        raise DataError("no trials long enough for one window")

    source_labels = sorted({src.activity_id for src, _ in kept})
    label_map = {label: i for i, label in enumerate(source_labels)}
    subject_ids: list[str] = []
    for src, _ in kept:
        if src.subject_id not in subject_ids:
            subject_ids.append(src.subject_id)
    trials = []
    for src, samples in kept:
        if samples.flags.writeable:
            samples = samples.copy()
            samples.setflags(write=False)
        trials.append(
            Trial(
                subject_id=src.subject_id,
                activity_id=label_map[src.activity_id],
                trial_id=src.trial_id,
                samples=samples,
                sample_rate_hz=manifest.sample_rate_hz,
            )
        )
    logger.info(
        "%s: %d trials, %d classes, %d subjects",
        manifest.name,
        len(trials),
        len(source_labels),
        len(subject_ids),
    )
    return TrialSet(
        manifest=manifest,
        trials=tuple(trials),
        class_count=len(source_labels),
        subject_ids=tuple(subject_ids),
        label_map=label_map,
        skipped_trials=tuple(skipped),
    )


def load_trials(manifest: DatasetManifest, jobs: int = 1) -> TrialSet:
    """Read every trial file named by ``manifest``.

    Trials shorter than one window are skipped and listed in
    ``TrialSet.skipped_trials``; missing files and non-finite samples raise
    :class:`DataError` naming the trial.
    """
    if not manifest.trial_sources:
        raise DataError("no trials")
    sources = manifest.trial_sources
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            arrays = list(pool.map(lambda s: _read_trial_file(s, manifest.n_channels), sources))
    else:
        arrays = [_read_trial_file(s, manifest.n_channels) for s in sources]
    return build_trialset(manifest, list(zip(sources, arrays)))


@dataclass
class ValidationReport:
    dataset: str
    n_trials: int
    n_subjects: int
    class_count: int
    class_trial_counts: dict[int, int]
    class_sample_counts: dict[int, int]
    subject_trial_counts: dict[str, int]
    min_trial_length: int
    max_trial_length: int
    skipped_trials: list[str]
    imbalanced_classes: list[int]
    flags: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "n_trials": self.n_trials,
            "n_subjects": self.n_subjects,
            "class_count": self.class_count,
            "class_trial_counts": {str(k): v for k, v in self.class_trial_counts.items()},
            "class_sample_counts": {str(k): v for k, v in self.class_sample_counts.items()},
            "subject_trial_counts": dict(self.subject_trial_counts),
            "min_trial_length": self.min_trial_length,
            "max_trial_length": self.max_trial_length,
            "skipped_trials": list(self.skipped_trials),
            "imbalanced_classes": list(self.imbalanced_classes),
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def validate_trialset(ts: TrialSet, imbalance_ratio: float = 0.5) -> ValidationReport:
    """Summarise a TrialSet and flag conditions that affect evaluation.

    A class is flagged as imbalanced when its total sample count falls below
    ``imbalance_ratio`` times, or exceeds ``1 / imbalance_ratio`` times, the
    median class total.
    """
    class_trials = Counter(t.activity_id for t in ts.trials)
    class_samples: Counter[int] = Counter()
    for t in ts.trials:
        class_samples[t.activity_id] += t.length
    subject_trials = Counter(t.subject_id for t in ts.trials)
    lengths = [t.length for t in ts.trials]
    inverse_map = {v: k for k, v in ts.label_map.items()}

    flags: list[str] = []
    imbalanced: list[int] = []
    if class_samples:
        median = statistics.median(class_samples.values())
        for label in range(ts.class_count):
            ratio = class_samples[label] / median if median else 1.0
            if ratio < imbalance_ratio or ratio > 1.0 / imbalance_ratio:
                imbalanced.append(label)
                flags.append(
                    f"class imbalance: class {label} (source activity "
                    f"{inverse_map.get(label, label)}) has {ratio:.2f}x the median class samples"
                )
    if len(ts.subject_ids) < 2:
        flags.append("leave-one-subject-out not applicable: fewer than 2 subjects")
    single_trial = sorted(label for label, n in class_trials.items() if n < 2)
    if single_trial:
        flags.append(f"leave-one-trial-out not applicable: classes {single_trial} have a single trial")
    if ts.skipped_trials:
        flags.append(f"{len(ts.skipped_trials)} trial(s) skipped as shorter than one window")

    return ValidationReport(
        dataset=ts.manifest.name,
        n_trials=len(ts.trials),
        n_subjects=len(ts.subject_ids),
        class_count=ts.class_count,
        class_trial_counts={k: class_trials[k] for k in range(ts.class_count)},
        class_sample_counts={k: class_samples[k] for k in range(ts.class_count)},
        subject_trial_counts={s: subject_trials[s] for s in ts.subject_ids},
        min_trial_length=min(lengths),
        max_trial_length=max(lengths),
        skipped_trials=list(ts.skipped_trials),
        imbalanced_classes=imbalanced,
        flags=flags,
    )
