"""Temporal window generation and leakage-safe fold plans."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from harbench.dataset import (
    FULL_NON_OVERLAPPING,
    LEAVE_ONE_TRIAL_OUT,
    SEMI_NON_OVERLAPPING,
    TECHNIQUES,
    Trial,
    TrialSet,
)
from harbench.errors import ConfigError

logger = logging.getLogger(__name__)

GROUPING_NONE = "none"
GROUPING_TRIAL = "by_trial"
GROUPING_SUBJECT = "by_subject"
GROUPINGS = (GROUPING_NONE, GROUPING_TRIAL, GROUPING_SUBJECT)


@dataclass(frozen=True)
class Window:
    trial_id: str
    subject_id: str
    activity_id: int
    start_index: int
    length: int
    data: np.ndarray = field(repr=False)

    @property
    def stop_index(self) -> int:
        return self.start_index + self.length


@dataclass(frozen=True)
class WindowSet:
    windows: tuple[Window, ...]
    technique: str
    window_samples: int

    def __post_init__(self) -> None:
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"unknown windowing technique {self.technique!r}")
        for w in self.windows:
            if w.length != self.window_samples:
                raise ValueError(
                    f"window of trial {w.trial_id} at {w.start_index} has length {w.length}, "
                    f"expected {self.window_samples}"
                )

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def labels(self) -> np.ndarray:
        return np.fromiter((w.activity_id for w in self.windows), dtype=np.int64, count=len(self))

    @property
    def subject_ids(self) -> list[str]:
        return [w.subject_id for w in self.windows]

    @property
    def trial_ids(self) -> list[str]:
        return [w.trial_id for w in self.windows]

    def to_index(self) -> list[dict[str, Any]]:
        """Window provenance rows (no sample data)."""
        return [
            {
                "index": i,
                "trial_id": w.trial_id,
                "subject_id": w.subject_id,
                "activity_id": w.activity_id,
                "start_index": w.start_index,
                "length": w.length,
            }
            for i, w in enumerate(self.windows)
        ]


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[np.ndarray, np.ndarray], ...]
    grouping: str

    def __post_init__(self) -> None:
        if self.grouping not in GROUPINGS:
            raise ConfigError(f"unknown grouping {self.grouping!r}")

    def __len__(self) -> int:
        return len(self.folds)

    def to_dict(self) -> dict[str, Any]:
        return {
            "grouping": self.grouping,
            "folds": [
                {"train": train.tolist(), "test": test.tolist()} for train, test in self.folds
            ],
        }


def _make_windows(trial: Trial, w: int, starts: Iterable[int]) -> list[Window]:
    return [
        Window(
            trial_id=trial.trial_id,
            subject_id=trial.subject_id,
            activity_id=trial.activity_id,
            start_index=int(s),
            length=w,
            data=trial.samples[s : s + w],
        )
        for s in starts
    ]


def window_full_non_overlapping(trial: Trial, w: int) -> list[Window]:
    """Windows at 0, w, 2w, ...; the trailing remainder is dropped."""
    if w < 2:
        raise ValueError(f"window length must be >= 2, got {w}")
    if trial.length < w:
        logger.warning("trial %s shorter than window (%d < %d)", trial.trial_id, trial.length, w)
        return []
    return _make_windows(trial, w, range(0, trial.length - w + 1, w))


def window_semi_overlapping(trial: Trial, w: int) -> list[Window]:
    """Windows with stride w/2, so consecutive windows share half their samples."""
    if w < 2:
        raise ValueError(f"window length must be >= 2, got {w}")
    if w % 2:
        raise ValueError("semi-overlap requires even window length")
    if trial.length < w:
        logger.warning("trial %s shorter than window (%d < %d)", trial.trial_id, trial.length, w)
        return []
    return _make_windows(trial, w, range(0, trial.length - w + 1, w // 2))


def window_trialset(ts: TrialSet, technique: str, w: int | None = None) -> WindowSet:
    """Window every trial of ``ts``.

    Leave-one-trial-out windows use 50% overlap inside each trial; its
    leakage guarantee comes from the fold plan, not from the windows.
    """
    if technique not in TECHNIQUES:
        raise ConfigError(f"unknown windowing technique {technique!r}")
    w = ts.manifest.window_samples if w is None else w
    slicer = window_full_non_overlapping if technique == FULL_NON_OVERLAPPING else window_semi_overlapping
    windows: list[Window] = []
    for trial in ts.trials:
        windows.extend(slicer(trial, w))
    return WindowSet(windows=tuple(windows), technique=technique, window_samples=w)


def stratified_group_assignment(
    group_labels: dict[str, int], k: int, rng: np.random.Generator
) -> dict[str, int]:
    """Deal groups to ``k`` folds, shuffled within each class.

    Groups of one class are dealt round-robin, continuing the fold counter
    across classes, so fold sizes differ by at most one group and a class
    with at least two groups never lands entirely in one fold.
    """
    by_label: dict[int, list[str]] = {}
    for group, label in group_labels.items():
        by_label.setdefault(label, []).append(group)
    assignment: dict[str, int] = {}
    counter = 0
    for label in sorted(by_label):
        groups = by_label[label]
        for j in rng.permutation(len(groups)):
            assignment[groups[j]] = counter % k
            counter += 1
    return assignment


def folds_from_assignment(groups: Sequence[str], assignment: dict[str, int], k: int):
    fold_of = np.fromiter((assignment[g] for g in groups), dtype=np.int64, count=len(groups))
    folds = []
    for f in range(k):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        folds.append((train, test))
    return tuple(folds)


def trial_folds(ws: WindowSet, k: int, seed: int) -> FoldPlan:
    """k folds over whole trials, stratified by activity."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    trial_labels: dict[str, int] = {}
    for w in ws.windows:
        trial_labels.setdefault(w.trial_id, w.activity_id)
    if k > len(trial_labels):
        raise ConfigError(f"k={k} exceeds group count ({len(trial_labels)} trials)")
    counts: dict[int, int] = {}
    for label in trial_labels.values():
        counts[label] = counts.get(label, 0) + 1
    single = sorted(label for label, n in counts.items() if n < 2)
    if single:
        raise ConfigError(
            f"class {single[0]} has a single trial; leave-one-trial-out needs >= 2 trials per class"
        )
    rng = np.random.default_rng(seed)
    assignment = stratified_group_assignment(trial_labels, k, rng)
    return FoldPlan(folds=folds_from_assignment(ws.trial_ids, assignment, k), grouping=GROUPING_TRIAL)


def plan_loto_folds(ts: TrialSet, w: int, seed: int, k: int = 10) -> tuple[WindowSet, FoldPlan]:
    """Leave-one-trial-out: overlapping windows inside trials, folds over whole trials."""
    counts: dict[int, int] = {}
    for t in ts.trials:
        counts[t.activity_id] = counts.get(t.activity_id, 0) + 1
    for label in sorted(counts):
        if counts[label] < 2:
            raise ConfigError(
                f"class {label} has a single trial; leave-one-trial-out needs >= 2 trials per class"
            )
    ws = window_trialset(ts, LEAVE_ONE_TRIAL_OUT, w)
    return ws, trial_folds(ws, k, seed)


@dataclass
class FoldAudit:
    fold: int
    ok: bool
    problems: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {"fold": self.fold, "ok": self.ok, "problems": list(self.problems)}


def shared_sample_count(ws: WindowSet, train: np.ndarray, test: np.ndarray) -> int:
    """Number of raw (trial_id, sample index) positions covered by both sides."""
    span = ws.window_samples
    lengths: dict[str, int] = {}
    for w in ws.windows:
        lengths[w.trial_id] = max(lengths.get(w.trial_id, 0), w.stop_index)
    masks = {side: {} for side in ("train", "test")}
    for side, idx in (("train", train), ("test", test)):
        cover = masks[side]
        for i in idx:
            w = ws.windows[i]
            m = cover.get(w.trial_id)
            if m is None:
                m = cover[w.trial_id] = np.zeros(lengths[w.trial_id], dtype=bool)
            m[w.start_index : w.start_index + span] = True
    shared = 0
    for trial_id, m in masks["test"].items():
        other = masks["train"].get(trial_id)
        if other is not None:
            shared += int(np.count_nonzero(m & other))
    return shared


def audit_fold_plan(ws: WindowSet, plan: FoldPlan) -> list[FoldAudit]:
    """Check every fold for index, group and raw-sample leakage.

    Raw-sample coverage is required to be disjoint whenever the plan groups
    by trial or subject, and for full-non-overlapping windows.  Semi-overlap
    windows split without grouping share samples across the split by
    construction; for those only window-index disjointness is checked.
    """
    n = len(ws)
    test_hits = np.zeros(n, dtype=np.int64)
    trial_ids = ws.trial_ids
    subject_ids = ws.subject_ids
    check_coverage = plan.grouping != GROUPING_NONE or ws.technique == FULL_NON_OVERLAPPING
    audits = []
    for f, (train, test) in enumerate(plan.folds):
        problems: list[str] = []
        if len(test) == 0:
            problems.append("empty test side")
        if len(train) == 0:
            problems.append("empty train side")
        if np.intersect1d(train, test).size:
            problems.append("train and test share window indices")
        if (len(train) and (train.min() < 0 or train.max() >= n)) or (
            len(test) and (test.min() < 0 or test.max() >= n)
        ):
            problems.append("window index out of range")
            audits.append(FoldAudit(f, False, problems))
            continue
        test_hits[test] += 1
        if plan.grouping == GROUPING_TRIAL:
            both = {trial_ids[i] for i in train} & {trial_ids[i] for i in test}
            if both:
                problems.append(f"trial(s) on both sides: {sorted(both)[:5]}")
        elif plan.grouping == GROUPING_SUBJECT:
            both = {subject_ids[i] for i in train} & {subject_ids[i] for i in test}
            if both:
                problems.append(f"subject(s) on both sides: {sorted(both)[:5]}")
        if check_coverage:
            shared = shared_sample_count(ws, train, test)
            if shared:
                problems.append(f"{shared} raw samples covered by both train and test windows")
        audits.append(FoldAudit(f, not problems, problems))
    # each window tested at most once; with several folds, exactly once
    if len(plan) > 1:
        bad = np.flatnonzero(test_hits != 1)
        if bad.size:
            for a in audits:
                a.ok = False
                a.problems.append(f"{bad.size} window(s) not tested exactly once across folds")
    elif np.any(test_hits > 1):
        audits[0].ok = False
        audits[0].problems.append("window tested more than once")
    return audits
