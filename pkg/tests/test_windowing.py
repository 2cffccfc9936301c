import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trial, random_trialset
from harbench.errors import ConfigError
from harbench.windowing import (
    GROUPING_TRIAL,
    FoldPlan,
    WindowSet,
    audit_fold_plan,
    plan_loto_folds,
    window_full_non_overlapping,
    window_semi_overlapping,
    window_trialset,
)


def brute_force_starts(T, W, stride):
    """Every start s with s % stride == 0 whose window fits in the trial."""
    return [s for s in range(T) if s % stride == 0 and s + W <= T]


def coverage(ws, indices):
    cells = set()
    for i in indices:
        w = ws.windows[i]
        cells.update((w.trial_id, j) for j in range(w.start_index, w.start_index + w.length))
    return cells


class TestFullNonOverlapping:
    def test_remainder_dropped(self):
        wins = window_full_non_overlapping(make_trial(10), 4)
        assert [w.start_index for w in wins] == [0, 4]

    def test_exact_partition(self):
        wins = window_full_non_overlapping(make_trial(8), 4)
        spans = [set(range(w.start_index, w.stop_index)) for w in wins]
        assert spans[0] | spans[1] == set(range(8))
        assert not spans[0] & spans[1]

    def test_short_trial(self, caplog):
        assert window_full_non_overlapping(make_trial(3), 4) == []
        assert "shorter than window" in caplog.text

    def test_window_data_is_slice_with_metadata(self):
        trial = make_trial(10, trial_id="t9", subject="s3", label=2)
        w = window_full_non_overlapping(trial, 4)[1]
        np.testing.assert_array_equal(w.data, trial.samples[4:8])
        assert (w.trial_id, w.subject_id, w.activity_id, w.length) == ("t9", "s3", 2, 4)

    @settings(max_examples=200, deadline=None)
    @given(T=st.integers(2, 300), W=st.integers(2, 64))
    def test_starts_match_brute_force(self, T, W):
        wins = window_full_non_overlapping(make_trial(T, channels=1), W)
        assert [w.start_index for w in wins] == brute_force_starts(T, W, W)
        assert len(wins) == (T // W if T >= W else 0)


class TestSemiOverlapping:
    def test_starts(self):
        assert [w.start_index for w in window_semi_overlapping(make_trial(10), 4)] == [0, 2, 4, 6]

    def test_single_window(self):
        semi = window_semi_overlapping(make_trial(4), 4)
        full = window_full_non_overlapping(make_trial(4), 4)
        assert [w.start_index for w in semi] == [w.start_index for w in full] == [0]

    def test_odd_window_rejected(self):
        with pytest.raises(ValueError, match="even window length"):
            window_semi_overlapping(make_trial(10), 5)

    @settings(max_examples=200, deadline=None)
    @given(T=st.integers(2, 300), half=st.integers(1, 32))
    def test_brute_force_and_count_dominance(self, T, half):
        W = 2 * half
        trial = make_trial(T, channels=1)
        semi = window_semi_overlapping(trial, W)
        full = window_full_non_overlapping(trial, W)
        assert [w.start_index for w in semi] == brute_force_starts(T, W, half)
        assert len(semi) >= len(full)
        for a, b in zip(semi, semi[1:]):
            assert len(set(range(a.start_index, a.stop_index)) & set(range(b.start_index, b.stop_index))) == half
        for a, c in zip(semi, semi[2:]):
            assert not set(range(a.start_index, a.stop_index)) & set(range(c.start_index, c.stop_index))


class TestLoto:
    def test_four_trials_two_folds(self):
        from harbench.dataset import TrialSource, build_trialset
        from conftest import make_manifest
        from pathlib import Path

        rng = np.random.default_rng(0)
        raw = [(TrialSource("s", 0, f"t{i}", Path("x")), rng.normal(size=(20, 3))) for i in range(4)]
        raw += [(TrialSource("s", 1, f"u{i}", Path("x")), rng.normal(size=(20, 3))) for i in range(2)]
        ts = build_trialset(make_manifest(), raw)
        ws, plan = plan_loto_folds(ts, 4, seed=3, k=2)
        assert plan.grouping == GROUPING_TRIAL
        for train, test in plan.folds:
            test_trials = {ws.windows[i].trial_id for i in test}
            train_trials = {ws.windows[i].trial_id for i in train}
            assert len({t for t in test_trials if t.startswith("t")}) == 2
            assert not test_trials & train_trials
        assert all(a.ok for a in audit_fold_plan(ws, plan))

    def test_single_trial_class_rejected(self):
        from harbench.dataset import TrialSource, build_trialset
        from conftest import make_manifest
        from pathlib import Path

        raw = [(TrialSource("s", 0, "a", Path("x")), np.zeros((20, 3))),
               (TrialSource("s", 0, "b", Path("x")), np.zeros((20, 3))),
               (TrialSource("s", 1, "c", Path("x")), np.zeros((20, 3)))]
        with pytest.raises(ConfigError, match="class 1"):
            plan_loto_folds(build_trialset(make_manifest(), raw), 4, seed=0, k=2)

    def test_k_exceeds_trials(self, synthetic_ts):
        with pytest.raises(ConfigError, match="exceeds group count"):
            plan_loto_folds(synthetic_ts, 32, seed=0, k=100)

    def test_deterministic_given_seed(self, synthetic_ts):
        _, a = plan_loto_folds(synthetic_ts, 32, seed=5, k=4)
        _, b = plan_loto_folds(synthetic_ts, 32, seed=5, k=4)
        _, c = plan_loto_folds(synthetic_ts, 32, seed=6, k=4)
        assert a.to_dict() == b.to_dict()
        assert a.to_dict() != c.to_dict()

    def test_every_fold_trains_on_every_class(self, synthetic_ts):
        ws, plan = plan_loto_folds(synthetic_ts, 32, seed=0, k=10)
        labels = ws.labels
        for train, _ in plan.folds:
            assert set(labels[train]) == set(range(synthetic_ts.class_count))

    def test_brute_force_coverage_audit(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            ts = random_trialset(rng)
            n_trials_min = min(
                sum(t.activity_id == c for t in ts.trials) for c in range(ts.class_count)
            )
            if n_trials_min < 2:
                continue
            k = int(rng.integers(2, 5))
            ws, plan = plan_loto_folds(ts, ts.manifest.window_samples, seed=int(rng.integers(1000)), k=k)
            tested = np.concatenate([te for _, te in plan.folds])
            assert sorted(tested.tolist()) == list(range(len(ws)))
            for train, test in plan.folds:
                assert not coverage(ws, train) & coverage(ws, test)


class TestAudit:
    def test_detects_trial_leak(self, synthetic_ts):
        ws = window_trialset(synthetic_ts, "semi_non_overlapping", 32)
        first = ws.windows[0].trial_id
        same = np.array([i for i, w in enumerate(ws.windows) if w.trial_id == first])
        rest = np.array([i for i, w in enumerate(ws.windows) if w.trial_id != first])
        train = np.concatenate([same[0::2], rest])
        test = same[1::2]
        audit = audit_fold_plan(ws, FoldPlan(((train, test),), GROUPING_TRIAL))[0]
        assert not audit.ok
        assert any("on both sides" in p for p in audit.problems)
        assert any("raw samples" in p for p in audit.problems)

    def test_detects_shared_index(self, synthetic_ts):
        ws = window_trialset(synthetic_ts, "full_non_overlapping", 32)
        idx = np.arange(len(ws))
        plan = FoldPlan(((idx, idx[:5]),), "none")
        audit = audit_fold_plan(ws, plan)[0]
        assert not audit.ok
        assert any("share window indices" in p for p in audit.problems)

    def test_detects_untested_windows(self, synthetic_ts):
        ws = window_trialset(synthetic_ts, "full_non_overlapping", 32)
        idx = np.arange(len(ws))
        plan = FoldPlan(((idx[10:], idx[:5]), (idx[:10], idx[10:])), "none")
        assert not any(a.ok for a in audit_fold_plan(ws, plan))

    def test_index_serialisation(self, synthetic_ts):
        ws = window_trialset(synthetic_ts, "full_non_overlapping", 32)
        rows = ws.to_index()
        assert len(rows) == len(ws)
        assert set(rows[0]) == {"index", "trial_id", "subject_id", "activity_id", "start_index", "length"}


def test_windowset_rejects_mixed_lengths(synthetic_ts):
    a = window_full_non_overlapping(synthetic_ts.trials[0], 32)
    b = window_full_non_overlapping(synthetic_ts.trials[1], 16)
    with pytest.raises(ValueError, match="expected 32"):
        WindowSet(tuple(a + b), "full_non_overlapping", 32)
