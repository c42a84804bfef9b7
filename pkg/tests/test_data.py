import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegalign.data import (
    ClassSpec,
    SplitMode,
    SplitPlan,
    SynthSpec,
    focal_weights,
    generate_synthetic,
    read_corpus,
    split_corpus,
    split_cross_subject,
    split_multi_subject,
    write_corpus,
)
from eegalign.montage import MONTAGE_SIZE


def small_spec(**kwargs):
    defaults = dict(
        classes=(
            ClassSpec("alpha", 10.0, focal_weights("Oz")),
            ClassSpec("beta", 20.0, focal_weights("C3")),
        ),
        subjects=3,
        trials_per_subject_per_class=4,
        duration_s=1.0,
        noise_sigma=0.0,
        seed=0,
    )
    defaults.update(kwargs)
    return SynthSpec(**defaults)


class TestGenerate:
    def test_counts_and_balance(self):
        spec = small_spec(
            classes=tuple(
                ClassSpec(n, f, focal_weights("Cz"))
                for n, f in [("a", 6.0), ("b", 10.0), ("c", 14.0), ("d", 20.0)]
            ),
            subjects=8,
            trials_per_subject_per_class=10,
            noise_sigma=0.3,
        )
        corpus = generate_synthetic(spec)
        assert len(corpus) == 320
        labels = [t.label for t in corpus]
        for name in "abcd":
            assert labels.count(name) == 80
        assert len({t.trial_id for t in corpus}) == 320

    def test_fft_peak_oracle_noise_free(self):
        corpus = generate_synthetic(small_spec())
        for trial in corpus[:8]:
            carrier = {"alpha": 10.0, "beta": 20.0}[trial.label]
            freqs = np.fft.rfftfreq(trial.n_samples, d=1 / trial.sample_rate)
            weights = focal_weights({"alpha": "Oz", "beta": "C3"}[trial.label])
            for ch in np.argsort(weights)[-5:]:
                spectrum = np.abs(np.fft.rfft(trial.data[ch]))
                assert freqs[np.argmax(spectrum)] == pytest.approx(carrier)

    def test_bitwise_determinism(self):
        a = generate_synthetic(small_spec(noise_sigma=0.5))
        b = generate_synthetic(small_spec(noise_sigma=0.5))
        for ta, tb in zip(a, b):
            assert ta.trial_id == tb.trial_id
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_order_independent_substreams(self):
        # Trial content is keyed by (seed, subject, trial, class), so changing
        # counts does not change earlier trials.
        a = generate_synthetic(small_spec(trials_per_subject_per_class=2))
        b = generate_synthetic(small_spec(trials_per_subject_per_class=4))
        by_id = {t.trial_id: t for t in b}
        for trial in a:
            np.testing.assert_array_equal(trial.data, by_id[trial.trial_id].data)

    def test_distinct_carriers_required(self):
        with pytest.raises(ValueError, match="distinct"):
            small_spec(
                classes=(
                    ClassSpec("x", 10.0, focal_weights("Cz")),
                    ClassSpec("y", 10.0, focal_weights("Oz")),
                )
            )

    def test_carrier_below_nyquist(self):
        with pytest.raises(ValueError, match="Nyquist"):
            small_spec(classes=(ClassSpec("x", 150.0, focal_weights("Cz")),))


class TestBandPowerSeparability:
    def test_nearest_centroid_oracle_perfect_on_clean_data(self):
        # Linear separability check: band-power features + nearest centroid
        # classify a noise-free corpus perfectly.
        spec = small_spec(
            classes=(
                ClassSpec("a", 6.0, focal_weights("Fz")),
                ClassSpec("b", 10.0, focal_weights("Oz")),
                ClassSpec("c", 14.0, focal_weights("C3")),
                ClassSpec("d", 20.0, focal_weights("C4")),
            ),
            subjects=4,
        )
        corpus = generate_synthetic(spec)
        carriers = [6.0, 10.0, 14.0, 20.0]

        def band_power(trial):
            freqs = np.fft.rfftfreq(trial.n_samples, d=1 / trial.sample_rate)
            spectrum = np.abs(np.fft.rfft(trial.data, axis=1)) ** 2
            return np.array(
                [spectrum[:, np.argmin(np.abs(freqs - c))].sum() for c in carriers]
            )

        features = np.stack([band_power(t) for t in corpus])
        labels = np.array([t.label for t in corpus])
        correct = 0
        for name, carrier in zip("abcd", carriers):
            centroid_idx = carriers.index(carrier)
            pred = features.argmax(axis=1) == centroid_idx
            correct += (pred & (labels == name)).sum()
        assert correct == len(corpus)


class TestEtrialIO:
    def test_round_trip_bitwise(self, tmp_path):
        corpus = generate_synthetic(small_spec(noise_sigma=0.4))
        write_corpus(corpus, tmp_path / "c", name="demo")
        name, loaded = read_corpus(tmp_path / "c")
        assert name == "demo"
        assert len(loaded) == len(corpus)
        for a, b in zip(corpus, loaded):
            assert (a.trial_id, a.subject_id, a.label) == (b.trial_id, b.subject_id, b.label)
            assert b.data.dtype == np.float32
            np.testing.assert_array_equal(a.data, b.data)

    def test_manifest_fields(self, tmp_path):
        corpus = generate_synthetic(small_spec())
        manifest_path = write_corpus(corpus, tmp_path / "c", name="demo")
        manifest = json.loads(manifest_path.read_text())
        assert manifest["format"] == "ETRIAL v1"
        rec = manifest["trials"][0]
        assert set(rec) >= {"trial_id", "subject_id", "label", "channel_names", "sample_rate", "path"}
        assert len(rec["channel_names"]) == MONTAGE_SIZE

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_corpus(tmp_path)

    def test_wrong_format_rejected(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"format": "OTHER", "trials": []}))
        with pytest.raises(ValueError, match="ETRIAL"):
            read_corpus(tmp_path)

    def test_truncated_binary_rejected(self, tmp_path):
        corpus = generate_synthetic(small_spec())[:1]
        write_corpus(corpus, tmp_path / "c", name="demo")
        bin_path = next((tmp_path / "c" / "trials").iterdir())
        bin_path.write_bytes(bin_path.read_bytes()[:-4])
        with pytest.raises(ValueError, match="divisible"):
            read_corpus(tmp_path / "c")


def trials_for_subjects(n_subjects, per_subject=8):
    spec = small_spec(
        subjects=n_subjects, trials_per_subject_per_class=per_subject // 2
    )
    return generate_synthetic(spec)


class TestCrossSubjectSplit:
    def test_explicit_boundary(self):
        trials = trials_for_subjects(54, per_subject=2)
        plan = SplitPlan(mode=SplitMode.CROSS_SUBJECT, test_subjects=12)
        split = split_cross_subject(trials, plan)
        trainval_subjects = {t.subject_id for t in split.train} | {
            t.subject_id for t in split.val
        }
        test_subjects = {t.subject_id for t in split.test}
        assert trainval_subjects == {f"S{i:02d}" for i in range(1, 43)}
        assert test_subjects == {f"S{i:02d}" for i in range(43, 55)}

    def test_subject_disjointness(self):
        trials = trials_for_subjects(10)
        split = split_cross_subject(trials, SplitPlan())
        trainval = {t.subject_id for t in split.train} | {t.subject_id for t in split.val}
        assert trainval.isdisjoint({t.subject_id for t in split.test})

    def test_ratio_arithmetic(self):
        trials = trials_for_subjects(10)
        split = split_cross_subject(
            trials, SplitPlan(train_subject_fraction=0.8)
        )
        trainval = {t.subject_id for t in split.train} | {t.subject_id for t in split.val}
        assert len(trainval) == 8
        assert len({t.subject_id for t in split.test}) == 2

    def test_too_few_subjects(self):
        trials = trials_for_subjects(2)
        with pytest.raises(ValueError, match="3 subjects"):
            split_cross_subject(trials, SplitPlan())


class TestMultiSubjectSplit:
    def test_per_subject_counts(self):
        trials = trials_for_subjects(3, per_subject=8)
        plan = SplitPlan(mode=SplitMode.MULTI_SUBJECT)
        split = split_multi_subject(trials, plan)
        for subject in {t.subject_id for t in trials}:
            n_train = sum(t.subject_id == subject for t in split.train)
            n_val = sum(t.subject_id == subject for t in split.val)
            n_test = sum(t.subject_id == subject for t in split.test)
            assert n_train + n_val == 6 and 1 <= n_val <= 2
            assert n_test == 2

    def test_every_subject_in_all_partitions(self):
        trials = trials_for_subjects(4, per_subject=8)
        split = split_multi_subject(trials, SplitPlan(mode=SplitMode.MULTI_SUBJECT))
        subjects = {t.subject_id for t in trials}
        for part in (split.train, split.val, split.test):
            assert {t.subject_id for t in part} == subjects

    def test_disjoint_union(self):
        trials = trials_for_subjects(3, per_subject=8)
        split = split_multi_subject(trials, SplitPlan(mode=SplitMode.MULTI_SUBJECT))
        ids = [t.trial_id for part in (split.train, split.val, split.test) for t in part]
        assert sorted(ids) == sorted(t.trial_id for t in trials)
        assert len(set(ids)) == len(ids)

    def test_leading_trials_go_to_train(self):
        trials = trials_for_subjects(3, per_subject=8)
        split = split_multi_subject(trials, SplitPlan(mode=SplitMode.MULTI_SUBJECT))
        by_subject_order = {}
        for i, t in enumerate(trials):
            by_subject_order.setdefault(t.subject_id, []).append(t.trial_id)
        test_ids = {t.trial_id for t in split.test}
        for subject, ordered in by_subject_order.items():
            assert set(ordered[-2:]) == {i for i in ordered if i in test_ids}

    def test_too_few_trials(self):
        trials = trials_for_subjects(3, per_subject=2)
        with pytest.raises(ValueError, match="4 trials"):
            split_multi_subject(trials, SplitPlan(mode=SplitMode.MULTI_SUBJECT))


class TestSplitProperties:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(3, 12), st.sampled_from([SplitMode.CROSS_SUBJECT, SplitMode.MULTI_SUBJECT]))
    def test_partition_of_corpus(self, n_subjects, mode):
        trials = trials_for_subjects(n_subjects, per_subject=8)
        split = split_corpus(trials, SplitPlan(mode=mode))
        ids = [t.trial_id for part in (split.train, split.val, split.test) for t in part]
        assert sorted(ids) == sorted(t.trial_id for t in trials)

    def test_deterministic(self):
        trials = trials_for_subjects(6)
        a = split_corpus(trials, SplitPlan())
        b = split_corpus(trials, SplitPlan())
        assert [t.trial_id for t in a.test] == [t.trial_id for t in b.test]
