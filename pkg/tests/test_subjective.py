import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picsel.content_features import FeatureMatrix
from picsel.subjective import (
    ExpertSet,
    RatingEvent,
    RidgeRegressor,
    WorkerProfile,
    bootstrap_rmse,
    build_worker_profiles,
    compute_mos,
    cross_validate,
    error_zscores,
    expert_bootstrap_std,
    fit_alignment,
    generate_test_questions,
    icc_oneway,
    map_score,
    plcc,
    read_expert_table,
    read_ratings,
    screen_line_clickers,
    screen_low_correlation,
    screen_workers,
    srocc,
    valid_answer_set,
    worker_accuracy,
    write_expert_table,
    write_ratings,
)
from picsel.subjective import TestQuestion as QuizQuestion


def ev(worker, image, score, t=0.0, is_test=False):
    return RatingEvent(worker_id=worker, image_id=image, score=score,
                       timestamp=t, is_test=is_test)


class TestMapping:
    def test_endpoints_and_midpoint(self):
        assert map_score(1) == 1.0
        assert map_score(5) == 100.0
        assert map_score(3) == 50.5

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            map_score(0.5)
        with pytest.raises(ValueError):
            map_score(5.5)

    @given(st.floats(min_value=1, max_value=5))
    def test_affine_and_monotone(self, s):
        assert map_score(s) == pytest.approx(1 + 24.75 * (s - 1))


class TestMOS:
    def test_mean_and_population_std(self):
        ratings = [ev("w1", "a", 1), ev("w2", "a", 5), ev("w1", "b", 3)]
        records, residue = compute_mos(ratings)
        assert residue == ()
        by_id = {r.image_id: r for r in records}
        assert by_id["a"].mos == pytest.approx(50.5)
        assert by_id["a"].std == pytest.approx(49.5)  # population over {1,100}
        assert by_id["b"].n_ratings == 1

    def test_excluded_worker_leaves_residue(self):
        ratings = [ev("bad", "a", 2), ev("good", "b", 4)]
        records, residue = compute_mos(ratings, exclude_workers={"bad"})
        assert [r.image_id for r in records] == ["b"]
        assert residue == ("a",)

    def test_exclude_test_answers(self):
        ratings = [ev("w", "a", 2, is_test=True), ev("w", "a", 4)]
        records, _ = compute_mos(ratings, exclude_test=True)
        assert records[0].mos == pytest.approx(map_score(4))


class TestCorrelations:
    def test_srocc_frozen_example(self):
        assert srocc([1, 2, 3, 4, 5], [1, 3, 2, 5, 4]) == pytest.approx(0.8)

    def test_plcc_perfect_line(self):
        x = np.array([1.0, 2.0, 4.0, 9.0])
        assert plcc(x, 3 * x - 2) == pytest.approx(1.0)

    def test_constant_raises(self):
        with pytest.raises(ValueError):
            plcc([1, 1, 1], [1, 2, 3])
        with pytest.raises(ValueError):
            plcc([1, 2], [1, 2])

    def test_srocc_ignores_monotone_warp(self):
        x = np.array([0.1, 0.7, 1.3, 2.0, 3.5])
        assert srocc(x, np.exp(x)) == pytest.approx(1.0)


def crowd(n_images=15, n_workers=6, seed=0, inject=None):
    """Well-behaved crowd; inject maps worker -> scoring function."""
    rng = np.random.default_rng(seed)
    latent = {f"i{j:02d}": float(rng.uniform(1.2, 4.8)) for j in range(n_images)}
    out = []
    for w in range(n_workers):
        worker = f"w{w}"
        fn = (inject or {}).get(worker)
        for image, q in latent.items():
            if fn is None:
                score = int(np.clip(round(q + rng.normal(0, 0.4)), 1, 5))
            else:
                score = fn(q)
            out.append(ev(worker, image, score))
    return out, latent


class TestScreening:
    def test_reversed_worker_flagged(self):
        ratings, _ = crowd(inject={"w0": lambda q: int(np.clip(round(6 - q), 1, 5))})
        flagged, corr = screen_low_correlation(ratings, threshold=0.5, min_ratings=10)
        assert "w0" in flagged
        assert corr["w0"] < 0.0
        assert "w1" not in flagged

    def test_constant_worker_flagged_as_undefined(self):
        ratings, _ = crowd(inject={"w0": lambda q: 3})
        flagged, corr = screen_low_correlation(ratings)
        assert "w0" in flagged
        assert corr["w0"] is None

    def test_worker_below_min_ratings_skipped(self):
        ratings, _ = crowd()
        ratings.append(ev("tiny", "i00", 1))
        flagged, corr = screen_low_correlation(ratings, min_ratings=10)
        assert "tiny" not in flagged
        assert "tiny" not in corr

    def test_line_clicker_ratio_cases(self):
        profiles = [
            WorkerProfile("stuck", (40, 0, 0, 0, 0)),     # inf
            WorkerProfile("heavy", (25, 10, 0, 0, 0)),    # 2.5 > 2.0
            WorkerProfile("edge", (20, 10, 0, 0, 0)),     # exactly 2.0: stays
            WorkerProfile("fine", (8, 8, 8, 8, 8)),       # 0.25
        ]
        flagged = screen_line_clickers(profiles, max_ratio=2.0)
        assert flagged == {"stuck", "heavy"}

    def test_screen_workers_attaches_flags(self):
        ratings, _ = crowd(inject={
            "w0": lambda q: 5,
            "w1": lambda q: int(np.clip(round(6 - q), 1, 5)),
        })
        profiles = screen_workers(ratings)
        by_id = {p.worker_id: p for p in profiles}
        assert "line_clicker" in by_id["w0"].flags
        assert "low_correlation" in by_id["w0"].flags
        assert "low_correlation" in by_id["w1"].flags
        assert by_id["w2"].flags == frozenset()

    def test_profiles_count_scores(self):
        profiles = build_worker_profiles([ev("w", "a", 2), ev("w", "b", 2), ev("w", "c", 5)])
        assert profiles[0].score_counts == (0, 2, 0, 0, 1)
        assert profiles[0].n_ratings == 3


class TestQuiz:
    def test_frozen_answer_sets(self):
        assert valid_answer_set(4.0, 0.2) == (4,)
        assert valid_answer_set(3.6, 0.5) == (3, 4)
        assert valid_answer_set(3.0, 1.2) == (2, 3, 4)
        # wide spread capped to the 3 nearest round(mos), ties toward lower
        assert valid_answer_set(3.0, 2.5) == (2, 3, 4)
        assert valid_answer_set(3.5, 2.5) == (3, 4, 5)

    @given(
        mos=st.floats(min_value=1, max_value=5),
        std=st.floats(min_value=0, max_value=3),
    )
    def test_answer_set_contiguous_and_contains_round(self, mos, std):
        answers = valid_answer_set(mos, std)
        assert 1 <= len(answers) <= 3
        assert list(answers) == list(range(answers[0], answers[-1] + 1))
        assert math.floor(mos + 0.5) in answers
        assert all(1 <= a <= 5 for a in answers)

    def test_seven_of_ten_fails(self):
        questions = {f"q{i}": QuizQuestion(f"q{i}", (3,)) for i in range(10)}
        ratings = [ev("w", f"q{i}", 3 if i < 7 else 1, is_test=True) for i in range(10)]
        result = worker_accuracy(ratings, questions, threshold=0.70)
        assert result["w"].accuracy == pytest.approx(0.7)
        assert not result["w"].passed

    def test_eight_of_ten_passes(self):
        questions = {f"q{i}": QuizQuestion(f"q{i}", (3,)) for i in range(10)}
        ratings = [ev("w", f"q{i}", 3 if i < 8 else 1, is_test=True) for i in range(10)]
        assert worker_accuracy(ratings, questions)["w"].passed

    def test_unknown_question_raises(self):
        with pytest.raises(ValueError, match="no question"):
            worker_accuracy([ev("w", "mystery", 3, is_test=True)], {})

    def test_generate_from_expert_panel(self):
        experts = ExpertSet(
            image_ids=("a", "b"),
            scores=np.array([[4, 4, 4], [2, 3, 4]]),
        )
        questions = generate_test_questions(experts)
        assert questions[0].valid_answers == (4,)
        assert questions[1].image_id == "b"
        assert 3 in questions[1].valid_answers


class TestAlignment:
    def test_recovers_exact_line(self):
        x = np.array([10.0, 30.0, 55.0, 70.0, 90.0])
        slope, intercept = fit_alignment(x, 1.12 * x - 10.43)
        assert slope == pytest.approx(1.12)
        assert intercept == pytest.approx(-10.43)

    def test_constant_predictor_raises(self):
        with pytest.raises(ValueError, match="constant"):
            fit_alignment([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    def test_error_zscores(self):
        report = error_zscores(
            {"a": 52.0, "b": 40.0}, {"a": 50.0, "b": 49.0}, expert_std=1.0
        )
        assert report.z_by_image["a"] == pytest.approx(2.0)
        assert report.within_2_fraction == pytest.approx(0.5)


class TestBootstrap:
    def test_rmse_shrinks_with_group_size(self):
        rng = np.random.default_rng(7)
        ids = [f"i{j}" for j in range(24)]
        latent = {i: float(rng.uniform(20, 90)) for i in ids}
        scores = {i: list(latent[i] + rng.normal(0, 12, 200)) for i in ids}
        curve = bootstrap_rmse(scores, latent, group_sizes=[3, 30, 120],
                               n_reps=150, seed=1)
        assert curve[0].rmse > curve[1].rmse > curve[2].rmse
        assert all(p.ci_low <= p.rmse <= p.ci_high for p in curve)

    def test_deterministic_and_order_free(self):
        rng = np.random.default_rng(8)
        ids = [f"i{j}" for j in range(8)]
        latent = {i: float(rng.uniform(20, 90)) for i in ids}
        scores = {i: list(latent[i] + rng.normal(0, 5, 40)) for i in ids}
        a = bootstrap_rmse(scores, latent, [5, 11], n_reps=50, seed=3)
        b = bootstrap_rmse(scores, latent, [11, 5], n_reps=50, seed=3)
        assert a[0].rmse == b[1].rmse  # per-size substreams, not sequential
        assert a[1].rmse == b[0].rmse

    def test_insufficient_pool_raises(self):
        with pytest.raises(ValueError, match="crowd ratings"):
            bootstrap_rmse({"a": [50.0] * 4}, {"a": 50.0}, [5], n_reps=10)

    def test_expert_panel_stability(self):
        rng = np.random.default_rng(9)
        tight = rng.normal(0, 0.01, (10, 8)) + 3.0
        loose = rng.normal(0, 1.0, (10, 8)) + 3.0
        assert expert_bootstrap_std(tight) < expert_bootstrap_std(loose)
        assert expert_bootstrap_std(np.full((5, 6), 2.0)) == 0.0


class TestAgreement:
    def test_perfect_agreement(self):
        groups = {"a": [5, 5, 5], "b": [2, 2, 2], "c": [4, 4, 4]}
        assert icc_oneway(groups) == 1.0

    def test_no_betweengroup_variance(self):
        groups = {"a": [3, 3], "b": [3, 3]}
        assert icc_oneway(groups) == 0.0

    def test_unbalanced_groups_accepted(self):
        groups = {"a": [1, 2], "b": [4, 5, 5], "c": [3]}
        value = icc_oneway(groups)
        assert -1.0 <= value <= 1.0

    def test_oneway_anova_oracle(self):
        # direct recomputation from sums of squares on a fixed dataset
        groups = [[3, 4, 3], [1, 2], [5, 5, 4, 5]]
        data = np.concatenate([np.array(g, float) for g in groups])
        sizes = np.array([len(g) for g in groups])
        n, total = len(groups), data.size
        means = np.array([np.mean(g) for g in groups])
        ssb = float((sizes * (means - data.mean()) ** 2).sum())
        ssw = float(sum(((np.array(g) - m) ** 2).sum() for g, m in zip(groups, means)))
        msb, msw = ssb / (n - 1), ssw / (total - n)
        k0 = (total - (sizes**2).sum() / total) / (n - 1)
        expected = (msb - msw) / (msb + (k0 - 1) * msw)
        assert icc_oneway(groups) == pytest.approx(expected)


class TestCrossValidation:
    def make_features(self, n=60, d=4, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 1, (n, d))
        w = np.array([3.0, -2.0, 1.0, 0.5])[:d]
        y = x @ w + 50
        ids = tuple(f"i{j:03d}" for j in range(n))
        return FeatureMatrix(ids=ids, vectors=x), {i: float(v) for i, v in zip(ids, y)}

    def test_linear_signal_recovered(self):
        features, mos = self.make_features()
        report = cross_validate(features, mos, n_reps=20, seed=1)
        assert report.srocc_mean > 0.95
        assert report.plcc_mean > 0.95

    def test_deterministic(self):
        features, mos = self.make_features(seed=2)
        a = cross_validate(features, mos, n_reps=10, seed=5)
        b = cross_validate(features, mos, n_reps=10, seed=5)
        assert a.per_rep == b.per_rep

    def test_ridge_shrinks_toward_mean(self):
        x = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([1.0, 2.0, 3.0, 4.0])
        strong = RidgeRegressor(alpha=1e6).fit(x, y).predict(x)
        assert np.allclose(strong, y.mean(), atol=0.01)
        weak = RidgeRegressor(alpha=1e-9).fit(x, y).predict(x)
        assert np.allclose(weak, y, atol=1e-6)

    def test_custom_regressor_plugs_in(self):
        class Noisy:
            def fit(self, x, y):
                xb = np.column_stack([x, np.ones(len(x))])
                self.w = np.linalg.lstsq(xb, y, rcond=None)[0]
                return self

            def predict(self, x):
                xb = np.column_stack([x, np.ones(len(x))])
                return xb @ self.w + np.linspace(0, 0.01, len(x))

        features, mos = self.make_features(seed=3)
        report = cross_validate(features, mos, n_reps=5, seed=0, regressor=Noisy())
        assert report.srocc_mean > 0.9

    def test_train_fraction_validated(self):
        features, mos = self.make_features()
        with pytest.raises(ValueError):
            cross_validate(features, mos, train_fraction=1.0)


class TestFileFormats:
    def test_ratings_roundtrip(self, tmp_path):
        events = [ev("w1", "a", 3, t=12.5), ev("w2", "b", 5, is_test=True)]
        path = tmp_path / "ratings.tsv"
        write_ratings(events, path)
        assert read_ratings(path) == events

    def test_expert_table_roundtrip(self, tmp_path):
        experts = ExpertSet(
            image_ids=("a", "b"), scores=np.array([[1.0, 2.0], [4.0, 5.0]])
        )
        path = tmp_path / "experts.tsv"
        write_expert_table(experts, path)
        back = read_expert_table(path)
        assert back.image_ids == experts.image_ids
        assert np.array_equal(back.scores, experts.scores)

    def test_expert_mapped_moments(self):
        experts = ExpertSet(image_ids=("a",), scores=np.array([[1, 3, 5]]))
        assert experts.mos()["a"] == pytest.approx(50.5)
        expected_std = float(np.std([1.0, 50.5, 100.0]))
        assert experts.std()["a"] == pytest.approx(expected_std)
        assert experts.mos(mapped=False)["a"] == pytest.approx(3.0)

    def test_expert_scores_validated(self):
        with pytest.raises(ValueError):
            ExpertSet(image_ids=("a",), scores=np.array([[0.5, 3.0]]))
