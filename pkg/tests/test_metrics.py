"""Metric values frozen from hand evaluation, brute-force oracle equivalence,
and the algebraic properties the metrics must satisfy."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoyeval.decoy import detect_decoy_pairs_at_k
from decoyeval.metrics import (
    MetricConfig,
    TopicScores,
    aggregate,
    dejavu,
    dejavu_at_k,
    err_at_k,
    err_grade_map,
    evaluate_run,
    evaluate_topic,
    linear_combination,
    ndcg_at_k,
    rbp_at_k,
    recall_at_k,
    resolve_metrics,
    sweep,
)
from decoyeval.model import DecoyConfig, Qrels, RunList

from test_decoy import matrix_for, ranking_of


# independent formula evaluations, structured differently from the library

def oracle_ndcg(grades_in_rank_order, all_judged_grades, k):
    def dcg(gs):
        return sum((2 ** g - 1) / math.log2(i + 2) for i, g in enumerate(gs[:k]))
    ideal = sorted(all_judged_grades, reverse=True)
    denom = dcg(ideal)
    return dcg(grades_in_rank_order) / denom if denom > 0 else 0.0


def oracle_recall(grades_in_rank_order, all_judged_grades, k, floor=2):
    total = len([g for g in all_judged_grades if g >= floor])
    if total == 0:
        return 0.0
    return len([g for g in grades_in_rank_order[:k] if g >= floor]) / total


def oracle_rbp(grades_in_rank_order, k, phi=0.8, g_max=3):
    return (1 - phi) * sum(
        (g / g_max) * phi ** i for i, g in enumerate(grades_in_rank_order[:k])
    )


def oracle_err(grades_in_rank_order, k, g_max=3):
    total, stop_prob = 0.0, 1.0
    for i, g in enumerate(grades_in_rank_order[:k], start=1):
        r = (2 ** g - 1) / 2 ** g_max
        total += stop_prob * r / i
        stop_prob *= 1 - r
    return total


def make_instance(rng, n=None):
    n = n or rng.randint(1, 30)
    docs = [f"d{i:02d}" for i in range(n)]
    grades = {d: rng.choice((0, 0, 1, 2, 3)) for d in docs}
    sims = {}
    for i, a in enumerate(docs):
        for b in docs[i + 1:]:
            sims[frozenset((a, b))] = round(rng.random(), 6)
    return docs, grades, sims


class TestDejavu:
    def test_worked_quadruple(self):
        assert dejavu(2, 2) == 0.0
        assert dejavu(2, 3) == pytest.approx(1 - math.exp(-1), abs=1e-12)
        assert dejavu(1, 2) == pytest.approx(1 - math.exp(-1), abs=1e-12)
        assert dejavu(0, 0) == 0.0

    def test_rejects_d_above_r(self):
        with pytest.raises(ValueError):
            dejavu(3, 2)
        with pytest.raises(ValueError):
            dejavu(-1, 2)

    def test_full_grid_monotonicity_and_range(self):
        # Strict monotonicity is checked wherever adjacent closed-form
        # values are distinguishable in doubles; past r - d of about 37 the
        # function sits on the largest double below 1, so the check there
        # degrades to non-strict while the range stays [0, 1).
        cap = math.nextafter(1.0, 0.0)
        for r in range(51):
            prev = None
            for d in range(r + 1):
                score = dejavu(d, r)
                assert 0.0 <= score < 1.0
                if prev is not None:
                    if prev < cap:
                        assert score < prev
                    else:
                        assert score <= prev
                prev = score
        for d in range(51):
            prev = None
            for r in range(d, 51):
                score = dejavu(d, r)
                if prev is not None:
                    if prev < cap:
                        assert score > prev
                    else:
                        assert score >= prev
                prev = score


class TestDejavuAtK:
    def test_all_grade_zero_scores_zero(self):
        docs = ["a", "b", "c"]
        out = dejavu_at_k("t", ranking_of(docs), {}, matrix_for(docs, {}),
                          DecoyConfig(), k=10)
        assert (out.decoy_pairs, out.highly_relevant, out.score) == (0, 0, 0.0)

    def test_matches_detection_plus_closed_form(self):
        rng = random.Random(41)
        cfg = DecoyConfig()
        for _ in range(50):
            docs, grades, sims = make_instance(rng)
            m = matrix_for(docs, sims)
            k = rng.randint(1, len(docs) + 5)
            out = dejavu_at_k("t", ranking_of(docs), grades, m, cfg, k)
            d = len(detect_decoy_pairs_at_k("t", ranking_of(docs), grades, m, cfg, k))
            r = sum(1 for doc in docs[:k] if grades[doc] >= 2)
            assert (out.decoy_pairs, out.highly_relevant) == (d, r)
            assert out.score == pytest.approx(1 - math.exp(d - r), abs=1e-12)


class TestNdcg:
    def test_hand_worked_example(self):
        # grades (1, 3) in rank order against judged {3, 1}
        ranking = ranking_of(["a", "b"])
        grades = {"a": 1, "b": 3}
        dcg = 1.0 + 7.0 / math.log2(3)
        idcg = 7.0 + 1.0 / math.log2(3)
        assert ndcg_at_k(ranking, grades, 2) == pytest.approx(dcg / idcg, abs=1e-12)
        assert ndcg_at_k(ranking, grades, 2) == pytest.approx(0.7098, abs=5e-4)

    def test_ideal_ranking_scores_one(self):
        ranking = ranking_of(["a", "b", "c"])
        grades = {"a": 3, "b": 2, "c": 1}
        assert ndcg_at_k(ranking, grades, 3) == 1.0

    def test_no_relevant_retrieved_scores_zero(self):
        ranking = ranking_of(["x", "y"])
        grades = {"a": 3}
        assert ndcg_at_k(ranking, grades, 2) == 0.0

    def test_unjudged_topic_scores_zero(self):
        assert ndcg_at_k(ranking_of(["x"]), {}, 5) == 0.0

    def test_ideal_uses_unretrieved_judged_docs(self):
        # the ideal list must include judged docs the run missed
        ranking = ranking_of(["a"])
        grades = {"a": 1, "missing": 3}
        expected = 1.0 / (7.0 + 1.0 / math.log2(3))
        assert ndcg_at_k(ranking, grades, 10) == pytest.approx(expected, abs=1e-12)


class TestRecall:
    def test_half_retrieved(self):
        ranking = ranking_of(["a", "b", "x", "y"])
        grades = {"a": 2, "b": 3, "c": 2, "d": 3}
        assert recall_at_k(ranking, grades, 10) == 0.5

    def test_no_relevant_judged_scores_zero(self):
        assert recall_at_k(ranking_of(["a"]), {"a": 1}, 5) == 0.0

    def test_all_retrieved_scores_one(self):
        ranking = ranking_of(["a", "b"])
        assert recall_at_k(ranking, {"a": 2, "b": 3}, 2) == 1.0


class TestRbp:
    def test_single_top_grade_doc(self):
        assert rbp_at_k(ranking_of(["a"]), {"a": 3}, 1) == pytest.approx(0.2, abs=1e-12)

    def test_empty_ranking(self):
        assert rbp_at_k([], {"a": 3}, 5) == 0.0

    def test_hand_worked_example(self):
        ranking = ranking_of(["a", "b", "c"])
        grades = {"a": 3, "b": 0, "c": 2}
        expected = 0.2 * (1.0 + 0.0 + (2.0 / 3.0) * 0.64)
        assert rbp_at_k(ranking, grades, 3) == pytest.approx(expected, abs=1e-12)
        assert rbp_at_k(ranking, grades, 3) == pytest.approx(0.28533, abs=5e-5)

    def test_upper_bound_one_minus_phi_to_k(self):
        rng = random.Random(3)
        for _ in range(50):
            docs, grades, _ = make_instance(rng)
            k = rng.randint(1, 40)
            phi = rng.uniform(0.1, 0.95)
            val = rbp_at_k(ranking_of(docs), grades, k, phi=phi)
            assert val <= (1 - phi ** k) + 1e-12


class TestErr:
    def test_grade_map_exact_values(self):
        assert [err_grade_map(g, 3) for g in range(4)] == [0.0, 1 / 8, 3 / 8, 7 / 8]
        assert err_grade_map(0, 7) == 0.0
        assert err_grade_map(2, 2) == 3 / 4

    def test_grade_map_bounds(self):
        with pytest.raises(ValueError):
            err_grade_map(4, 3)
        with pytest.raises(ValueError):
            err_grade_map(-1, 3)

    def test_single_perfect_doc(self):
        assert err_at_k(ranking_of(["a"]), {"a": 3}, 1) == 7 / 8

    def test_all_grades_zero(self):
        assert err_at_k(ranking_of(["a", "b"]), {}, 2) == 0.0

    def test_hand_worked_cascade(self):
        ranking = ranking_of(["a", "b"])
        grades = {"a": 3, "b": 3}
        assert err_at_k(ranking, grades, 2) == pytest.approx(0.9296875, abs=1e-12)

    def test_cascade_continuation_stays_in_unit_interval(self):
        rng = random.Random(8)
        for _ in range(50):
            docs, grades, _ = make_instance(rng)
            stop = 1.0
            for d in docs:
                stop *= 1 - err_grade_map(grades[d], 3)
                assert 0.0 <= stop <= 1.0


class TestLinearCombination:
    def test_published_values(self):
        assert linear_combination(0.974, 0.720, 0.5) == pytest.approx(0.847, abs=5e-4)
        # exact value 0.8395 sits on the rounding boundary of the published
        # 0.840; allow one ulp of slack on the 5e-4 tolerance
        assert linear_combination(0.948, 0.731, 0.5) == pytest.approx(0.840, abs=5e-4 + 1e-12)
        assert linear_combination(0.948, 0.731, 0.5) == pytest.approx(0.8395, abs=1e-12)

    def test_fixed_point(self):
        for alpha in (0.0, 0.3, 1.0):
            assert linear_combination(0.42, 0.42, alpha) == pytest.approx(0.42, abs=1e-15)

    def test_endpoints(self):
        assert linear_combination(0.9, 0.1, 1.0) == 0.9
        assert linear_combination(0.9, 0.1, 0.0) == 0.1

    def test_inputs_validated(self):
        with pytest.raises(ValueError):
            linear_combination(1.2, 0.5, 0.5)
        with pytest.raises(ValueError):
            linear_combination(0.5, 0.5, -0.1)


class TestOracleEquivalence:
    def test_all_metrics_match_oracles(self):
        rng = random.Random(4242)
        for _ in range(100):
            docs, grades, _ = make_instance(rng)
            ranking = ranking_of(docs)
            in_order = [grades[d] for d in docs]
            judged = list(grades.values())
            k = rng.randint(1, len(docs) + 3)
            assert ndcg_at_k(ranking, grades, k) == pytest.approx(
                oracle_ndcg(in_order, judged, k), abs=1e-9)
            assert recall_at_k(ranking, grades, k) == pytest.approx(
                oracle_recall(in_order, judged, k), abs=1e-9)
            assert rbp_at_k(ranking, grades, k) == pytest.approx(
                oracle_rbp(in_order, k), abs=1e-9)
            assert err_at_k(ranking, grades, k) == pytest.approx(
                oracle_err(in_order, k), abs=1e-9)

    @given(st.lists(st.integers(0, 3), min_size=0, max_size=40),
           st.integers(1, 50))
    @settings(max_examples=100, deadline=None)
    def test_ranges_hold_on_arbitrary_grades(self, grade_list, k):
        docs = [f"d{i}" for i in range(len(grade_list))]
        grades = dict(zip(docs, grade_list))
        ranking = ranking_of(docs)
        for value in (
            ndcg_at_k(ranking, grades, k),
            recall_at_k(ranking, grades, k),
            rbp_at_k(ranking, grades, k),
            err_at_k(ranking, grades, k),
        ):
            assert 0.0 <= value <= 1.0

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_recall_monotone_in_k(self, grade_list):
        docs = [f"d{i}" for i in range(len(grade_list))]
        grades = dict(zip(docs, grade_list))
        ranking = ranking_of(docs)
        values = [recall_at_k(ranking, grades, k) for k in range(1, len(docs) + 2)]
        assert values == sorted(values)


class TestEvaluateTopic:
    def test_single_metric_only(self):
        docs = ["a", "b"]
        grades = {"a": 2}
        scores = evaluate_topic("t", ranking_of(docs), grades, None,
                                DecoyConfig(), MetricConfig(k=2), ["recall"])
        assert list(scores.scores) == ["recall"]
        assert scores.scores["recall"] == 1.0

    def test_lc_requires_resolved_operands(self):
        with pytest.raises(ValueError):
            evaluate_topic("t", [], {}, None, DecoyConfig(), MetricConfig(), ["lc_ndcg"])

    def test_lc_composes_computed_operands(self):
        docs = ["a", "b", "c"]
        grades = {"a": 3, "b": 0, "c": 2}
        m = matrix_for(docs, {frozenset(("a", "b")): 0.9})
        metrics = resolve_metrics(["lc_ndcg"])
        scores = evaluate_topic("t", ranking_of(docs), grades, m,
                                DecoyConfig(), MetricConfig(k=3), metrics)
        expected = 0.5 * scores.scores["dejavu"] + 0.5 * scores.scores["ndcg"]
        assert scores.scores["lc_ndcg"] == pytest.approx(expected, abs=1e-12)
        assert scores.decoy_pairs == 1 and scores.highly_relevant == 2

    def test_resolve_metrics_dependency_closure(self):
        assert resolve_metrics(["lc_ndcg"]) == ("lc_ndcg", "dejavu", "ndcg")
        assert resolve_metrics(["ndcg", "lc_ndcg"]) == ("ndcg", "lc_ndcg", "dejavu")
        assert resolve_metrics(["dejavu"]) == ("dejavu",)

    def test_resolve_metrics_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown metric"):
            resolve_metrics(["map"])

    def test_topic_scores_validation(self):
        with pytest.raises(ValueError):
            TopicScores("t", {"ndcg": 0.5}, decoy_pairs=3, highly_relevant=2)
        with pytest.raises(ValueError):
            TopicScores("t", {"ndcg": 1.5})


class TestAggregate:
    def test_single_topic_identity(self):
        t = TopicScores("t", {"ndcg": 0.7}, decoy_pairs=1, highly_relevant=2)
        agg = aggregate([t])
        assert agg.scores == {"ndcg": 0.7}
        assert agg.decoy_pairs == 1.0 and agg.highly_relevant == 2.0

    def test_two_topic_mean(self):
        ts = [TopicScores("a", {"recall": 0.0}), TopicScores("b", {"recall": 1.0})]
        assert aggregate(ts).scores["recall"] == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_inconsistent_metric_sets_rejected(self):
        ts = [TopicScores("a", {"recall": 0.0}), TopicScores("b", {"ndcg": 1.0})]
        with pytest.raises(ValueError):
            aggregate(ts)

    def test_permutation_invariant(self):
        rng = random.Random(12)
        topics = [
            TopicScores(f"t{i}", {"ndcg": rng.random(), "recall": rng.random()})
            for i in range(40)
        ]
        base = aggregate(topics)
        for _ in range(5):
            rng.shuffle(topics)
            again = aggregate(topics)
            assert again.scores == base.scores

    def test_lc_linearity_mean_of_lc_is_lc_of_means(self):
        rng = random.Random(21)
        alpha = 0.5
        dvals = [rng.random() for _ in range(25)]
        evals = [rng.random() for _ in range(25)]
        per_topic = [linear_combination(d, e, alpha) for d, e in zip(dvals, evals)]
        mean_of_lc = sum(per_topic) / len(per_topic)
        lc_of_means = linear_combination(
            sum(dvals) / len(dvals), sum(evals) / len(evals), alpha)
        assert mean_of_lc == pytest.approx(lc_of_means, abs=1e-12)


def small_world(rng, n_topics=4, n_docs=25):
    rankings, judgments, mats = {}, {}, {}
    for t in range(n_topics):
        topic = f"t{t}"
        docs, grades, sims = make_instance(rng, n=n_docs)
        docs = [f"{topic}_{d}" for d in docs]
        grades = {f"{topic}_{d}": g for d, g in grades.items()}
        sims = {frozenset(f"{topic}_{x}" for x in fs): v for fs, v in sims.items()}
        rankings[topic] = ranking_of(docs)
        judgments[topic] = grades
        mats[topic] = matrix_for(docs, sims, topic=topic)
    run = RunList(run_tag="synth", rankings=rankings)
    qrels = Qrels(g_max=3, judgments=judgments)

    class MatrixSource:
        def topic_view(self, topic_id):
            return mats[topic_id]

    return run, qrels, MatrixSource()


class TestEvaluateRun:
    def test_topics_come_from_qrels_with_empty_rankings(self):
        run = RunList(run_tag="r", rankings={"t1": ranking_of(["a"])})
        qrels = Qrels(g_max=3, judgments={"t1": {"a": 3}, "t2": {"b": 2}})
        out = evaluate_run(run, qrels, None, DecoyConfig(), MetricConfig(),
                           ["ndcg", "recall"], [10])
        assert [t.topic_id for t in out[0].topics] == ["t1", "t2"]
        missing = out[0].topics[1]
        assert missing.scores == {"ndcg": 0.0, "recall": 0.0}

    def test_worker_count_does_not_change_results(self):
        rng = random.Random(55)
        run, qrels, source = small_world(rng)
        args = (run, qrels, source, DecoyConfig(), MetricConfig(),
                ["dejavu", "ndcg", "recall", "lc_ndcg"], [5, 10])
        serial = evaluate_run(*args, max_workers=1)
        threaded = evaluate_run(*args, max_workers=8)
        assert serial == threaded

    def test_cutoffs_sorted_and_deduped(self):
        rng = random.Random(56)
        run, qrels, source = small_world(rng, n_topics=2)
        out = evaluate_run(run, qrels, source, DecoyConfig(), MetricConfig(),
                           ["recall"], [20, 5, 20])
        assert [ev.k for ev in out] == [5, 20]


class TestSweep:
    def test_single_k_matches_evaluate(self):
        rng = random.Random(61)
        run, qrels, source = small_world(rng)
        rows = sweep(run, qrels, source, DecoyConfig(), MetricConfig(),
                     k_start=10, k_end=10, k_step=5)
        assert len(rows) == 1
        ev = evaluate_run(run, qrels, source, DecoyConfig(), MetricConfig(),
                          ["dejavu", "ndcg", "recall"], [10])[0]
        row = rows[0]
        assert row.k == 10
        assert row.dejavu == pytest.approx(ev.mean.scores["dejavu"], abs=1e-12)
        assert row.ndcg == pytest.approx(ev.mean.scores["ndcg"], abs=1e-12)
        assert row.recall == pytest.approx(ev.mean.scores["recall"], abs=1e-12)
        assert row.decoy_pairs == pytest.approx(ev.mean.decoy_pairs, abs=1e-12)

    def test_every_row_matches_direct_evaluation(self):
        rng = random.Random(62)
        run, qrels, source = small_world(rng, n_topics=3, n_docs=30)
        rows = sweep(run, qrels, source, DecoyConfig(), MetricConfig(),
                     k_start=3, k_end=30, k_step=4)
        for row in rows:
            ev = evaluate_run(run, qrels, source, DecoyConfig(), MetricConfig(),
                              ["dejavu", "ndcg", "recall"], [row.k])[0]
            assert row.dejavu == pytest.approx(ev.mean.scores["dejavu"], abs=1e-12)
            assert row.ndcg == pytest.approx(ev.mean.scores["ndcg"], abs=1e-12)
            assert row.recall == pytest.approx(ev.mean.scores["recall"], abs=1e-12)
            assert row.decoy_pairs == pytest.approx(ev.mean.decoy_pairs, abs=1e-12)

    def test_monotone_columns(self):
        rng = random.Random(63)
        run, qrels, source = small_world(rng, n_topics=3, n_docs=30)
        rows = sweep(run, qrels, source, DecoyConfig(), MetricConfig(),
                     k_start=1, k_end=30, k_step=1)
        counts = [r.decoy_pairs for r in rows]
        recalls = [r.recall for r in rows]
        assert counts == sorted(counts)
        assert recalls == sorted(recalls)

    def test_step_larger_than_range_single_row(self):
        rng = random.Random(64)
        run, qrels, source = small_world(rng, n_topics=2)
        rows = sweep(run, qrels, source, DecoyConfig(), MetricConfig(),
                     k_start=10, k_end=15, k_step=100)
        assert [r.k for r in rows] == [10]

    def test_invalid_range_rejected(self):
        rng = random.Random(65)
        run, qrels, source = small_world(rng, n_topics=1)
        with pytest.raises(ValueError):
            sweep(run, qrels, source, DecoyConfig(), MetricConfig(), 10, 5, 1)
