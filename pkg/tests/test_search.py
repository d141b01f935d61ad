import unittest

import numpy as np
import pytest

import search_pipeline
from causal_graph import ExperimentDesign, Graph, Intervention, is_acyclic
from inference import AllRestartsFailedError, FitOptions
from likelihood import ConditionParameters, NoiseModel
from priors import LinearPriorConfig
from search_pipeline import (
    ConstraintError,
    EdgeFrequencies,
    SearchFailedError,
    StructureConstraints,
    StructureScorer,
    enumerate_admissible_graphs,
    exhaustive_search,
    greedy_search,
    max_edges_sweep,
    neighbors,
    random_admissible_graph,
    score_structure,
    stability_selection,
    subsample_rows,
)
from simulation import GroundTruthModel, feedback_truth, generate_study, random_ground_truth

PRIOR = LinearPriorConfig()
GAUSSIAN = NoiseModel.GAUSSIAN

FEEDBACK_DESIGN = ExperimentDesign(
    (
        Intervention.observational(),
        Intervention.activity(0),
        Intervention.activity(1),
        Intervention.abundance(0),
        Intervention.abundance(1),
    ),
    ("obs", "act x1", "act x2", "ab x1", "ab x2"),
)


def feedback_study(n=60, seed=0):
    return generate_study(feedback_truth(), FEEDBACK_DESIGN, n, seed=seed)


def independent_study(d, n, seed):
    design = ExperimentDesign(
        (Intervention.observational(),) + tuple(Intervention.activity(i) for i in range(d)),
        ("obs",) + tuple(f"act x{i + 1}" for i in range(d)),
    )
    truth = random_ground_truth(d, 0, seed=seed)
    return generate_study(truth, design, n, seed=seed)


class TestConstraints(unittest.TestCase):
    def test_admits(self):
        c = StructureConstraints(max_edges=1, require_acyclic=True)
        self.assertTrue(c.admits(Graph(2, {(0, 1)})))
        self.assertFalse(c.admits(Graph(3, {(0, 1), (1, 2)})))
        self.assertFalse(StructureConstraints(require_acyclic=True).admits(Graph(2, {(0, 1), (1, 0)})))
        self.assertTrue(StructureConstraints().admits(Graph(2, {(0, 1), (1, 0)})))

    def test_edge_budget(self):
        self.assertEqual(StructureConstraints().edge_budget(3), 6)
        self.assertEqual(StructureConstraints(require_acyclic=True).edge_budget(3), 3)
        self.assertEqual(StructureConstraints(max_edges=2).edge_budget(3), 2)

    def test_negative_max_edges(self):
        with self.assertRaises(ValueError):
            StructureConstraints(max_edges=-1)


class TestNeighbors(unittest.TestCase):
    def test_empty_graph_additions(self):
        result = neighbors(Graph(3), StructureConstraints(max_edges=2, require_acyclic=True))
        self.assertEqual(len(result), 6)
        self.assertTrue(all(g.edge_count == 1 for g in result))

    def test_two_cycle_under_acyclicity(self):
        result = neighbors(Graph(2, {(0, 1), (1, 0)}), StructureConstraints(require_acyclic=True))
        self.assertEqual(result, [Graph(2, {(1, 0)}), Graph(2, {(0, 1)})])

    def test_at_edge_budget_no_additions(self):
        g = Graph(3, {(0, 1), (1, 2)})
        result = neighbors(g, StructureConstraints(max_edges=2))
        self.assertTrue(result)
        self.assertTrue(all(n.edge_count <= 2 for n in result))

    def test_move_order(self):
        result = neighbors(Graph(2, {(0, 1)}), StructureConstraints())
        self.assertEqual(
            result, [Graph(2), Graph(2, {(1, 0)}), Graph(2, {(0, 1), (1, 0)})]
        )

    def test_random_start_is_admissible(self):
        c = StructureConstraints(max_edges=3, require_acyclic=True)
        for seed in range(30):
            g = random_admissible_graph(4, c, np.random.default_rng(seed))
            self.assertTrue(c.admits(g))


class TestEnumeration(unittest.TestCase):
    def test_counts(self):
        self.assertEqual(len(list(enumerate_admissible_graphs(3, StructureConstraints()))), 64)
        acyclic = StructureConstraints(require_acyclic=True)
        self.assertEqual(len(list(enumerate_admissible_graphs(3, acyclic))), 25)
        self.assertEqual(
            len(list(enumerate_admissible_graphs(3, StructureConstraints(max_edges=1)))), 7
        )

    def test_refuses_large_problems(self):
        with self.assertRaises(ValueError):
            list(enumerate_admissible_graphs(6, StructureConstraints()))


class TestScorer(unittest.TestCase):
    def setUp(self):
        self.study = feedback_study()
        self.scorer = StructureScorer(
            self.study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, StructureConstraints(max_edges=1)
        )

    def test_inadmissible_graph_rejected(self):
        with self.assertRaises(ConstraintError):
            self.scorer.score(Graph(2, {(0, 1), (1, 0)}))
        with self.assertRaises(ConstraintError):
            score_structure(
                Graph(2, {(0, 1), (1, 0)}), self.study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN,
                StructureConstraints(require_acyclic=True),
            )

    def test_cache(self):
        g = Graph(2, {(0, 1)})
        first = self.scorer.score(g)
        second = self.scorer.score(Graph(2, {(0, 1)}))
        self.assertIs(first, second)
        self.assertEqual(self.scorer.cache_size, 1)
        self.assertEqual(self.scorer.evaluations, 1)

    def test_with_constraints_shares_cache(self):
        g = Graph(2, {(0, 1)})
        scored = self.scorer.score(g)
        wider = self.scorer.with_constraints(StructureConstraints())
        self.assertIs(wider.score(g), scored)
        wider.score(Graph(2, {(0, 1), (1, 0)}))
        self.assertEqual(self.scorer.cache_size, 2)

    def test_score_matches_standalone(self):
        g = Graph(2, {(1, 0)})
        standalone = score_structure(g, self.study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN)
        self.assertEqual(self.scorer.score(g).score, standalone.score)
        self.assertEqual(standalone.score, standalone.evidence.log_evidence)

    def test_failures_are_cached(self):
        calls = []

        def failing(*args, **kwargs):
            calls.append(args)
            raise AllRestartsFailedError("boom")

        original = search_pipeline.laplace_log_evidence
        search_pipeline.laplace_log_evidence = failing
        try:
            self.assertIsNone(self.scorer.try_score(Graph(2)))
            with self.assertRaises(SearchFailedError):
                self.scorer.score(Graph(2))
        finally:
            search_pipeline.laplace_log_evidence = original
        self.assertEqual(len(calls), 1)


def test_search_fails_when_nothing_scores(monkeypatch):
    def failing(*args, **kwargs):
        raise AllRestartsFailedError("boom")

    monkeypatch.setattr("search_pipeline.laplace_log_evidence", failing)
    study = feedback_study(n=10)
    with pytest.raises(SearchFailedError):
        greedy_search(study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, StructureConstraints(), restarts=2)


def test_greedy_search_reproducible_and_coherent():
    study = feedback_study()
    constraints = StructureConstraints()
    first = greedy_search(study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, constraints, 3, seed=5)
    second = greedy_search(study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, constraints, 3, seed=5)
    assert first.best.graph == second.best.graph
    assert first.local_optimum_scores == second.local_optimum_scores
    assert [t.start for t in first.restarts] == [t.start for t in second.restarts]
    assert first.best.score == max(first.local_optimum_scores)
    for trace in first.restarts:
        assert all(b > a for a, b in zip(trace.path_scores, trace.path_scores[1:]))
        assert trace.steps == len(trace.path_scores) - 1

    rescored = score_structure(first.best.graph, study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN)
    assert rescored.score == first.best.score

    payload = first.to_payload(study.compound_names)
    assert set(payload) == {"best", "failed_restarts", "evaluations", "restarts"}
    assert len(payload["restarts"]) == 3


def test_worker_threads_do_not_change_results():
    study = feedback_study(seed=1)
    constraints = StructureConstraints()
    serial = greedy_search(study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, constraints, 4, seed=2)
    threaded = greedy_search(
        study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, constraints, 4, seed=2, workers=3
    )
    assert threaded.best.graph == serial.best.graph
    assert threaded.local_optimum_scores == serial.local_optimum_scores


def test_acyclic_search_returns_dag():
    study = feedback_study(seed=3)
    result = greedy_search(
        study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, StructureConstraints(require_acyclic=True), 3
    )
    assert is_acyclic(result.best.graph)


def test_exhaustive_search_bounds_greedy():
    study = feedback_study(seed=4)
    constraints = StructureConstraints()
    best, scored = exhaustive_search(study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, constraints)
    assert len(scored) == 4
    assert best.score == max(s.score for s in scored)
    greedy = greedy_search(study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, constraints, 3)
    assert greedy.best.score <= best.score


def test_max_edges_sweep():
    study = feedback_study(seed=5)
    points = max_edges_sweep(
        study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, [0, 1, 2], restarts=2, seed=1
    )
    assert [p.max_edges for p in points] == [0, 1, 2]
    assert points[0].result.best.graph == Graph(2)
    for p in points:
        assert p.result.best.graph.edge_count <= p.max_edges
        assert len(p.result.local_optimum_scores) == 2
    payload = points[1].to_payload(study.compound_names)
    assert payload["max_edges"] == 1


class TestStability(unittest.TestCase):
    def test_single_run_is_indicator(self):
        study = feedback_study(n=40, seed=6)
        freqs = stability_selection(
            study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, StructureConstraints(),
            n_runs=1, seed=3, restarts=2,
        )
        self.assertEqual(freqs.runs, 1)
        np.testing.assert_array_equal(freqs.freq, freqs.selected[0].adjacency().astype(float))

    def test_reproducible(self):
        study = feedback_study(n=40, seed=7)
        args = (study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, StructureConstraints(max_edges=1))
        first = stability_selection(*args, n_runs=3, seed=4, restarts=1)
        second = stability_selection(*args, n_runs=3, seed=4, restarts=1, workers=2)
        np.testing.assert_array_equal(first.freq, second.freq)
        self.assertTrue(np.all((first.freq >= 0) & (first.freq <= 1)))
        self.assertTrue(np.all(np.diag(first.freq) == 0))

    def test_argument_validation(self):
        study = feedback_study(n=10)
        args = (study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, StructureConstraints())
        with self.assertRaises(ValueError):
            stability_selection(*args, n_runs=0)
        with self.assertRaises(ValueError):
            stability_selection(*args, subsample_fraction=1.0)

    def test_frequency_validation(self):
        with self.assertRaises(ValueError):
            EdgeFrequencies(np.eye(2), runs=1)
        with self.assertRaises(ValueError):
            EdgeFrequencies(np.zeros((2, 2)), runs=0)

    def test_subsample_rows(self):
        x = np.arange(20.0).reshape(10, 2)
        (sub,) = subsample_rows([x], 0.5, np.random.default_rng(0))
        self.assertEqual(sub.shape, (5, 2))
        self.assertTrue(np.all(np.diff(sub[:, 0]) > 0))
        self.assertTrue(set(sub[:, 0]) <= set(x[:, 0]))


# Statistical acceptance runs

LOOP_DESIGN = ExperimentDesign(
    (Intervention.observational(), Intervention.activity(0), Intervention.abundance(1)),
    ("obs", "act x1", "ab x2"),
)


@pytest.mark.slow
def test_feedback_loop_recovered_and_preferred_over_dags():
    recovered = 0
    cyclic_wins = 0
    for seed in range(20):
        study = generate_study(feedback_truth(), LOOP_DESIGN, 500, seed=seed)
        scorer = StructureScorer(study.data, LOOP_DESIGN, PRIOR, GAUSSIAN, StructureConstraints())
        cyclic = greedy_search(
            study.data, LOOP_DESIGN, PRIOR, GAUSSIAN, StructureConstraints(), 3,
            seed=seed, scorer=scorer,
        )
        dag_constraints = StructureConstraints(require_acyclic=True)
        acyclic = greedy_search(
            study.data, LOOP_DESIGN, PRIOR, GAUSSIAN, dag_constraints, 3,
            seed=seed, scorer=scorer.with_constraints(dag_constraints),
        )
        recovered += {(0, 1), (1, 0)} <= cyclic.best.graph.edges
        cyclic_wins += cyclic.best.score > acyclic.best.score
    assert recovered >= 18
    assert cyclic_wins >= 18


@pytest.mark.slow
def test_independent_data_selects_empty_graph():
    empty = 0
    for seed in range(20):
        study = independent_study(3, 200, seed)
        result = greedy_search(
            study.data, study.design, PRIOR, GAUSSIAN, StructureConstraints(max_edges=3), 3,
            seed=seed,
        )
        empty += result.best.graph.edge_count == 0
    assert empty >= 18


@pytest.mark.slow
def test_greedy_matches_exhaustive_on_small_problems():
    design = ExperimentDesign(
        (Intervention.observational(),) + tuple(Intervention.activity(i) for i in range(3)),
        ("obs", "act x1", "act x2", "act x3"),
    )
    constraints = StructureConstraints(max_edges=3)
    for seed in range(10):
        truth = random_ground_truth(3, 2, seed=seed)
        study = generate_study(truth, design, 150, seed=seed)
        scorer = StructureScorer(study.data, design, PRIOR, GAUSSIAN, constraints)
        best, scored = exhaustive_search(
            study.data, design, PRIOR, GAUSSIAN, constraints, scorer=scorer
        )
        assert len(scored) == 42
        greedy = greedy_search(
            study.data, design, PRIOR, GAUSSIAN, constraints, 20, seed=seed, scorer=scorer
        )
        assert greedy.best.graph == best.graph, f"dataset {seed}"


@pytest.mark.slow
def test_strong_edge_is_stable():
    b = np.array([[0.0, 1.0], [0.0, 0.0]])
    truth = GroundTruthModel(Graph(2, {(0, 1)}), ConditionParameters(b, np.zeros(2), np.zeros(2)))
    study = generate_study(truth, FEEDBACK_DESIGN, 1000, seed=9)
    freqs = stability_selection(
        study.data, FEEDBACK_DESIGN, PRIOR, GAUSSIAN, StructureConstraints(),
        n_runs=20, seed=9, restarts=2, fit_options=FitOptions(),
    )
    assert freqs.freq[0, 1] >= 0.9


@pytest.mark.slow
def test_independent_data_has_unstable_edges():
    study = independent_study(3, 200, seed=10)
    freqs = stability_selection(
        study.data, study.design, PRIOR, GAUSSIAN, StructureConstraints(max_edges=2),
        n_runs=20, seed=10, restarts=2,
    )
    assert np.all(freqs.freq <= 0.3)
