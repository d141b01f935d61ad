import logging
import math
import unittest

import numpy as np
import pytest
from scipy import stats

from causal_graph import ExperimentDesign, Graph, Intervention, derive_mechanism_labels
from inference import (
    AllRestartsFailedError,
    FitOptions,
    LOG_2PI,
    PosteriorObjective,
    _fit_objective,
    compound_means,
    laplace_from_objective,
    laplace_log_evidence,
    map_fit,
    neg_log_posterior,
)
from likelihood import ConditionParameters, NoiseModel, neg_log_likelihood
from priors import GpPriorConfig, LinearPriorConfig, TyingMap
from simulation import GroundTruthModel, generate_study
from test_likelihood import central_differences, random_instance


def observational_design(k=1):
    return ExperimentDesign((Intervention.observational(),) * k, tuple(f"c{c}" for c in range(k)))


def two_condition_design():
    return ExperimentDesign(
        (Intervention.observational(), Intervention.activity(0)), ("obs", "act x1")
    )


def cyclic_data(seed=0, n=60):
    rng = np.random.default_rng(seed)
    return [rng.normal(size=(n, 3)), rng.normal(loc=0.5, size=(n, 3))]


class TestFitOptions(unittest.TestCase):
    def test_rejects_nonpositive(self):
        with self.assertRaises(ValueError):
            FitOptions(max_iterations=0)
        with self.assertRaises(ValueError):
            FitOptions(gradient_tolerance=0.0)
        with self.assertRaises(ValueError):
            FitOptions(restarts=0)
        with self.assertRaises(ValueError):
            FitOptions(seed=-1)


class TestPosteriorObjective(unittest.TestCase):
    def test_vanishing_prior_leaves_likelihood(self):
        g = Graph(3, {(0, 1), (1, 2), (2, 0)})
        design = two_condition_design()
        data = cyclic_data()
        labeling = derive_mechanism_labels(g, design)
        scale = 1e8
        prior = LinearPriorConfig(lam=scale, tau=scale)
        objective = PosteriorObjective(g, labeling, data, design, prior, NoiseModel.GAUSSIAN)
        theta = 0.2 * np.random.default_rng(1).normal(size=objective.size)
        value, _ = neg_log_posterior(theta, g, labeling, data, design, prior, NoiseModel.GAUSSIAN)
        nll = neg_log_likelihood(data, objective.to_parameters(theta), NoiseModel.GAUSSIAN)
        normalizer = objective.size * (math.log(scale) + 0.5 * LOG_2PI)
        self.assertAlmostEqual(value - normalizer, nll, places=6)

    def test_singular_point_is_infinite(self):
        g = Graph(2, {(0, 1), (1, 0)})
        design = observational_design()
        labeling = derive_mechanism_labels(g, design)
        objective = PosteriorObjective(
            g, labeling, [np.ones((5, 2))], design, LinearPriorConfig(), NoiseModel.GAUSSIAN
        )
        # reduced layout: x1 block (b10, mu, a), then x2 block (b01, mu, a)
        theta = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        value, grad = objective.value_and_grad(theta)
        self.assertEqual(value, math.inf)
        np.testing.assert_array_equal(grad, 0.0)

    def test_data_shape_checked(self):
        g = Graph(2)
        design = observational_design(2)
        labeling = derive_mechanism_labels(g, design)
        with self.assertRaises(ValueError):
            PosteriorObjective(
                g, labeling, [np.zeros((3, 2))], design, LinearPriorConfig(), NoiseModel.GAUSSIAN
            )
        with self.assertRaises(ValueError):
            PosteriorObjective(
                g, labeling, [np.zeros((3, 2)), np.zeros((3, 3))], design,
                LinearPriorConfig(), NoiseModel.GAUSSIAN,
            )

    def test_compound_means_handles_empty_condition(self):
        means = compound_means([np.array([[1.0, 3.0], [3.0, 5.0]]), np.empty((0, 2))], 2)
        np.testing.assert_array_equal(means, [[2.0, 4.0], [0.0, 0.0]])


def test_posterior_gradient_matches_finite_differences():
    priors = [
        LinearPriorConfig(lam=2.0, tau=5.0),
        GpPriorConfig(sigma_in=2.0, sigma_out=2.0, sigma_jitter=0.3),
    ]
    for seed in range(50):
        g, design, data, noise = random_instance(seed)
        prior = priors[(seed // 4) % 2]
        labeling = derive_mechanism_labels(g, design)
        objective = PosteriorObjective(g, labeling, data, design, prior, noise)
        theta = np.random.default_rng(seed).uniform(-0.2, 0.2, size=objective.size)
        value, grad = objective.value_and_grad(theta)
        assert math.isfinite(value)
        numeric = central_differences(lambda t: objective.value_and_grad(t)[0], theta)
        np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-5, err_msg=f"seed {seed}")


class TestMapFit(unittest.TestCase):
    def test_single_variable_closed_form(self):
        x = np.random.default_rng(4).normal(loc=2.0, scale=1.5, size=(200, 1))
        g = Graph(1)
        design = observational_design()
        fit = map_fit(
            g, derive_mechanism_labels(g, design), [x], design,
            LinearPriorConfig(tau=1e3), NoiseModel.GAUSSIAN, FitOptions(),
        )
        p = fit.params.per_condition[0]
        self.assertTrue(fit.converged)
        self.assertAlmostEqual(p.mu[0], float(x.mean()), delta=1e-4)
        self.assertAlmostEqual(p.a[0], math.log(float(x.std())), delta=1e-4)

    def test_empty_graph_matches_column_statistics(self):
        rng = np.random.default_rng(5)
        x = rng.normal(loc=[0.0, 3.0, -1.0], scale=[1.0, 0.5, 2.0], size=(300, 3))
        g = Graph(3)
        design = observational_design()
        fit = map_fit(
            g, derive_mechanism_labels(g, design), [x], design,
            LinearPriorConfig(), NoiseModel.GAUSSIAN, FitOptions(),
        )
        p = fit.params.per_condition[0]
        np.testing.assert_allclose(p.mu, x.mean(axis=0), atol=1e-3)
        np.testing.assert_allclose(p.a, np.log(x.std(axis=0)), atol=1e-3)

    def test_recovers_acyclic_coefficient(self):
        g = Graph(2, {(0, 1)})
        truth = GroundTruthModel(
            g, ConditionParameters(np.array([[0.0, 0.8], [0.0, 0.0]]), [0.5, -0.5], [0.0, 0.0])
        )
        design = observational_design()
        study = generate_study(truth, design, 5000, seed=6)
        fit = map_fit(
            g, derive_mechanism_labels(g, design), study.data, design,
            LinearPriorConfig(), NoiseModel.GAUSSIAN, FitOptions(),
        )
        self.assertAlmostEqual(fit.params.per_condition[0].b[0, 1], 0.8, delta=0.05)

    def test_same_seed_is_bit_identical(self):
        g = Graph(3, {(0, 1), (1, 2), (2, 0)})
        design = two_condition_design()
        data = cyclic_data(seed=7)
        labeling = derive_mechanism_labels(g, design)
        opts = FitOptions(restarts=3, seed=11)
        first = map_fit(g, labeling, data, design, LinearPriorConfig(), NoiseModel.GAUSSIAN, opts)
        second = map_fit(g, labeling, data, design, LinearPriorConfig(), NoiseModel.GAUSSIAN, opts)
        np.testing.assert_array_equal(first.free_vector, second.free_vector)
        self.assertEqual(first.neg_log_posterior, second.neg_log_posterior)
        self.assertEqual(first.restart_values, second.restart_values)
        self.assertEqual(len(first.restart_values), 3)
        self.assertEqual(first.neg_log_posterior, min(first.restart_values))

    def test_objective_trace_is_monotone(self):
        g = Graph(3, {(0, 1), (1, 2), (2, 0)})
        design = two_condition_design()
        data = cyclic_data(seed=8)
        fit = map_fit(
            g, derive_mechanism_labels(g, design), data, design,
            LinearPriorConfig(), NoiseModel.SUPER_GAUSSIAN, FitOptions(),
        )
        trace = np.array(fit.objective_trace)
        self.assertGreaterEqual(len(trace), 2)
        self.assertTrue(np.all(np.diff(trace) <= 1e-9 * np.abs(trace[:-1]).max()))

    def test_gp_prior_fit(self):
        g = Graph(3, {(0, 1), (1, 2)})
        design = two_condition_design()
        data = cyclic_data(seed=9)
        fit = map_fit(
            g, derive_mechanism_labels(g, design), data, design,
            GpPriorConfig(), NoiseModel.GAUSSIAN, FitOptions(),
        )
        self.assertTrue(math.isfinite(fit.neg_log_posterior))
        self.assertEqual(len(fit.params.per_condition), 2)
        self.assertTrue(all(p.masked_by(g) for p in fit.params.per_condition))

    def test_all_restarts_singular(self):
        class SingularObjective:
            graph = Graph(1)

            def initial_vector(self):
                return np.zeros(2)

            def value_and_grad(self, theta):
                return math.inf, np.zeros_like(theta)

        with self.assertRaises(AllRestartsFailedError):
            _fit_objective(SingularObjective(), FitOptions(restarts=2))


class TestLaplace(unittest.TestCase):
    def test_quadratic_is_exact(self):
        a = np.array([[4.0, 1.0], [1.0, 3.0]])
        terms = laplace_from_objective(lambda x: (0.5 * x @ a @ x, a @ x), np.zeros(2))
        expected = LOG_2PI - 0.5 * math.log(np.linalg.det(a))
        self.assertAlmostEqual(terms.log_evidence, expected, places=8)
        self.assertFalse(terms.floored)
        np.testing.assert_allclose(terms.parameter_std, np.sqrt(np.diag(np.linalg.inv(a))))

    def test_indefinite_hessian_is_floored(self):
        a = np.diag([2.0, -1.0])
        terms = laplace_from_objective(lambda x: (0.5 * x @ a @ x, a @ x), np.zeros(2))
        self.assertTrue(terms.floored)
        self.assertAlmostEqual(terms.hessian_log_det, math.log(2.0) + math.log(2e-8), places=6)

    def test_conjugate_marginal_likelihood(self):
        # known noise scale, N(0, tau^2) prior on the location
        g = Graph(1)
        design = observational_design()
        labeling = derive_mechanism_labels(g, design)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(3, 40))
            scale = rng.uniform(0.3, 2.0)
            tau = rng.uniform(1.0, 5.0)
            x = rng.normal(loc=rng.uniform(-2.0, 2.0), scale=scale, size=(n, 1))
            a0 = math.log(scale)
            prior = LinearPriorConfig(lam=10.0, tau=tau)
            objective = PosteriorObjective(g, labeling, [x], design, prior, NoiseModel.GAUSSIAN)

            def location_only(v):
                value, grad = objective.value_and_grad(np.array([v[0], a0]))
                return value, grad[:1]

            alpha2 = scale ** 2
            mu_map = (x.sum() / alpha2) / (n / alpha2 + 1.0 / tau ** 2)
            terms = laplace_from_objective(location_only, np.array([mu_map]))

            cov = alpha2 * np.eye(n) + tau ** 2 * np.ones((n, n))
            exact = stats.multivariate_normal(np.zeros(n), cov).logpdf(x.ravel())
            exact -= a0 ** 2 / (2 * tau ** 2) + math.log(tau) + 0.5 * LOG_2PI
            relative = abs(terms.log_evidence - exact) / max(abs(exact), 1.0)
            self.assertLess(relative, 1e-3, msg=f"seed {seed}")


class TestEvidence(unittest.TestCase):
    def test_arithmetic_identity(self):
        g = Graph(3, {(0, 1), (1, 2), (2, 0)})
        design = two_condition_design()
        evidence = laplace_log_evidence(
            g, cyclic_data(seed=12), design, LinearPriorConfig(), NoiseModel.GAUSSIAN, FitOptions()
        )
        n = evidence.parameter_count
        expected = (
            -evidence.map.neg_log_posterior + 0.5 * n * LOG_2PI - 0.5 * evidence.hessian_log_det
        )
        self.assertEqual(evidence.log_evidence, expected)
        self.assertLess(evidence.hessian_asymmetry, 1e-4)
        self.assertEqual(evidence.parameter_std.shape, (n,))

    def test_empty_graph_decomposes_over_columns(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(80, 3))
        design = observational_design()
        opts = FitOptions()
        joint = laplace_log_evidence(
            Graph(3), [x], design, LinearPriorConfig(), NoiseModel.GAUSSIAN, opts
        )
        separate = sum(
            laplace_log_evidence(
                Graph(1), [x[:, [i]]], design, LinearPriorConfig(), NoiseModel.GAUSSIAN, opts
            ).log_evidence
            for i in range(3)
        )
        self.assertAlmostEqual(joint.log_evidence, separate, delta=1e-4)

    def test_invariant_under_compound_relabeling(self):
        g = Graph(3, {(0, 1), (1, 2), (2, 0)})
        design = two_condition_design()
        data = cyclic_data(seed=14)
        perm = [2, 0, 1]
        permuted_data = []
        for x in data:
            y = np.empty_like(x)
            y[:, perm] = x
            permuted_data.append(y)
        opts = FitOptions(gradient_tolerance=1e-6)
        original = laplace_log_evidence(
            g, data, design, LinearPriorConfig(), NoiseModel.GAUSSIAN, opts
        )
        relabeled = laplace_log_evidence(
            g.permuted(perm), permuted_data, design.permuted(perm),
            LinearPriorConfig(), NoiseModel.GAUSSIAN, opts,
        )
        self.assertAlmostEqual(original.log_evidence, relabeled.log_evidence, delta=1e-4)

    def test_null_edge_does_not_beat_occam_scale(self):
        n = 200
        design = observational_design()
        gains = []
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            x = rng.normal(loc=[0.5, -1.0], scale=[1.0, 0.7], size=(n, 2))
            without = laplace_log_evidence(
                Graph(2), [x], design, LinearPriorConfig(), NoiseModel.GAUSSIAN, FitOptions()
            )
            with_edge = laplace_log_evidence(
                Graph(2, {(0, 1)}), [x], design, LinearPriorConfig(), NoiseModel.GAUSSIAN,
                FitOptions(),
            )
            gains.append(with_edge.log_evidence - without.log_evidence)
        self.assertLess(max(gains), 0.5 * math.log(n))
        self.assertLess(float(np.mean(gains)), 0.0)

    def test_acyclic_graph_decomposes_over_compounds(self):
        rng = np.random.default_rng(15)
        n = 150
        x = np.empty((n, 3))
        x[:, 0] = rng.normal(size=n)
        x[:, 1] = 0.8 * x[:, 0] + rng.normal(scale=0.5, size=n)
        x[:, 2] = -0.6 * x[:, 0] + 0.4 * x[:, 1] + rng.normal(size=n)
        g = Graph(3, {(0, 1), (0, 2), (1, 2)})
        design = observational_design()
        prior = LinearPriorConfig()
        joint = laplace_log_evidence(g, [x], design, prior, NoiseModel.GAUSSIAN, FitOptions())

        tying = TyingMap(g, derive_mechanism_labels(g, design))
        separate = 0.0
        for block in tying.blocks:
            mode = joint.map.free_vector[block.start:block.start + block.size]
            fun = compound_objective(x, list(block.parents), block.compound, prior)
            separate += laplace_from_objective(fun, mode).log_evidence
        self.assertAlmostEqual(joint.log_evidence, separate, delta=1e-6)


def compound_objective(x, parents, j, prior):
    """Negative log posterior of one compound's regression on its parents (Gaussian noise)."""
    xp = x[:, parents]
    n = x.shape[0]
    k = len(parents)
    normalizer = k * (math.log(prior.lam) + 0.5 * LOG_2PI)
    normalizer += 2 * (math.log(prior.tau) + 0.5 * LOG_2PI)

    def fun(v):
        beta, mu, a = v[:k], v[k], v[k + 1]
        alpha = math.exp(a)
        e = (x[:, j] - xp @ beta - mu) / alpha
        value = 0.5 * float(e @ e) + n * (0.5 * LOG_2PI + a) + normalizer
        value += float(beta @ beta) / (2 * prior.lam ** 2) + (mu ** 2 + a ** 2) / (2 * prior.tau ** 2)
        grad = np.empty_like(v)
        grad[:k] = -(xp.T @ e) / alpha + beta / prior.lam ** 2
        grad[k] = -float(e.sum()) / alpha + mu / prior.tau ** 2
        grad[k + 1] = n - float(e @ e) + a / prior.tau ** 2
        return value, grad

    return fun


def single_row_design():
    return ExperimentDesign(
        (Intervention.observational(), Intervention.abundance(0)), ("obs", "ab x1")
    )


def test_single_row_mechanism_is_flagged(caplog):
    g = Graph(1)
    design = single_row_design()
    labeling = derive_mechanism_labels(g, design)
    data = [np.random.default_rng(16).normal(size=(30, 1)), np.array([[0.4]])]
    objective = PosteriorObjective(
        g, labeling, data, design, LinearPriorConfig(), NoiseModel.GAUSSIAN
    )
    assert objective.underdetermined_labels == [(0, 2, 1)]

    class ThinObjective:
        graph = g
        underdetermined_labels = objective.underdetermined_labels

        def initial_vector(self):
            return np.zeros(2)

        def value_and_grad(self, theta):
            return math.inf, np.zeros_like(theta)

    with caplog.at_level(logging.WARNING, logger="inference"):
        with pytest.raises(AllRestartsFailedError):
            _fit_objective(ThinObjective(), FitOptions())
    assert "Mechanism 2 of compound 1 has 1 sample row(s)" in caplog.text


def test_well_sampled_mechanisms_are_not_flagged(caplog):
    g = Graph(2, {(0, 1)})
    design = single_row_design()
    rng = np.random.default_rng(17)
    data = [rng.normal(size=(30, 2)), rng.normal(size=(30, 2))]
    labeling = derive_mechanism_labels(g, design)
    with caplog.at_level(logging.WARNING, logger="inference"):
        map_fit(
            g, labeling, data, design, LinearPriorConfig(), NoiseModel.GAUSSIAN, FitOptions()
        )
    assert "sample row(s)" not in caplog.text
