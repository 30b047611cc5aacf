"""Tests for the stochastic-order calculus and the time-consistent order."""

import unittest

import numpy as np
import pytest

from alm_ssd.dominance import (
    DiscreteDistribution,
    SequentialProcess,
    cdf,
    check_sequential_ssd,
    conjugacy_check,
    dump_curves,
    expected_future_values,
    fsd_dominates,
    integrated_cdf,
    integrated_cdf_k,
    lorenz,
    mean,
    project_future_value,
    quantile,
    separation_oracle,
    shortfall_dominates,
    ssd_dominates,
    survival,
    check_propagation,
    variance,
)
from alm_ssd.tree import build_topology

pytestmark = pytest.mark.unit


def random_distribution(rng, atoms=4):
    values = rng.integers(0, 10, size=atoms).astype(float)
    return DiscreteDistribution.from_atoms(values, np.full(atoms, 1.0 / atoms))


class TestDistribution(unittest.TestCase):

    def setUp(self):
        self.d = DiscreteDistribution.from_atoms([3.0, 1.0, 2.0, 1.0], [0.25] * 4)

    def test_canonical_form(self):
        np.testing.assert_array_equal(self.d.values, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(self.d.probs, [0.5, 0.25, 0.25])
        zero = DiscreteDistribution.from_atoms([5.0, 1.0], [0.0, 1.0])
        np.testing.assert_array_equal(zero.values, [1.0])

    def test_rejects_bad_input(self):
        with self.assertRaises(ValueError):
            DiscreteDistribution.from_atoms([1.0], [0.5])
        with self.assertRaises(ValueError):
            DiscreteDistribution.from_atoms([], [])
        with self.assertRaises(ValueError):
            DiscreteDistribution.from_atoms([np.nan, 1.0], [0.5, 0.5])

    def test_moments(self):
        self.assertAlmostEqual(mean(self.d), 1.75)
        self.assertAlmostEqual(variance(self.d), 0.5 * 0.5625 + 0.25 * 0.0625 + 0.25 * 1.5625)
        self.assertAlmostEqual(mean(self.d.scaled(2.0)), 3.5)
        self.assertAlmostEqual(mean(self.d.shifted(1.0)), 2.75)

    def test_cdf_and_quantile(self):
        self.assertEqual(cdf(self.d, 1.0), 0.5)
        self.assertEqual(cdf(self.d, 1.5), 0.5)
        self.assertEqual(survival(self.d, 1.0), 0.5)
        self.assertEqual(quantile(self.d, 0.5), 1.0)
        self.assertEqual(quantile(self.d, 0.51), 2.0)
        self.assertEqual(quantile(self.d, 1.0), 3.0)
        with self.assertRaises(ValueError):
            quantile(self.d, 0.0)

    def test_integrated_functions(self):
        self.assertAlmostEqual(integrated_cdf(self.d, 2.0), 0.5)
        self.assertAlmostEqual(integrated_cdf_k(self.d, 2.0, 2), integrated_cdf(self.d, 2.0))
        self.assertAlmostEqual(integrated_cdf_k(self.d, 3.0, 3), (0.5 * 4.0 + 0.25 * 1.0) / 2.0)
        with self.assertRaises(ValueError):
            integrated_cdf_k(self.d, 1.0, 1)

    def test_lorenz(self):
        self.assertAlmostEqual(lorenz(self.d, 0.0), 0.0)
        self.assertAlmostEqual(lorenz(self.d, 0.5), 0.5)
        self.assertAlmostEqual(lorenz(self.d, 0.625), 0.75)
        self.assertAlmostEqual(lorenz(self.d, 1.0), 1.75)

    def test_conjugacy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            values = rng.normal(size=6)
            probs = rng.dirichlet(np.ones(6))
            d = DiscreteDistribution.from_atoms(values, probs / probs.sum())
            self.assertLess(conjugacy_check(d), 1e-9)

    def test_dump_curves(self):
        text = dump_curves(self.d, 2, [0.0, 1.0, 2.0])
        lines = text.splitlines()
        self.assertEqual(lines[0], "eta,value")
        self.assertEqual(len(lines), 4)
        self.assertTrue(lines[3].endswith(",0.5"))


class TestOrders(unittest.TestCase):

    def test_mean_dominates_its_distribution(self):
        y = DiscreteDistribution.from_atoms([0.0, 4.0], [0.5, 0.5])
        self.assertTrue(ssd_dominates(DiscreteDistribution.degenerate(2.0), y).dominates)
        self.assertFalse(ssd_dominates(y, DiscreteDistribution.degenerate(2.0)).dominates)
        self.assertFalse(fsd_dominates(DiscreteDistribution.degenerate(2.0), y).dominates)

    def test_violation_size(self):
        x = DiscreteDistribution.degenerate(1.0)
        y = DiscreteDistribution.degenerate(2.0)
        self.assertAlmostEqual(ssd_dominates(x, y).violation, 1.0)
        self.assertAlmostEqual(shortfall_dominates(x, y).violation, 1.0)

    def test_lorenz_and_shortfall_forms_agree(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            x = random_distribution(rng)
            y = random_distribution(rng)
            self.assertEqual(ssd_dominates(x, y).dominates, shortfall_dominates(x, y).dominates)

    def test_first_order_implies_second_order(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            x = random_distribution(rng)
            y = random_distribution(rng)
            if fsd_dominates(x, y).dominates:
                self.assertTrue(ssd_dominates(x, y).dominates)

    def test_separation_matches_lorenz_test(self):
        rng = np.random.default_rng(3)
        probs = np.full(5, 0.2)
        for _ in range(500):
            values = rng.integers(0, 10, size=5).astype(float)
            benchmark = random_distribution(rng, atoms=5)
            found = separation_oracle(values, probs, benchmark)
            own = DiscreteDistribution.from_atoms(values, probs)
            self.assertEqual(found.delta <= 1e-9, ssd_dominates(own, benchmark).dominates)

    def test_separation_event_is_lower_set(self):
        benchmark = DiscreteDistribution.degenerate(2.0)
        found = separation_oracle([5.0, 0.0, 3.0], [0.25, 0.25, 0.5], benchmark)
        self.assertEqual(found.event, (1,))
        self.assertAlmostEqual(found.probability, 0.25)
        self.assertAlmostEqual(found.delta, 2.0)
        self.assertAlmostEqual(found.target, 2.0)


class TestSequential(unittest.TestCase):

    def setUp(self):
        self.topology = build_topology([0, 1, 2, 3], [2, 3, 2])

    def process(self, values):
        return SequentialProcess(self.topology, values)

    def test_projection_mean_is_nested_expectation(self):
        rng = np.random.default_rng(4)
        proc = self.process(rng.normal(size=len(self.topology)))
        future = expected_future_values(proc)
        leaves = list(self.topology.leaves)
        total = np.zeros(len(self.topology))
        for leaf in leaves:
            total[leaf] = proc.values[self.topology.path_to_root(leaf)[1:]].sum()
        expected = float(np.dot(self.topology.probabilities[leaves], total[leaves]))
        self.assertAlmostEqual(mean(project_future_value(proc, 0, future)), expected)
        self.assertAlmostEqual(future[0], expected)
        with self.assertRaises(ValueError):
            project_future_value(proc, leaves[0])

    def test_process_needs_one_value_per_node(self):
        with self.assertRaises(ValueError):
            self.process(np.zeros(3))

    def test_identical_processes_pass(self):
        rng = np.random.default_rng(5)
        values = rng.normal(size=len(self.topology))
        check = check_sequential_ssd(self.process(values), self.process(values.copy()))
        self.assertTrue(check.passed)
        self.assertEqual(len(check.results), 1 + 2 + 6)

    def test_pointwise_shortfall_fails_somewhere(self):
        values = np.ones(len(self.topology))
        lower = values.copy()
        lower[list(self.topology.leaves)[0]] = -5.0
        check = check_sequential_ssd(self.process(lower), self.process(values))
        self.assertFalse(check.passed)
        self.assertIn(0, check.failures())

    def test_last_stage_order_carries_back(self):
        rng = np.random.default_rng(6)
        leaves = list(self.topology.leaves)
        for trial in range(200):
            y = rng.normal(size=len(self.topology))
            x = y.copy()
            if trial % 2 == 0:
                x[leaves] = y[leaves] + np.abs(rng.normal(size=len(leaves)))
            else:
                for n in self.topology.stage_nodes(self.topology.horizon - 1):
                    children = list(self.topology.children(n))
                    x[children] = np.dot(self.topology.conditional_probabilities(n), y[children])
            result = check_propagation(self.process(x), self.process(y), tol=1e-10)
            self.assertTrue(result.premise, result.premise_failures)
            self.assertTrue(result.conclusion, result.conclusion_failures)


if __name__ == "__main__":
    unittest.main()
