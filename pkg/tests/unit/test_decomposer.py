"""Tests for the nested decomposition solver."""

import time
import unittest
from dataclasses import replace

import numpy as np
import pytest

from alm_ssd.config import AssetSpec
from alm_ssd.decomposer import (
    InfeasibleProblemError,
    NodeState,
    all_cash_guess,
    build_subproblem,
    chain_tree,
    objective_cut,
    run,
    worst_case_path,
)
from alm_ssd.dominance import DiscreteDistribution, ssd_dominates
from alm_ssd.extensive import oracle_compare
from alm_ssd.formulation import benchmark, node_template
from alm_ssd.lp import solve
from alm_ssd.report import one_step_values
from tests.helpers import create_test_config, create_test_tree, flat_tree

pytestmark = pytest.mark.unit

GAP_TOL = 1e-5


def single_bond_config(**kwargs):
    defaults = {
        "stages": (0.0, 1.0),
        "branching": (2,),
        "assets": (AssetSpec("a1", "treasury", duration=2.0),),
        "small_cap_asset": None,
        "phi": 0.0,
    }
    defaults.update(kwargs)
    return create_test_config(**defaults)


class TestWarmStart(unittest.TestCase):

    def test_worst_case_path_follows_largest_liability(self):
        tree = flat_tree([0, 1, 2], [2, 2])
        tree.coefficients[2].lam = np.array([20.0])
        tree.coefficients[6].lam = np.array([30.0])
        self.assertEqual(worst_case_path(tree), [0, 2, 6])
        chain = chain_tree(tree, [0, 2, 6])
        self.assertEqual(len(chain.topology), 3)
        self.assertEqual(chain.node(2).Lambda, 30.0)

    def test_ties_take_the_first_child(self):
        self.assertEqual(worst_case_path(flat_tree([0, 1, 2], [2, 2])), [0, 1, 3])

    def test_all_cash_guess(self):
        states = all_cash_guess(flat_tree([0, 1, 2], [2, 2], outflow=1.0))
        self.assertEqual(states.shape, (7, 3))
        np.testing.assert_allclose(states[:, 0], 12.0)
        self.assertTrue(np.all(states[:, 1:] == 0.0))


class TestCuts(unittest.TestCase):

    def test_objective_cut_supports_leaf_value(self):
        cfg = single_bond_config()
        tree = flat_tree([0, 1], [2], outflow=5.0, revenue=0.0, lam=0.0)
        leaf = tree.topology.leaves[0]
        node = NodeState(node=leaf, template=node_template(tree, cfg, leaf), state=np.zeros(3))

        def value(parent_state):
            return solve(build_subproblem(tree, cfg, node, parent_state)).objective

        trial = np.array([6.0, 1.0, 4.0])
        result = solve(build_subproblem(tree, cfg, node, trial))
        cut = objective_cut(node, result, trial, iteration=1)
        self.assertAlmostEqual(cut.value_at(trial), result.objective)
        for other in (np.array([10.0, 0.0, 0.0]), np.array([6.0, 3.0, 1.0]), np.array([20.0, 0.0, 4.0])):
            self.assertLessEqual(cut.value_at(other), value(other) + 1e-9)

    def test_subproblem_needs_ancestor_state(self):
        cfg = single_bond_config()
        tree = flat_tree([0, 1], [2])
        node = NodeState(node=1, template=node_template(tree, cfg, 1), state=np.zeros(3))
        with self.assertRaises(ValueError):
            build_subproblem(tree, cfg, node, None)


class TestRun(unittest.TestCase):

    def test_feasibility_cuts_repair_a_bad_start(self):
        cfg = single_bond_config()
        tree = flat_tree([0, 1], [2], outflow=5.0, revenue=0.0, lam=0.0)
        solution = run(tree, cfg, initial=np.zeros((3, 3)))
        self.assertEqual(solution.status, "optimal")
        self.assertGreaterEqual(solution.counts["feasibility_cuts"], 1)
        self.assertGreaterEqual(solution.x[0, 0], 5.0 / 1.01 - 1e-7)
        report = oracle_compare(tree, cfg, decomposed=solution)
        self.assertTrue(report.agrees(GAP_TOL), report.to_dict())

    def test_infeasible_root_is_reported(self):
        cfg = single_bond_config(
            stages=(0.0, 1.0, 2.0),
            branching=(2, 2),
            assets=(AssetSpec("eq", "equity", coefficients=(0.005,)),),
        )
        tree = create_test_tree(cfg)
        with self.assertRaises(InfeasibleProblemError):
            run(tree, cfg)
        report = oracle_compare(tree, cfg)
        self.assertTrue(report.both_infeasible)

    def test_iteration_limit(self):
        cfg = create_test_config()
        cfg = replace(cfg, solver=replace(cfg.solver, max_iterations=1))
        solution = run(create_test_tree(cfg), cfg)
        self.assertEqual(solution.status, "iteration-limit")
        self.assertEqual(solution.iterations, 1)

    def test_requires_coefficients(self):
        tree = flat_tree([0, 1], [2])
        tree.coefficients = []
        with self.assertRaises(ValueError):
            run(tree, single_bond_config())

    def test_initial_state_shape_checked(self):
        with self.assertRaises(ValueError):
            run(flat_tree([0, 1], [2]), single_bond_config(), initial=np.zeros((3, 5)))


class TestAgainstExtensiveForm(unittest.TestCase):

    def test_matches_deterministic_equivalent(self):
        for kappa in (0.0, 0.1):
            for phi in (0.0, 1.0):
                cfg = create_test_config(kappa=kappa, phi=phi)
                tree = create_test_tree(cfg)
                solution = run(tree, cfg)
                with self.subTest(kappa=kappa, phi=phi):
                    self.assertEqual(solution.status, "optimal")
                    report = oracle_compare(tree, cfg, decomposed=solution)
                    self.assertTrue(report.agrees(GAP_TOL), report.to_dict())

    def test_policy_properties(self):
        cfg = create_test_config(phi=1.0)
        tree = create_test_tree(cfg)
        solution = run(tree, cfg)
        topology = tree.topology

        bounds = [entry["root_bound"] for entry in solution.log if np.isfinite(entry["root_bound"])]
        self.assertTrue(bounds)
        for before, after in zip(bounds, bounds[1:]):
            self.assertGreaterEqual(after, before - 1e-7 * max(1.0, abs(before)))

        for n, records in solution.event_cuts.items():
            self.assertLessEqual(len(records), cfg.solver.event_rounds_per_child * len(topology.children(n)))

        for n in topology.stage_nodes(topology.horizon - 1):
            own = DiscreteDistribution.from_atoms(
                one_step_values(solution, tree, n), topology.conditional_probabilities(n)
            )
            self.assertTrue(ssd_dominates(own, benchmark(tree, cfg, n), 1e-6).dominates)

        leaves = list(topology.leaves)
        self.assertTrue(np.allclose(solution.sell[leaves], 0.0))
        self.assertEqual(solution.b[0], 0.0)
        self.assertGreaterEqual(solution.k0, -1e-9)

    @pytest.mark.slow
    def test_random_instances_match_deterministic_equivalent(self):
        rng = np.random.default_rng(2024)
        for case in range(20):
            branching = tuple(int(b) for b in rng.integers(1, 4, size=3))
            kappa = (0.0, 0.1)[case % 2]
            phi = (0.0, 1.0)[(case // 2) % 2]
            cfg = create_test_config(branching=branching, kappa=kappa, phi=phi, seed=int(rng.integers(1, 100_000)))
            tree = create_test_tree(cfg)
            with self.subTest(case=case, branching=branching, kappa=kappa, phi=phi):
                started = time.perf_counter()
                solution = run(tree, cfg)
                report = oracle_compare(tree, cfg, decomposed=solution)
                elapsed = time.perf_counter() - started
                self.assertEqual(solution.status, "optimal")
                self.assertTrue(report.agrees(GAP_TOL), report.to_dict())
                self.assertLessEqual(report.root_deviation, 1e-4, report.to_dict())
                self.assertLess(elapsed, 10.0)

    def test_threads_give_the_same_answer(self):
        cfg = create_test_config(kappa=0.1, phi=1.0)
        tree = create_test_tree(cfg)
        serial = run(tree, cfg)
        parallel = run(tree, cfg, threads=3)
        self.assertAlmostEqual(serial.objective, parallel.objective, places=6)


if __name__ == "__main__":
    unittest.main()
