"""Tests for asset returns, gain-loss, liability simulation and valuation."""

import unittest
from dataclasses import replace

import numpy as np
import pytest

from alm_ssd.alm import (
    RETURN_FLOOR,
    LiabilityValuationError,
    asset_return_step,
    compound_stage_return,
    gain_loss,
    gain_loss_tree,
    generate_coefficients,
    grow_levels,
    liability_backward,
    liability_forward,
    simulate_liabilities,
)
from alm_ssd.config import AssetSpec, LiabilitySpec, load_run_config, stressed
from alm_ssd.econ import simulate_econ_tree, yield_rate
from alm_ssd.tree import build_topology
from tests.helpers import create_test_config

pytestmark = pytest.mark.unit

FLAT = np.array([0.02, 0.0, 0.0, 5.0, 0.03, 0.01])


class TestAssetReturns(unittest.TestCase):

    def test_treasury_regression(self):
        asset = AssetSpec("t", "treasury", duration=2.0, coefficients=(0.001, 0.1, 0.5, -0.2))
        value = asset_return_step(asset, 0.01, FLAT, FLAT)
        self.assertAlmostEqual(value, 0.001 + 0.1 * 0.01 + 0.5 * 0.02 - 0.2 * 0.03)

    def test_corporate_reads_small_cap(self):
        asset = AssetSpec("c", "corporate", duration=5.0, coefficients=(0.0, 0.0, 0.0, 1.0, 0.5))
        self.assertAlmostEqual(asset_return_step(asset, 0.0, FLAT, FLAT, small_cap=0.04), 0.01 + 0.02)
        with self.assertRaises(ValueError):
            asset_return_step(asset, 0.0, FLAT, FLAT)

    def test_equity_term_spread(self):
        curve = np.array([0.03, -0.01, 0.0, 5.0, 0.0, 0.0])
        asset = AssetSpec("e", "equity", coefficients=(0.0, 0.0, 0.0, 0.0, 1.0))
        expected = yield_rate(curve, 10.0) - yield_rate(curve, 1.0)
        self.assertAlmostEqual(asset_return_step(asset, 0.0, curve, curve), expected)

    def test_return_floor_and_noise(self):
        asset = AssetSpec("e", "equity", coefficients=(-5.0,))
        self.assertEqual(asset_return_step(asset, 0.0, FLAT, FLAT), RETURN_FLOOR)
        asset = AssetSpec("x", "currency", coefficients=(0.01,))
        self.assertAlmostEqual(asset_return_step(asset, 0.0, FLAT, FLAT, noise=0.005), 0.015)

    def test_vectorized_rows(self):
        asset = AssetSpec("t", "treasury", duration=2.0, coefficients=(0.001, 0.1))
        values = asset_return_step(asset, np.array([0.0, 0.01]), np.stack([FLAT, FLAT]), np.stack([FLAT, FLAT]))
        np.testing.assert_allclose(values, [0.001, 0.002])

    def test_compounding(self):
        self.assertAlmostEqual(compound_stage_return([0.01] * 12), 1.01 ** 12 - 1.0)
        np.testing.assert_allclose(compound_stage_return(np.zeros((3, 6))), np.zeros(3))
        with self.assertRaises(ValueError):
            compound_stage_return(np.zeros((2, 0)))


class TestGainLoss(unittest.TestCase):

    def test_path_average(self):
        self.assertAlmostEqual(gain_loss([0.1, 0.1]), (0.1 + 0.21) / 2)
        self.assertEqual(gain_loss([]), 0.0)

    def test_tree_matches_path_formula(self):
        topology = build_topology([0, 1, 2], [2, 2])
        rng = np.random.default_rng(3)
        returns = rng.normal(0.02, 0.05, size=(len(topology), 3))
        g = gain_loss_tree(topology, returns)
        self.assertTrue(np.all(g[:, 0] == 0.0))
        self.assertTrue(np.all(g[0] == 0.0))
        for leaf in topology.leaves:
            path = topology.path_to_root(leaf)[1:]
            for i in (1, 2):
                self.assertAlmostEqual(g[leaf, i], gain_loss(returns[path, i]), places=12)


class TestLiabilities(unittest.TestCase):

    def test_zero_volatility_growth(self):
        path, floors = grow_levels([2.2], [0.12], [0.0], np.zeros((24, 1)))
        self.assertEqual(floors, 0)
        self.assertAlmostEqual(path[-1, 0], 2.2 * 1.01 ** 24)
        self.assertEqual(path.shape, (25, 1))

    def test_growth_floor_counted(self):
        _, floors = grow_levels([1.0], [0.0], [10.0], np.full((3, 1), -5.0))
        self.assertEqual(floors, 3)

    def test_forward_shapes(self):
        spec = LiabilitySpec("c", 2.2, 0.01, 0.03, 4.2, 0.005, 0.01)
        path = liability_forward(spec, 12, np.random.default_rng(0))
        self.assertEqual(path.outflow.shape, (13,))
        self.assertEqual(path.outflow[0], 2.2)
        self.assertEqual(path.revenue[0], 4.2)

    def test_backward_closed_form_on_flat_curve(self):
        topology = build_topology([0, 1], [2])
        curves = np.tile([0.03, 0.0, 0.0, 5.0, 0.0, 0.0], (3, 1))
        months = 12 * (1 + 2) + 1
        levels = np.full((2, months, 1), 2.0)
        lam, delta = liability_backward(topology, levels, curves, t_lambda=2)
        discount = np.exp(-0.03 * np.arange(3))
        self.assertAlmostEqual(lam[0, 0], 2.0 * discount.sum())
        self.assertAlmostEqual(delta[0, 0], float(np.dot(np.arange(3), discount) / discount.sum()))
        lam1, _ = liability_backward(topology, levels, curves, t_lambda=2, first_flow_offset=1)
        self.assertAlmostEqual(lam1[0, 0], 2.0 * discount[1:].sum())

    def test_zero_liabilities(self):
        topology = build_topology([0, 1], [2])
        curves = np.tile([0.03, 0.0, 0.0, 5.0, 0.0, 0.0], (3, 1))
        lam, delta = liability_backward(topology, np.zeros((2, 25, 1)), curves, t_lambda=1)
        self.assertTrue(np.all(lam == 0.0))
        self.assertTrue(np.all(delta == 0.0))

    def test_negative_flows_with_zero_value_raise(self):
        topology = build_topology([0, 1], [1])
        curves = np.tile([0.0, 0.0, 0.0, 5.0, 0.0, 0.0], (2, 1))
        levels = np.zeros((1, 25, 1))
        levels[0, 0, 0] = 1.0
        levels[0, 12, 0] = -1.0
        with self.assertRaises(LiabilityValuationError):
            liability_backward(topology, levels, curves, t_lambda=1)

    def test_stage_flows_accrue_monthly_levels(self):
        cfg = replace(
            create_test_config(),
            liabilities=(LiabilitySpec("c", 1.2, 0.0, 0.0, 2.4, 0.0, 0.0),),
        )
        topology = build_topology(cfg.stages, cfg.branching)
        outflows, revenue, leaf_levels, floors = simulate_liabilities(topology, cfg, seed=1)
        self.assertEqual(floors, 0)
        np.testing.assert_allclose(outflows[1:, 0], 1.2)
        np.testing.assert_allclose(revenue[1:], 2.4)
        self.assertEqual(outflows[0, 0], 0.0)
        self.assertEqual(leaf_levels.shape, (8, 12 * (3 + cfg.t_lambda) + 1, 1))

    def test_stressed_outflows_spread_wider(self):
        base = create_test_config()
        topology = build_topology(base.stages, (4, 4, 4))
        calm, _, _, _ = simulate_liabilities(topology, base, seed=2)
        hot, _, _, _ = simulate_liabilities(topology, stressed(base), seed=2)
        leaves = list(topology.leaves)
        self.assertGreater(hot[leaves, 0].std(), calm[leaves, 0].std())


class TestGenerateCoefficients(unittest.TestCase):

    def test_tree_is_complete_and_reproducible(self):
        cfg = create_test_config()
        topology = build_topology(cfg.stages, cfg.branching)
        tree, econ, diagnostics = generate_coefficients(topology, cfg)
        again, _, _ = generate_coefficients(topology, cfg)
        self.assertEqual(len(tree.coefficients), len(topology))
        for node in tree.coefficients:
            self.assertEqual(node.check(), [])
            self.assertEqual(node.r.shape, (len(cfg.assets) + 1,))
            self.assertEqual(node.g[0], 0.0)
        np.testing.assert_array_equal(tree.coefficients[5].r, again.coefficients[5].r)
        self.assertIn("return_floors", diagnostics.as_dict())
        self.assertIsNotNone(tree.econ)

    def test_cash_return_uses_parent_three_month_yield(self):
        cfg = create_test_config()
        topology = build_topology(cfg.stages, cfg.branching)
        tree, econ, _ = generate_coefficients(topology, cfg)
        for m in topology.stage_nodes(2):
            parent = topology.nodes[m].ancestor
            self.assertAlmostEqual(tree.node(m).r[0], yield_rate(econ.states[parent], 0.25) * 1.0)

    def test_seed_override(self):
        cfg = create_test_config()
        topology = build_topology(cfg.stages, cfg.branching)
        a, _, _ = generate_coefficients(topology, cfg, seed=1)
        b, _, _ = generate_coefficients(topology, cfg, seed=2)
        self.assertFalse(np.array_equal(a.node(3).r, b.node(3).r))

    def test_base_paper_root_liability_value(self):
        cfg = load_run_config("base_paper")
        topology = build_topology(cfg.stages, (10, 10, 5, 4))
        econ = simulate_econ_tree(topology, cfg.econ, cfg.initial, cfg.seed)
        _, _, leaf_levels, _ = simulate_liabilities(topology, cfg, cfg.seed)
        lam, _ = liability_backward(topology, leaf_levels, econ.states, cfg.t_lambda, cfg.first_flow_offset)
        self.assertLess(abs(lam[0].sum() - 10.21) / 10.21, 0.05)


if __name__ == "__main__":
    unittest.main()
