"""Builders shared by the unit and integration tests."""

from dataclasses import replace

import numpy as np

from alm_ssd.alm import generate_coefficients
from alm_ssd.config import RunConfig, build_run_config, load_run_config
from alm_ssd.tree import NodeCoefficients, ScenarioTree, build_topology


def create_test_config(**kwargs) -> RunConfig:
    """The shipped small book on a three-stage binary tree, with overrides."""

    defaults = {
        "name": "test",
        "stages": (0.0, 1.0, 2.0, 3.0),
        "branching": (2, 2, 2),
        "seed": 7,
    }
    defaults.update(kwargs)
    return build_run_config(replace(load_run_config("base_small"), **defaults))


def create_test_tree(cfg: RunConfig, seed=None) -> ScenarioTree:
    topology = build_topology(cfg.stages, cfg.branching)
    tree, _, _ = generate_coefficients(topology, cfg, seed)
    return tree


def flat_tree(stages, branching, n_assets=1, returns=None, lam=10.0, outflow=1.0, revenue=1.5):
    """Tree with hand-set coefficients: one liability class, no econ rows.

    ``returns`` maps a node id to its (cash, asset...) return vector; every
    other node gets 1% on cash and 3% on each asset.
    """

    topology = build_topology(stages, branching)
    returns = returns or {}
    coefficients = []
    for node in topology.nodes:
        r = np.asarray(returns.get(node.id, [0.01] + [0.03] * n_assets), dtype=float)
        g = np.concatenate(([0.0], np.full(n_assets, 0.01 * node.stage)))
        coefficients.append(
            NodeCoefficients(
                r=r,
                g=g,
                L=np.array([outflow if node.stage else 0.0]),
                c=revenue if node.stage else 0.0,
                lam=np.array([lam]),
                delta_lam=np.array([2.0]),
                r_minus=0.03,
            )
        )
    return ScenarioTree(
        topology=topology,
        asset_ids=tuple(f"a{i}" for i in range(1, n_assets + 1)),
        liability_ids=("claims",),
        coefficients=coefficients,
    )
