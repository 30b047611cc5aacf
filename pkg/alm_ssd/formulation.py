"""Per-node constraint templates of the ALM program.

A template lists a node's own variables and rows. Coupling rows carry the
coefficients of the ancestor state ``s = (x_0, ..., x_I, b)``: the row reads
``own . vars (sense) rhs + ancestor . s``. The decomposer fixes ``s`` into the
right-hand side, the extensive form moves it to the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np

from .config import RunConfig
from .dominance import DiscreteDistribution, lorenz
from .tree import ScenarioTree, TreeTopology


class NodeKind(str, Enum):
    ROOT = "root"
    INTERIOR = "interior"
    LAST_BUT_ONE = "lastButOne"
    LEAF = "leaf"


@dataclass(frozen=True)
class RowTemplate:
    name: str
    own: Dict[str, float]
    sense: str
    rhs: float
    ancestor: Dict[int, float] = field(default_factory=dict)

    @property
    def coupling(self) -> bool:
        return bool(self.ancestor)

    def rhs_at(self, state: np.ndarray) -> float:
        return self.rhs + sum(coef * float(state[k]) for k, coef in self.ancestor.items())


@dataclass(frozen=True)
class VariableTemplate:
    name: str
    lower: float = 0.0
    upper: float = math.inf
    objective: float = 0.0


@dataclass
class NodeTemplate:
    node: int
    kind: NodeKind
    variables: List[VariableTemplate]
    rows: List[RowTemplate]
    ssd: bool

    @property
    def has_children(self) -> bool:
        return self.kind is not NodeKind.LEAF


def state_names(n_assets: int) -> List[str]:
    """Names of the state coordinates passed to children."""

    return [f"x{i}" for i in range(n_assets + 1)] + ["b"]


def node_kind(topology: TreeTopology, node_id: int) -> NodeKind:
    stage = topology.nodes[node_id].stage
    if stage == 0:
        return NodeKind.ROOT
    if stage == topology.horizon:
        return NodeKind.LEAF
    if stage == topology.horizon - 1:
        return NodeKind.LAST_BUT_ONE
    return NodeKind.INTERIOR


def carries_ssd(topology: TreeTopology, node_id: int, cfg: RunConfig) -> bool:
    """SSD rows apply at stage T-1 (the root too when T = 1) when phi > 0."""

    return cfg.phi > 0.0 and topology.nodes[node_id].stage == topology.horizon - 1


def _asset_groups(cfg: RunConfig) -> Tuple[List[int], List[int]]:
    fixed_income = [i + 1 for i, a in enumerate(cfg.assets) if a.fixed_income]
    equities = [i + 1 for i, a in enumerate(cfg.assets) if a.family == "equity"]
    return fixed_income, equities


def structural_rows(tree: ScenarioTree, cfg: RunConfig, node_id: int) -> List[RowTemplate]:
    """Diversification, equity cap and duration rows for stages before T."""

    rows: List[RowTemplate] = []
    n_assets = len(cfg.assets)
    risky = [f"x{i}" for i in range(1, n_assets + 1)]
    for i, asset in enumerate(cfg.assets, start=1):
        if asset.theta_min > 0.0:
            coeffs = {name: -asset.theta_min for name in risky}
            coeffs[f"x{i}"] += 1.0
            rows.append(RowTemplate(f"div_min_{i}", coeffs, ">=", 0.0))
        if asset.theta_max < 1.0:
            coeffs = {name: -asset.theta_max for name in risky}
            coeffs[f"x{i}"] += 1.0
            rows.append(RowTemplate(f"div_max_{i}", coeffs, "<=", 0.0))
    fixed_income, equities = _asset_groups(cfg)
    if equities and cfg.q < 1.0:
        coeffs = {name: -cfg.q for name in risky}
        for i in equities:
            coeffs[f"x{i}"] += 1.0
        rows.append(RowTemplate("equity_cap", coeffs, "<=", 0.0))

    coef = tree.node(node_id)
    total = coef.Lambda
    if total > 0.0:
        weighted = float(np.dot(coef.lam, coef.delta_lam))
        band = total * cfg.delta_bar
        coeffs = {f"x{i}": cfg.assets[i - 1].duration for i in fixed_income}
        rows.append(RowTemplate("duration_lo", dict(coeffs), ">=", weighted - band))
        rows.append(RowTemplate("duration_hi", dict(coeffs), "<=", weighted + band))
    return rows


def node_template(tree: ScenarioTree, cfg: RunConfig, node_id: int) -> NodeTemplate:
    """Variables and rows of node ``node_id`` excluding cuts and value variables."""

    topology = tree.topology
    kind = node_kind(topology, node_id)
    n_assets = len(cfg.assets)
    assets = range(1, n_assets + 1)
    coef = tree.node(node_id)
    debt = n_assets + 1
    variables: List[VariableTemplate] = [VariableTemplate(f"x{i}") for i in range(n_assets + 1)]
    rows: List[RowTemplate] = []

    if kind is NodeKind.ROOT:
        variables += [VariableTemplate(f"buy{i}") for i in assets]
        variables += [VariableTemplate(f"sell{i}") for i in assets]
        variables.append(VariableTemplate("b", 0.0, 0.0))
        variables.append(VariableTemplate("k0", 0.0, math.inf, cfg.beta))
        for i, asset in enumerate(cfg.assets, start=1):
            rows.append(RowTemplate(f"alloc_{i}", {f"x{i}": 1.0, f"buy{i}": -1.0, f"sell{i}": 1.0}, "=", asset.initial_holding))
            rows.append(RowTemplate(f"sale_limit_{i}", {f"sell{i}": 1.0}, "<=", asset.initial_holding))
        cash = {"x0": 1.0, "k0": -1.0}
        for i in assets:
            cash[f"sell{i}"] = -(1.0 - cfg.phi_sell)
            cash[f"buy{i}"] = 1.0 + cfg.phi_buy
        rows.append(RowTemplate("cash", cash, "=", 0.0))
        rows += structural_rows(tree, cfg, node_id)
        return NodeTemplate(node_id, kind, variables, rows, carries_ssd(topology, node_id, cfg))

    parent = topology.nodes[node_id].ancestor
    assert parent is not None
    gap = topology.gap_years(topology.nodes[node_id].stage)
    interest = tree.node(parent).r_minus * gap
    net_flow = coef.c - float(np.sum(coef.L))
    growth = 1.0 + coef.r

    if kind is NodeKind.LEAF:
        variables.append(VariableTemplate("b", 0.0, math.inf, cfg.alpha))
        variables.append(VariableTemplate("b_sell"))
        for i in assets:
            rows.append(RowTemplate(f"hold_{i}", {f"x{i}": 1.0}, "=", 0.0, {i: float(growth[i])}))
        rows.append(
            RowTemplate("cash", {"x0": 1.0, "b_sell": 1.0}, "=", net_flow, {0: float(growth[0]), debt: -interest})
        )
        rows.append(RowTemplate("debt", {"b": 1.0, "b_sell": 1.0}, "=", 0.0, {debt: 1.0}))
        return NodeTemplate(node_id, kind, variables, rows, False)

    variables += [VariableTemplate(f"buy{i}") for i in assets]
    variables += [
        VariableTemplate(f"sell{i}", 0.0, math.inf, -(1.0 - cfg.alpha) * float(coef.g[i])) for i in assets
    ]
    variables.append(VariableTemplate("b", 0.0, math.inf, cfg.alpha))
    variables.append(VariableTemplate("b_buy"))
    variables.append(VariableTemplate("b_sell"))
    for i in assets:
        rows.append(
            RowTemplate(
                f"rebalance_{i}", {f"x{i}": 1.0, f"buy{i}": -1.0, f"sell{i}": 1.0}, "=", 0.0, {i: float(growth[i])}
            )
        )
        rows.append(RowTemplate(f"sale_limit_{i}", {f"sell{i}": 1.0}, "<=", 0.0, {i: float(growth[i])}))
    cash = {"x0": 1.0, "b_buy": -1.0, "b_sell": 1.0}
    for i in assets:
        cash[f"sell{i}"] = -(1.0 - cfg.phi_sell)
        cash[f"buy{i}"] = 1.0 + cfg.phi_buy
    rows.append(RowTemplate("cash", cash, "=", net_flow, {0: float(growth[0]), debt: -interest}))
    rows.append(RowTemplate("debt", {"b": 1.0, "b_buy": -1.0, "b_sell": 1.0}, "=", 0.0, {debt: 1.0}))
    rows += structural_rows(tree, cfg, node_id)
    return NodeTemplate(node_id, kind, variables, rows, carries_ssd(topology, node_id, cfg))


def benchmark(tree: ScenarioTree, cfg: RunConfig, node_id: int) -> DiscreteDistribution:
    """phi * Lambda over the children of ``node_id``."""

    topology = tree.topology
    children = topology.children(node_id)
    values = [cfg.phi * tree.node(m).Lambda for m in children]
    return DiscreteDistribution.from_atoms(values, topology.conditional_probabilities(node_id))


def event_row(
    tree: ScenarioTree,
    cfg: RunConfig,
    node_id: int,
    children: Tuple[int, ...],
    name: str,
) -> Tuple[RowTemplate, float, float]:
    """Quantile-form SSD row for the child subset ``children`` (positions).

    Returns the row, P(S) and the target L_bench(P(S)) / P(S).
    """

    probs = tree.topology.conditional_probabilities(node_id)
    gross = tree.child_returns(node_id)
    selected = list(children)
    probability = float(probs[selected].sum())
    weights = probs[selected] @ gross[selected] / probability
    target = lorenz(benchmark(tree, cfg, node_id), min(probability, 1.0)) / probability
    own = {f"x{i}": float(w) for i, w in enumerate(weights)}
    return RowTemplate(name, own, ">=", target), probability, target


def stage_cost(cfg: RunConfig, kind: NodeKind, g: np.ndarray, b: float, sell: np.ndarray) -> float:
    """alpha b - (1 - alpha) sum g x^- ; zero at the root."""

    if kind is NodeKind.ROOT:
        return 0.0
    profit = float(np.dot(g[1:], sell)) if sell.size else 0.0
    return cfg.alpha * b - (1.0 - cfg.alpha) * profit


__all__ = [
    "NodeKind",
    "NodeTemplate",
    "RowTemplate",
    "VariableTemplate",
    "benchmark",
    "carries_ssd",
    "event_row",
    "node_kind",
    "node_template",
    "stage_cost",
    "state_names",
    "structural_rows",
]
