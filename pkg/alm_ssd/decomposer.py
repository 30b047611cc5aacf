"""Nested multicut decomposition over the scenario tree.

Every node owns a small LP: its own decisions, one value variable per child
bounded below by objective cuts, a risk variable ``w`` bounded below by risk
cuts, and, at stage T-1, event cuts enforcing second-order dominance of the
portfolio over the scaled liabilities. Nodes are re-solved only when their
ancestor's decision moved or a child sent a new cut.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .dominance import separation_oracle
from .formulation import NodeTemplate, benchmark, event_row, node_template, state_names
from .lp import LinearModel, SolveResult, SolveStatus, Tolerances, solve
from .risk import in_dual_set, mean_semideviation, risk_cut
from .solution import Solution, empty_arrays, fill_node
from .tree import ScenarioTree, build_topology

LOGGER = logging.getLogger("alm_ssd.decomposer")

STATE_TOL = 1e-9
ACTIVE_SLACK = 1e-6


class InfeasibleProblemError(RuntimeError):
    """The root subproblem became infeasible; ``trail`` lists the feasibility cuts that led there."""

    def __init__(self, message: str, trail: Sequence[Dict[str, Any]] = ()) -> None:
        super().__init__(message)
        self.trail = list(trail)


@dataclass(frozen=True)
class ObjectiveCut:
    """``v_owner >= intercept + gradient . s`` on the parent's state ``s``."""

    owner: int
    gradient: np.ndarray
    intercept: float
    iteration: int

    def value_at(self, state: np.ndarray) -> float:
        return self.intercept + float(self.gradient @ state)


@dataclass(frozen=True)
class RiskCut:
    owner: int
    multipliers: np.ndarray
    iteration: int


@dataclass(frozen=True)
class EventCut:
    owner: int
    children: Tuple[int, ...]
    probability: float
    target: float
    iteration: int


@dataclass(frozen=True)
class FeasibilityCut:
    """``intercept + gradient . s <= 0`` on the parent's state ``s``."""

    owner: int
    gradient: np.ndarray
    intercept: float
    iteration: int


@dataclass
class NodeState:
    node: int
    template: NodeTemplate
    state: np.ndarray
    objective_cuts: Dict[int, List[ObjectiveCut]] = field(default_factory=dict)
    risk_cuts: List[RiskCut] = field(default_factory=list)
    event_cuts: List[EventCut] = field(default_factory=list)
    feasibility_cuts: List[FeasibilityCut] = field(default_factory=list)
    values: Dict[str, float] = field(default_factory=dict)
    value: float = float("-inf")
    w: float = float("nan")
    on: bool = True
    solved: bool = False


@dataclass
class NodeOutcome:
    node: int
    result: SolveResult
    state: Optional[np.ndarray] = None
    values: Dict[str, float] = field(default_factory=dict)
    new_risk_cuts: int = 0
    new_event_cuts: int = 0
    event_rounds: int = 0


def _cut_value(cuts: Sequence[ObjectiveCut], state: np.ndarray, floor: float) -> float:
    best = floor
    for cut in cuts:
        best = max(best, cut.value_at(state))
    return best


def build_subproblem(
    tree: ScenarioTree,
    cfg: RunConfig,
    node: NodeState,
    ancestor_state: Optional[np.ndarray],
) -> LinearModel:
    """LP of ``node`` with the ancestor decision fixed and the current cut pools."""

    template = node.template
    topology = tree.topology
    n = node.node
    if template.rows and any(row.coupling for row in template.rows) and ancestor_state is None:
        raise ValueError(f"node {n} needs its ancestor state")
    model = LinearModel(f"node{n}")
    for var in template.variables:
        model.add_variable(var.name, var.lower, var.upper, var.objective)
    for row in template.rows:
        rhs = row.rhs_at(ancestor_state) if row.coupling else row.rhs
        model.add_constraint(row.name, row.own, row.sense, rhs, dual=row.coupling)
    if not template.has_children:
        return model

    names = state_names(tree.n_assets)
    children = topology.children(n)
    probs = topology.conditional_probabilities(n)
    for pos in range(len(children)):
        model.add_variable(f"v{pos}", lower=-cfg.big_m)
    model.add_variable("w", lower=cfg.w_floor, objective=1.0)

    for pos, m in enumerate(children):
        for k, cut in enumerate(node.objective_cuts.get(m, [])):
            coeffs: Dict[str, float] = {f"v{pos}": 1.0}
            for idx, g in enumerate(cut.gradient):
                if g != 0.0:
                    coeffs[names[idx]] = -float(g)
            model.add_constraint(f"ocut_{pos}_{k}", coeffs, ">=", cut.intercept)
    for k, cut in enumerate(node.risk_cuts):
        coeffs = {"w": 1.0}
        for pos, mu in enumerate(cut.multipliers):
            coeffs[f"v{pos}"] = -float(probs[pos] * mu)
        model.add_constraint(f"risk_{k}", coeffs, ">=", 0.0)
    for k, cut in enumerate(node.feasibility_cuts):
        coeffs = {names[idx]: float(g) for idx, g in enumerate(cut.gradient) if g != 0.0}
        if coeffs:
            model.add_constraint(f"fcut_{k}", coeffs, "<=", -cut.intercept)
        elif cut.intercept > 0.0:
            # A constant positive cut makes the node infeasible outright.
            model.add_constraint(f"fcut_{k}", {"w": 0.0}, "<=", -cut.intercept)
    for k, cut in enumerate(node.event_cuts):
        row, _, _ = event_row(tree, cfg, n, cut.children, f"event_{k}")
        model.add_constraint(row.name, row.own, row.sense, row.rhs)
    return model


def _primal_values(result: SolveResult) -> Dict[str, float]:
    assert result.model is not None and result.primal is not None
    return {var.name: float(result.primal[j]) for j, var in enumerate(result.model.variables)}


def _own_state(values: Dict[str, float], n_assets: int) -> np.ndarray:
    return np.array([values.get(name, 0.0) for name in state_names(n_assets)], dtype=float)


def solve_node_with_events(
    tree: ScenarioTree,
    cfg: RunConfig,
    node: NodeState,
    ancestor_state: Optional[np.ndarray],
    iteration: int,
    engine: str,
) -> NodeOutcome:
    """Solve ``node``, adding risk cuts and (at stage T-1) event cuts until none is violated."""

    topology = tree.topology
    n = node.node
    children = topology.children(n)
    probs = topology.conditional_probabilities(n) if children else np.zeros(0)
    settings = cfg.solver
    tolerances = Tolerances()
    limit = settings.event_rounds_per_child * max(len(children), 1)
    gross = tree.child_returns(n) if node.template.ssd else None
    bench = benchmark(tree, cfg, n) if node.template.ssd else None
    outcome = NodeOutcome(node=n, result=SolveResult(status=SolveStatus.NUMERIC_FAILURE))

    while True:
        model = build_subproblem(tree, cfg, node, ancestor_state)
        result = solve(model, tolerances, engine)
        outcome.result = result
        if not result.optimal:
            return outcome
        values = _primal_values(result)

        if children:
            v = np.array([values[f"v{pos}"] for pos in range(len(children))])
            rho = mean_semideviation(v, probs, cfg.kappa)
            if values["w"] < rho - settings.risk_tol * max(1.0, abs(rho)):
                mu = risk_cut(v, probs, cfg.kappa)
                assert in_dual_set(mu, probs, cfg.kappa, tol=1e-9)
                if any(np.array_equal(mu, cut.multipliers) for cut in node.risk_cuts):
                    LOGGER.debug("node %d: repeated risk multipliers, accepting w within tolerance", n)
                else:
                    node.risk_cuts.append(RiskCut(n, mu, iteration))
                    outcome.new_risk_cuts += 1
                    continue

        if node.template.ssd:
            x = np.array([values[f"x{i}"] for i in range(tree.n_assets + 1)])
            portfolio = gross @ x
            separation = separation_oracle(portfolio, probs, bench)
            if separation.delta > settings.ssd_tol:
                known = any(cut.children == separation.event for cut in node.event_cuts)
                if known:
                    LOGGER.debug("node %d: event %s already cut, violation %.3g", n, separation.event, separation.delta)
                elif outcome.event_rounds >= limit:
                    LOGGER.warning("node %d: event loop stopped after %d rounds", n, outcome.event_rounds)
                else:
                    outcome.event_rounds += 1
                    node.event_cuts.append(
                        EventCut(n, separation.event, separation.probability, separation.target, iteration)
                    )
                    outcome.new_event_cuts += 1
                    continue

        outcome.values = values
        outcome.state = _own_state(values, tree.n_assets)
        return outcome


def _coupling_gradient(template: NodeTemplate, multipliers: np.ndarray, width: int) -> np.ndarray:
    gradient = np.zeros(width)
    for i, row in enumerate(template.rows):
        if not row.coupling:
            continue
        y = float(multipliers[i])
        for k, coef in row.ancestor.items():
            gradient[k] += y * coef
    return gradient


def objective_cut(
    node: NodeState, result: SolveResult, parent_state: np.ndarray, iteration: int
) -> ObjectiveCut:
    """Supporting hyperplane of the node value at the parent state that produced it."""

    assert result.duals is not None
    gradient = _coupling_gradient(node.template, result.duals, parent_state.size)
    intercept = float(result.objective) - float(gradient @ parent_state)
    return ObjectiveCut(node.node, gradient, intercept, iteration)


def feasibility_cut(
    node: NodeState, result: SolveResult, parent_state: np.ndarray, iteration: int
) -> FeasibilityCut:
    assert result.farkas is not None
    gradient = _coupling_gradient(node.template, result.farkas, parent_state.size)
    intercept = float(result.infeasibility) - float(gradient @ parent_state)
    return FeasibilityCut(node.node, gradient, intercept, iteration)


def chain_tree(tree: ScenarioTree, path: Sequence[int]) -> ScenarioTree:
    """Single-scenario tree following ``path`` (root first)."""

    topology = build_topology(tree.topology.stages, [1] * tree.topology.horizon)
    econ = tree.econ[list(path)] if tree.econ is not None else None
    return ScenarioTree(
        topology=topology,
        asset_ids=tree.asset_ids,
        liability_ids=tree.liability_ids,
        coefficients=[tree.node(n) for n in path],
        econ=econ,
    )


def worst_case_path(tree: ScenarioTree) -> List[int]:
    topology = tree.topology
    path = [0]
    while not topology.is_leaf(path[-1]):
        children = topology.children(path[-1])
        path.append(max(children, key=lambda m: (tree.node(m).Lambda, -m)))
    return path


def all_cash_guess(tree: ScenarioTree) -> np.ndarray:
    """Cash-only states funded by the largest liability value plus the worst stage outflows."""

    topology = tree.topology
    outflow = 0.0
    for t in range(1, topology.horizon + 1):
        outflow += max(float(np.sum(tree.node(n).L)) for n in topology.stage_nodes(t))
    funding = float(tree.Lambda().max(initial=0.0)) + outflow
    states = np.zeros((len(topology), tree.n_assets + 2))
    states[:, 0] = funding
    return states


def initialize_from_worst_case(tree: ScenarioTree, cfg: RunConfig, engine: Optional[str] = None) -> np.ndarray:
    """Starting state per node from the deterministic problem on the max-Lambda path.

    Falls back to :func:`all_cash_guess` when that problem has no optimal solution.
    """

    from .extensive import ExtensiveSizeError, solve_extensive

    path = worst_case_path(tree)
    chain = chain_tree(tree, path)
    try:
        chain_solution = solve_extensive(chain, cfg, engine=engine or cfg.solver.engine)
    except ExtensiveSizeError:
        chain_solution = None
    if chain_solution is None or not chain_solution.optimal:
        LOGGER.info("Worst-case path problem unsolved, starting from an all-cash portfolio")
        return all_cash_guess(tree)

    stages = tree.topology.node_stages
    states = np.array([chain_solution.state(int(t)) for t in stages], dtype=float)
    LOGGER.debug("Initial states broadcast from path %s", path)
    return states


def _count_active_events(tree: ScenarioTree, cfg: RunConfig, node: NodeState) -> List[Dict[str, Any]]:
    if not node.event_cuts or not node.values:
        return []
    probs = tree.topology.conditional_probabilities(node.node)
    x = np.array([node.values.get(f"x{i}", 0.0) for i in range(tree.n_assets + 1)])
    portfolio = tree.child_returns(node.node) @ x
    records = []
    for cut in node.event_cuts:
        selected = list(cut.children)
        mean = float(probs[selected] @ portfolio[selected]) / cut.probability
        slack = mean - cut.target
        records.append(
            {
                "children": selected,
                "probability": cut.probability,
                "target": cut.target,
                "slack": slack,
                "iteration": cut.iteration,
                "active": bool(slack < ACTIVE_SLACK),
            }
        )
    return records


def _build_solution(
    tree: ScenarioTree,
    cfg: RunConfig,
    nodes: List[NodeState],
    status: str,
    iterations: int,
    counts: Dict[str, int],
    log: List[Dict[str, Any]],
) -> Solution:
    arrays = empty_arrays(len(nodes), tree.n_assets)
    event_cuts: Dict[int, List[Dict[str, Any]]] = {}
    for node in nodes:
        fill_node(arrays, node.node, node.values, tree.n_assets)
        arrays["v"][node.node] = node.value
        arrays["w"][node.node] = node.values.get("w", np.nan)
        records = _count_active_events(tree, cfg, node)
        if records:
            event_cuts[node.node] = records
    counts = dict(counts)
    counts["active_event_cuts"] = sum(1 for records in event_cuts.values() for r in records if r["active"])
    return Solution(
        status=status,
        method="decomposition",
        objective=nodes[0].value,
        k0=nodes[0].values.get("k0", float("nan")),
        iterations=iterations,
        counts=counts,
        log=log,
        event_cuts=event_cuts,
        phi=cfg.phi,
        **arrays,
    )


def _solve_batch(
    tree: ScenarioTree,
    cfg: RunConfig,
    nodes: List[NodeState],
    flagged: List[int],
    iteration: int,
    engine: str,
    pool: Optional[ThreadPoolExecutor],
) -> List[NodeOutcome]:
    ancestors = tree.topology.ancestors

    def work(n: int) -> NodeOutcome:
        parent = int(ancestors[n])
        state = nodes[parent].state if parent >= 0 else None
        return solve_node_with_events(tree, cfg, nodes[n], state, iteration, engine)

    if pool is None or len(flagged) < 2:
        return [work(n) for n in flagged]
    return list(pool.map(work, flagged))


def run(
    tree: ScenarioTree,
    cfg: RunConfig,
    engine: Optional[str] = None,
    threads: int = 1,
    initial: Optional[np.ndarray] = None,
) -> Solution:
    """Solve the ALM program on ``tree`` by nested decomposition.

    Args:
        tree: Scenario tree with coefficients.
        cfg: Validated run configuration.
        engine: LP engine name; defaults to ``cfg.solver.engine``.
        threads: Worker threads for the nodes of one stage.
        initial: Optional starting state per node (nodes x (I+2)).

    Returns:
        The policy with status ``optimal`` or ``iteration-limit``.

    Raises:
        InfeasibleProblemError: the root subproblem became infeasible.
    """

    if not tree.has_coefficients:
        raise ValueError("tree has no coefficients")
    engine = engine or cfg.solver.engine
    topology = tree.topology
    settings = cfg.solver
    width = tree.n_assets + 2
    states = initial if initial is not None else initialize_from_worst_case(tree, cfg, engine)
    if states.shape != (len(topology), width):
        raise ValueError(f"initial states must have shape {(len(topology), width)}")

    nodes = [
        NodeState(
            node=n,
            template=node_template(tree, cfg, n),
            state=np.array(states[n], dtype=float),
            objective_cuts={m: [] for m in topology.children(n)},
        )
        for n in range(len(topology))
    ]
    counts = {"objective_cuts": 0, "risk_cuts": 0, "event_cuts": 0, "feasibility_cuts": 0}
    trail: List[Dict[str, Any]] = []
    log: List[Dict[str, Any]] = []
    ancestors = topology.ancestors
    root_bound = float("-inf")
    status = "iteration-limit"
    iteration = 0

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while iteration < settings.max_iterations:
            if not any(node.on for node in nodes):
                status = "optimal"
                break
            iteration += 1
            solved = 0
            before = dict(counts)
            for t in range(topology.horizon, -1, -1):
                flagged = [n for n in topology.stage_nodes(t) if nodes[n].on]
                if not flagged:
                    continue
                outcomes = _solve_batch(tree, cfg, nodes, flagged, iteration, engine, pool)
                for outcome in outcomes:
                    n = outcome.node
                    node = nodes[n]
                    node.on = False
                    solved += 1
                    counts["risk_cuts"] += outcome.new_risk_cuts
                    counts["event_cuts"] += outcome.new_event_cuts
                    parent = int(ancestors[n])
                    result = outcome.result

                    if result.status is SolveStatus.INFEASIBLE:
                        if parent < 0:
                            raise InfeasibleProblemError(
                                f"root subproblem infeasible at iteration {iteration}", trail
                            )
                        cut = feasibility_cut(node, result, nodes[parent].state, iteration)
                        nodes[parent].feasibility_cuts.append(cut)
                        nodes[parent].on = True
                        counts["feasibility_cuts"] += 1
                        trail.append(
                            {"node": n, "parent": parent, "iteration": iteration, "infeasibility": result.infeasibility}
                        )
                        LOGGER.debug("node %d infeasible (%.3g), feasibility cut to %d", n, result.infeasibility, parent)
                        continue
                    if not result.optimal:
                        raise RuntimeError(f"node {n}: LP {result.status.value}: {result.message}")

                    node.values = outcome.values
                    node.value = float(result.objective)
                    node.w = outcome.values.get("w", float("nan"))
                    node.solved = True
                    assert outcome.state is not None
                    scale = max(1.0, float(np.abs(node.state).max(initial=0.0)))
                    if not np.allclose(outcome.state, node.state, rtol=0.0, atol=STATE_TOL * scale):
                        node.state = outcome.state
                        for m in topology.children(n):
                            nodes[m].on = True

                    if parent >= 0:
                        parent_state = nodes[parent].state
                        cut = objective_cut(node, result, parent_state, iteration)
                        pool_cuts = nodes[parent].objective_cuts[n]
                        current = _cut_value(pool_cuts, parent_state, -cfg.big_m)
                        if current < node.value - settings.cut_tol * max(1.0, abs(node.value)):
                            pool_cuts.append(cut)
                            nodes[parent].on = True
                            counts["objective_cuts"] += 1

            if nodes[0].solved:
                root_bound = nodes[0].value
            entry = {
                "iteration": iteration,
                "solved": solved,
                "objective_cuts": counts["objective_cuts"] - before["objective_cuts"],
                "risk_cuts": counts["risk_cuts"] - before["risk_cuts"],
                "event_cuts": counts["event_cuts"] - before["event_cuts"],
                "feasibility_cuts": counts["feasibility_cuts"] - before["feasibility_cuts"],
                "root_bound": root_bound,
            }
            log.append(entry)
            LOGGER.info(
                "iteration=%d solved=%d objective_cuts=%d risk_cuts=%d event_cuts=%d feasibility_cuts=%d root_bound=%.9g",
                entry["iteration"],
                entry["solved"],
                entry["objective_cuts"],
                entry["risk_cuts"],
                entry["event_cuts"],
                entry["feasibility_cuts"],
                entry["root_bound"],
            )
        else:
            if not any(node.on for node in nodes):
                status = "optimal"
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    if status != "optimal":
        LOGGER.warning("Decomposition stopped after %d iterations without converging", iteration)
    counts["iterations"] = iteration
    return _build_solution(tree, cfg, nodes, status, iteration, counts, log)


__all__ = [
    "EventCut",
    "FeasibilityCut",
    "InfeasibleProblemError",
    "NodeOutcome",
    "NodeState",
    "ObjectiveCut",
    "RiskCut",
    "all_cash_guess",
    "build_subproblem",
    "chain_tree",
    "feasibility_cut",
    "initialize_from_worst_case",
    "objective_cut",
    "run",
    "solve_node_with_events",
    "worst_case_path",
]
