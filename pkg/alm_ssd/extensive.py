"""Deterministic equivalent of the ALM program for small trees.

All node decisions live in one LP. The nested mean-semideviation objective is
written with one epigraph variable per non-leaf node and one positive-part
variable per child; dominance at stage T-1 uses expected-shortfall rows at the
benchmark atoms. The result serves as an independent check on the decomposer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .config import RunConfig
from .formulation import benchmark, node_template, state_names
from .lp import LinearModel, SolveStatus, Tolerances, solve, to_lp_format
from .solution import Solution, empty_arrays, fill_node
from .tree import ScenarioTree

LOGGER = logging.getLogger("alm_ssd.extensive")


class ExtensiveSizeError(RuntimeError):
    """The deterministic equivalent would exceed the configured variable budget."""


@dataclass
class ExtensiveModel:
    model: LinearModel
    risk_variables: List[str] = field(default_factory=list)
    shortfall_variables: List[str] = field(default_factory=list)
    ssd_rows: int = 0

    def to_lp(self) -> str:
        return to_lp_format(self.model)


def _var(node_id: int, name: str) -> str:
    return f"n{node_id}_{name}"


def estimate_size(tree: ScenarioTree, cfg: RunConfig) -> int:
    """Variable count of :func:`build_extensive` without building it."""

    topology = tree.topology
    total = 0
    for n in range(len(topology)):
        template = node_template(tree, cfg, n)
        total += len(template.variables)
        if template.has_children:
            total += 1
        if n != 0:
            total += 1
        if template.ssd:
            atoms = np.unique([cfg.phi * tree.node(m).Lambda for m in topology.children(n)])
            total += atoms.size * len(topology.children(n))
    return total


def build_extensive(tree: ScenarioTree, cfg: RunConfig) -> ExtensiveModel:
    """Joint LP over all nodes.

    Raises:
        ExtensiveSizeError: when the variable count exceeds
            ``cfg.solver.oracle_max_variables``.
    """

    size = estimate_size(tree, cfg)
    if size > cfg.solver.oracle_max_variables:
        raise ExtensiveSizeError(
            f"extensive form needs {size} variables, limit is {cfg.solver.oracle_max_variables}"
        )

    topology = tree.topology
    names = state_names(tree.n_assets)
    model = LinearModel("extensive")
    extensive = ExtensiveModel(model)
    templates = [node_template(tree, cfg, n) for n in range(len(topology))]
    costs: Dict[int, Dict[str, float]] = {}

    for n, template in enumerate(templates):
        own_cost: Dict[str, float] = {}
        for var in template.variables:
            objective = var.objective if n == 0 else 0.0
            model.add_variable(_var(n, var.name), var.lower, var.upper, objective)
            if n != 0 and var.objective != 0.0:
                own_cost[_var(n, var.name)] = var.objective
        costs[n] = own_cost
        if template.has_children:
            theta = _var(n, "theta")
            model.add_variable(theta, lower=-np.inf, objective=1.0 if n == 0 else 0.0)
            extensive.risk_variables.append(theta)

    ancestors = topology.ancestors
    for n, template in enumerate(templates):
        parent = int(ancestors[n])
        for row in template.rows:
            coeffs: Dict[str, float] = {_var(n, name): coef for name, coef in row.own.items()}
            for k, coef in row.ancestor.items():
                key = _var(parent, names[k])
                coeffs[key] = coeffs.get(key, 0.0) - coef
            model.add_constraint(_var(n, row.name), coeffs, row.sense, row.rhs)

    # Nested risk: V_m = cost_m + theta_m for every non-root node m.
    for n, template in enumerate(templates):
        if not template.has_children:
            continue
        children = topology.children(n)
        probs = topology.conditional_probabilities(n)

        def value_terms(m: int, weight: float) -> Dict[str, float]:
            terms = {key: weight * coef for key, coef in costs[m].items()}
            if templates[m].has_children:
                terms[_var(m, "theta")] = terms.get(_var(m, "theta"), 0.0) + weight
            return terms

        mean_terms: Dict[str, float] = {}
        for m, p in zip(children, probs):
            for key, coef in value_terms(m, p).items():
                mean_terms[key] = mean_terms.get(key, 0.0) + coef

        risk_row: Dict[str, float] = {_var(n, "theta"): 1.0}
        for key, coef in mean_terms.items():
            risk_row[key] = risk_row.get(key, 0.0) - coef
        for m, p in zip(children, probs):
            z = _var(m, "z")
            model.add_variable(z)
            extensive.risk_variables.append(z)
            row = {z: 1.0}
            for key, coef in value_terms(m, -1.0).items():
                row[key] = row.get(key, 0.0) + coef
            for key, coef in mean_terms.items():
                row[key] = row.get(key, 0.0) + coef
            model.add_constraint(_var(m, "zdev"), row, ">=", 0.0)
            risk_row[z] = -cfg.kappa * p
        model.add_constraint(_var(n, "risk"), risk_row, ">=", 0.0)

        if template.ssd:
            _add_shortfall_rows(tree, cfg, n, extensive)

    LOGGER.debug(
        "Extensive form: %d variables, %d rows, %d shortfall rows",
        model.n_variables,
        model.n_constraints,
        extensive.ssd_rows,
    )
    return extensive


def _add_shortfall_rows(tree: ScenarioTree, cfg: RunConfig, n: int, extensive: ExtensiveModel) -> None:
    model = extensive.model
    topology = tree.topology
    children = topology.children(n)
    probs = topology.conditional_probabilities(n)
    gross = tree.child_returns(n)
    bench = benchmark(tree, cfg, n)
    for k, eta in enumerate(bench.values):
        expected = float(np.dot(bench.probs, np.maximum(eta - bench.values, 0.0)))
        budget: Dict[str, float] = {}
        for pos, m in enumerate(children):
            s = _var(n, f"short_{k}_{pos}")
            model.add_variable(s)
            extensive.shortfall_variables.append(s)
            row = {s: 1.0}
            for i in range(tree.n_assets + 1):
                row[_var(n, f"x{i}")] = float(gross[pos, i])
            model.add_constraint(_var(n, f"short_{k}_{pos}"), row, ">=", float(eta))
            budget[s] = float(probs[pos])
        model.add_constraint(_var(n, f"ssd_{k}"), budget, "<=", expected)
        extensive.ssd_rows += 1


def solve_extensive(
    tree: ScenarioTree,
    cfg: RunConfig,
    engine: Optional[str] = None,
    tolerances: Optional[Tolerances] = None,
) -> Solution:
    """Build and solve the deterministic equivalent; status mirrors the LP status."""

    extensive = build_extensive(tree, cfg)
    result = solve(extensive.model, tolerances, engine or cfg.solver.oracle_engine)
    topology = tree.topology
    arrays = empty_arrays(len(topology), tree.n_assets)
    if not result.optimal:
        LOGGER.info("Extensive form ended %s", result.status.value)
        return Solution(
            status=result.status.value,
            method="extensive",
            objective=float("nan"),
            k0=float("nan"),
            phi=cfg.phi,
            **arrays,
        )

    templates = [node_template(tree, cfg, n) for n in range(len(topology))]
    prefix_values: Dict[int, Dict[str, float]] = {n: {} for n in range(len(topology))}
    for j, var in enumerate(extensive.model.variables):
        head, _, name = var.name.partition("_")
        prefix_values[int(head[1:])][name] = float(result.primal[j])

    for n in range(len(topology) - 1, -1, -1):
        values = prefix_values[n]
        fill_node(arrays, n, values, tree.n_assets)
        cost = sum(var.objective * values.get(var.name, 0.0) for var in templates[n].variables)
        theta = values.get("theta", 0.0)
        arrays["v"][n] = cost + theta
        arrays["w"][n] = theta if templates[n].has_children else np.nan
    return Solution(
        status="optimal",
        method="extensive",
        objective=float(result.objective),
        k0=prefix_values[0].get("k0", float("nan")),
        phi=cfg.phi,
        counts={"variables": extensive.model.n_variables, "rows": extensive.model.n_constraints},
        **arrays,
    )


@dataclass
class OracleReport:
    decomposer_objective: float
    extensive_objective: float
    gap: float
    root_deviation: float
    decomposer_status: str
    extensive_status: str

    @property
    def both_infeasible(self) -> bool:
        return self.decomposer_status == "infeasible" and self.extensive_status == "infeasible"

    def agrees(self, tol: float) -> bool:
        if self.both_infeasible:
            return True
        return self.decomposer_status == "optimal" and self.extensive_status == "optimal" and self.gap <= tol

    def to_dict(self) -> Dict[str, Any]:
        return {
            "decomposer_objective": self.decomposer_objective,
            "extensive_objective": self.extensive_objective,
            "gap": self.gap,
            "root_deviation": self.root_deviation,
            "decomposer_status": self.decomposer_status,
            "extensive_status": self.extensive_status,
        }


def relative_gap(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a))


def oracle_compare(
    tree: ScenarioTree,
    cfg: RunConfig,
    decomposed: Optional[Solution] = None,
    engine: Optional[str] = None,
) -> OracleReport:
    """Compare the decomposer's answer with the extensive form on the same tree."""

    from .decomposer import InfeasibleProblemError, run

    if decomposed is None:
        try:
            decomposed = run(tree, cfg, engine=engine)
        except InfeasibleProblemError:
            decomposed = None
    reference = solve_extensive(tree, cfg)
    if reference.status == SolveStatus.INFEASIBLE.value:
        extensive_status = "infeasible"
    else:
        extensive_status = reference.status

    if decomposed is None:
        return OracleReport(
            decomposer_objective=float("nan"),
            extensive_objective=reference.objective,
            gap=float("inf"),
            root_deviation=float("inf"),
            decomposer_status="infeasible",
            extensive_status=extensive_status,
        )
    if extensive_status != "optimal":
        gap = float("inf")
        deviation = float("inf")
    else:
        gap = relative_gap(decomposed.objective, reference.objective)
        root_a = np.concatenate([decomposed.x[0], [decomposed.k0]])
        root_b = np.concatenate([reference.x[0], [reference.k0]])
        deviation = float(np.abs(root_a - root_b).max())
    report = OracleReport(
        decomposer_objective=decomposed.objective,
        extensive_objective=reference.objective,
        gap=gap,
        root_deviation=deviation,
        decomposer_status=decomposed.status,
        extensive_status=extensive_status,
    )
    LOGGER.info(
        "Oracle: decomposer=%.9g extensive=%.9g gap=%.3g root_deviation=%.3g",
        report.decomposer_objective,
        report.extensive_objective,
        report.gap,
        report.root_deviation,
    )
    return report


__all__ = [
    "ExtensiveModel",
    "ExtensiveSizeError",
    "OracleReport",
    "build_extensive",
    "estimate_size",
    "oracle_compare",
    "relative_gap",
    "solve_extensive",
]
