"""Result tables, dominance verification and CDF exports for a solved policy."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .config import RunConfig
from .dominance import (
    DiscreteDistribution,
    SequentialProcess,
    PropagationResult,
    cdf,
    integrated_cdf,
    separation_oracle,
    ssd_dominates,
    check_propagation,
)
from .extensive import ExtensiveSizeError, OracleReport, estimate_size, oracle_compare
from .formulation import benchmark
from .solution import Solution
from .tree import ScenarioTree

LOGGER = logging.getLogger("alm_ssd.report")

ACTIVE_TOL = 1e-6
MISMATCH_BINS = ("lower_active", "liabilities_longer", "assets_longer", "upper_active")


class VerificationError(RuntimeError):
    """A solved policy failed a dominance check or the oracle comparison."""

    def __init__(self, message: str, report: Optional["VerificationReport"] = None) -> None:
        super().__init__(message)
        self.report = report


def _weighted(values: np.ndarray, weights: np.ndarray) -> tuple:
    mask = np.isfinite(values)
    if not mask.any():
        return float("nan"), float("nan")
    w = weights[mask] / weights[mask].sum()
    mean = float(np.dot(w, values[mask]))
    std = math.sqrt(max(float(np.dot(w, (values[mask] - mean) ** 2)), 0.0))
    return mean, std


def funding_ratios(solution: Solution, tree: ScenarioTree) -> np.ndarray:
    """Portfolio value over Lambda per node; NaN where Lambda is not positive."""

    lam = tree.Lambda()
    value = solution.portfolio_value()
    ratios = np.full(lam.shape, np.nan)
    positive = lam > 0.0
    ratios[positive] = value[positive] / lam[positive]
    return ratios


def cumulative_profits(solution: Solution, tree: ScenarioTree) -> np.ndarray:
    """Sum over the path of sum_i g_{i,n} x^-_{i,n}, root excluded."""

    topology = tree.topology
    profits = np.zeros(len(topology))
    for node in topology.nodes:
        if node.ancestor is None:
            continue
        realised = float(np.dot(tree.node(node.id).g[1:], solution.sell[node.id]))
        profits[node.id] = profits[node.ancestor] + realised
    return profits


def stage_statistics(solution: Solution, tree: ScenarioTree) -> pd.DataFrame:
    """Probability-weighted mean/std per stage of debt, cumulative profit and funding ratio."""

    topology = tree.topology
    probs = topology.probabilities
    profits = cumulative_profits(solution, tree)
    ratios = funding_ratios(solution, tree)
    rows = []
    for t in range(topology.horizon + 1):
        nodes = list(topology.stage_nodes(t))
        weights = probs[nodes]
        debt_mean, debt_std = _weighted(solution.b[nodes], weights)
        profit_mean, profit_std = _weighted(profits[nodes], weights)
        fr_mean, fr_std = _weighted(ratios[nodes], weights)
        rows.append(
            {
                "stage": t,
                "year": topology.stages[t],
                "debt_mean": debt_mean,
                "debt_std": debt_std,
                "profit_mean": profit_mean,
                "profit_std": profit_std,
                "funding_ratio_mean": fr_mean,
                "funding_ratio_std": fr_std,
            }
        )
    return pd.DataFrame(rows)


def one_step_values(solution: Solution, tree: ScenarioTree, node_id: int) -> np.ndarray:
    """X_{n,m} = sum_i (1 + r_{i,m}) x_{i,n} over the children m of ``node_id``."""

    return tree.child_returns(node_id) @ solution.x[node_id]


def ssd_active_nodes(solution: Solution, tree: ScenarioTree, cfg: RunConfig, tol: float = ACTIVE_TOL) -> List[int]:
    """Stage T-1 nodes where the decomposer marked an event cut active at the optimum.

    Policies without event cut records (the extensive form) fall back to the
    separation oracle: a node is active when its delta is at least ``-tol``.
    """

    if cfg.phi <= 0.0:
        return []
    topology = tree.topology
    last_but_one = topology.stage_nodes(topology.horizon - 1)
    if solution.event_cuts:
        return [
            n for n in last_but_one if any(record.get("active", False) for record in solution.event_cuts.get(n, []))
        ]
    active = []
    for n in last_but_one:
        separation = separation_oracle(
            one_step_values(solution, tree, n), topology.conditional_probabilities(n), benchmark(tree, cfg, n)
        )
        if separation.delta >= -tol:
            active.append(n)
    return active


def summary(solution: Solution, tree: ScenarioTree, cfg: RunConfig) -> Dict[str, Any]:
    topology = tree.topology
    ratios = funding_ratios(solution, tree)
    leaves = list(topology.leaves)
    fr_t, _ = _weighted(ratios[leaves], topology.probabilities[leaves])
    last_but_one = topology.stage_nodes(topology.horizon - 1)
    active = ssd_active_nodes(solution, tree, cfg)
    return {
        "config": cfg.name,
        "status": solution.status,
        "method": solution.method,
        "phi": cfg.phi,
        "k0": solution.k0,
        "fr0": float(ratios[0]),
        "fr_T_mean": fr_t,
        "objective": solution.objective,
        "iterations": solution.iterations,
        "feasibility_cuts": solution.counts.get("feasibility_cuts", 0),
        "active_ssd_pct": 100.0 * len(active) / len(last_but_one),
        "funding_ratio_defined": bool(np.isfinite(ratios[0])),
    }


def duration_mismatch(solution: Solution, tree: ScenarioTree, cfg: RunConfig, tol: float = ACTIVE_TOL) -> pd.DataFrame:
    """Share of nodes (stages 0..T-1, Lambda > 0) per mismatch bin.

    The mismatch is (sum of fixed-income duration * holding - sum lambda delta)
    divided by Lambda, in years. Empty when the tree carries no liabilities.
    """

    topology = tree.topology
    durations = np.array([a.duration if a.fixed_income else 0.0 for a in cfg.assets])
    counts = dict.fromkeys(MISMATCH_BINS, 0)
    total = 0
    band = cfg.delta_bar
    for t in range(topology.horizon):
        for n in topology.stage_nodes(t):
            coef = tree.node(n)
            if coef.Lambda <= 0.0:
                continue
            gap = (float(durations @ solution.x[n, 1:]) - float(coef.lam @ coef.delta_lam)) / coef.Lambda
            if gap <= -band + tol:
                counts["lower_active"] += 1
            elif gap <= 0.0:
                counts["liabilities_longer"] += 1
            elif gap < band - tol:
                counts["assets_longer"] += 1
            else:
                counts["upper_active"] += 1
            total += 1
    if total == 0:
        return pd.DataFrame(columns=["bin", "nodes", "percent"])
    return pd.DataFrame(
        [{"bin": name, "nodes": counts[name], "percent": 100.0 * counts[name] / total} for name in MISMATCH_BINS]
    )


def root_allocation(solution: Solution, cfg: RunConfig) -> pd.DataFrame:
    holdings = solution.x[0]
    total = float(holdings.sum())
    names = ["cash"] + list(cfg.asset_ids)
    return pd.DataFrame(
        {
            "asset": names,
            "holding": holdings,
            "share": holdings / total if total > 0.0 else np.full(holdings.shape, np.nan),
        }
    )


# --------------------------------------------------------------------------
# CDF exports


def _grid(distributions: Iterable[DiscreteDistribution], points: int) -> np.ndarray:
    values = np.concatenate([d.values for d in distributions])
    lo, hi = float(values.min()), float(values.max())
    pad = 0.1 * max(hi - lo, 1e-6)
    return np.union1d(np.linspace(lo - pad, hi + pad, points), values)


def export_cdf(
    solution: Solution,
    tree: ScenarioTree,
    cfg: RunConfig,
    baseline: Optional[Solution] = None,
    nodes: Optional[Sequence[int]] = None,
    points: int = 50,
) -> pd.DataFrame:
    """First and second order CDF curves per stage T-1 node.

    Series are ``portfolio_ssd`` (this solution), ``portfolio_no_ssd`` (the
    baseline, when given) and ``benchmark`` (phi * Lambda), all on one grid
    per node. Returns a long table ``node, series, order, eta, value``.
    """

    topology = tree.topology
    if nodes is None:
        nodes = topology.stage_nodes(topology.horizon - 1)
    if baseline is None:
        baseline = solution.baseline
    rows = []
    for n in nodes:
        probs = topology.conditional_probabilities(n)
        series = {
            "portfolio_ssd": DiscreteDistribution.from_atoms(one_step_values(solution, tree, n), probs),
            "benchmark": benchmark(tree, cfg, n),
        }
        if baseline is not None:
            series["portfolio_no_ssd"] = DiscreteDistribution.from_atoms(one_step_values(baseline, tree, n), probs)
        grid = _grid(series.values(), points)
        for name, dist in series.items():
            for eta in grid:
                rows.append({"node": n, "series": name, "order": 1, "eta": float(eta), "value": cdf(dist, eta)})
                rows.append(
                    {"node": n, "series": name, "order": 2, "eta": float(eta), "value": integrated_cdf(dist, eta)}
                )
    return pd.DataFrame(rows, columns=["node", "series", "order", "eta", "value"])


# --------------------------------------------------------------------------
# Verification


@dataclass
class VerificationReport:
    """Dominance results per non-leaf node plus the optional oracle comparison.

    ``ssd_violations`` covers every non-leaf node. Nodes at ``constrained_stage``
    carry the dominance rows of the model; failures there always fail the
    report. Failures at earlier stages fail it only in ``strict`` mode.
    """

    ssd_violations: Dict[int, float] = field(default_factory=dict)
    stages: Dict[int, int] = field(default_factory=dict)
    constrained_stage: int = 0
    propagation: Optional[PropagationResult] = None
    oracle: Optional[OracleReport] = None
    oracle_skipped: Optional[str] = None
    gap_tol: float = 1e-5
    tol: float = ACTIVE_TOL
    strict: bool = False

    def _failures(self, keep) -> List[int]:
        return sorted(
            n for n, v in self.ssd_violations.items() if v > self.tol and keep(self.stages.get(n, self.constrained_stage))
        )

    @property
    def ssd_failures(self) -> List[int]:
        return self._failures(lambda stage: stage == self.constrained_stage)

    @property
    def earlier_failures(self) -> List[int]:
        return self._failures(lambda stage: stage < self.constrained_stage)

    @property
    def propagation_consistent(self) -> bool:
        """False only when the stage T-1 premise holds and an earlier stage still fails."""

        if self.propagation is None:
            return True
        return not self.propagation.premise or self.propagation.conclusion

    @property
    def passed(self) -> bool:
        if self.ssd_failures:
            return False
        if self.strict and self.earlier_failures:
            return False
        if not self.propagation_consistent:
            return False
        if self.oracle is not None and not self.oracle.agrees(self.gap_tol):
            return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        earlier = self.earlier_failures
        return {
            "passed": self.passed,
            "strict": self.strict,
            "ssd_failures": self.ssd_failures,
            "earlier_failures": earlier,
            "earlier_dominance": not earlier,
            "max_ssd_violation": max(self.ssd_violations.values(), default=0.0),
            "violations_by_stage": {
                str(t): max((v for n, v in self.ssd_violations.items() if self.stages.get(n) == t), default=0.0)
                for t in sorted(set(self.stages.values()))
            },
            "propagation": None
            if self.propagation is None
            else {
                "premise": self.propagation.premise,
                "conclusion": self.propagation.conclusion,
                "consistent": self.propagation_consistent,
                "premise_failures": list(self.propagation.premise_failures),
                "conclusion_failures": list(self.propagation.conclusion_failures),
            },
            "oracle": None if self.oracle is None else self.oracle.to_dict(),
            "oracle_skipped": self.oracle_skipped,
        }


def carried_values(solution: Solution, tree: ScenarioTree) -> np.ndarray:
    """Value at each node of the parent's holdings grown by the node's returns; zero at the root."""

    topology = tree.topology
    values = np.zeros(len(topology))
    for node in topology.nodes:
        if node.ancestor is not None:
            values[node.id] = float((1.0 + tree.node(node.id).r) @ solution.x[node.ancestor])
    return values


def portfolio_processes(solution: Solution, tree: ScenarioTree, cfg: RunConfig) -> tuple:
    """Carried portfolio values and phi * Lambda as sequential processes over the whole tree."""

    y = cfg.phi * np.asarray(tree.Lambda(), dtype=float)
    y[0] = 0.0
    return SequentialProcess(tree.topology, carried_values(solution, tree)), SequentialProcess(tree.topology, y)


def verify_solution(
    solution: Solution,
    tree: ScenarioTree,
    cfg: RunConfig,
    oracle: bool = False,
    tol: float = ACTIVE_TOL,
    strict: bool = False,
) -> VerificationReport:
    """One-step dominance at every non-leaf node, the sequential order on carried values and, optionally, the oracle gap."""

    topology = tree.topology
    report = VerificationReport(
        gap_tol=cfg.solver.oracle_gap_tol,
        tol=tol,
        strict=strict,
        constrained_stage=topology.horizon - 1,
    )
    for node in topology.nodes:
        if not node.children:
            continue
        portfolio = DiscreteDistribution.from_atoms(
            one_step_values(solution, tree, node.id), topology.conditional_probabilities(node.id)
        )
        check = ssd_dominates(portfolio, benchmark(tree, cfg, node.id), tol)
        report.ssd_violations[node.id] = check.violation
        report.stages[node.id] = node.stage
    x, y = portfolio_processes(solution, tree, cfg)
    report.propagation = check_propagation(x, y, tol)

    if oracle:
        if estimate_size(tree, cfg) > cfg.solver.oracle_max_variables:
            report.oracle_skipped = "tree too large for the extensive form"
        else:
            try:
                report.oracle = oracle_compare(tree, cfg, decomposed=solution)
            except ExtensiveSizeError as exc:
                report.oracle_skipped = str(exc)
    if report.ssd_failures:
        LOGGER.warning("Dominance fails at %d stage T-1 nodes", len(report.ssd_failures))
    if report.earlier_failures:
        LOGGER.warning(
            "One-step dominance fails at %d of %d earlier nodes (max violation %.4g)",
            len(report.earlier_failures),
            sum(1 for t in report.stages.values() if t < report.constrained_stage),
            max(report.ssd_violations[n] for n in report.earlier_failures),
        )
    return report


def require_verified(report: VerificationReport) -> None:
    if report.passed:
        return
    reasons = []
    if report.ssd_failures:
        reasons.append(f"dominance fails at nodes {report.ssd_failures}")
    if report.strict and report.earlier_failures:
        reasons.append(f"one-step dominance fails at earlier nodes {report.earlier_failures}")
    if not report.propagation_consistent:
        reasons.append(f"earlier-stage order fails at nodes {list(report.propagation.conclusion_failures)}")
    if report.oracle is not None and not report.oracle.agrees(report.gap_tol):
        reasons.append(f"oracle gap {report.oracle.gap:.3g} above {report.gap_tol:g}")
    raise VerificationError("; ".join(reasons), report)


# --------------------------------------------------------------------------
# Emission


def write_report(
    solution: Solution,
    tree: ScenarioTree,
    cfg: RunConfig,
    directory: Path,
    fmt: str = "csv",
) -> Dict[str, Path]:
    """Write every table to ``directory``; returns the written paths by table name."""

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tables = {
        "stage_statistics": stage_statistics(solution, tree),
        "duration_mismatch": duration_mismatch(solution, tree, cfg),
        "root_allocation": root_allocation(solution, cfg),
        "cdf": export_cdf(solution, tree, cfg),
    }
    head = summary(solution, tree, cfg)
    written: Dict[str, Path] = {}
    if fmt == "json":
        payload = {"summary": head}
        payload.update({name: json.loads(table.to_json(orient="records")) for name, table in tables.items()})
        path = directory / "report.json"
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        written["report"] = path
        return written
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    path = directory / "summary.csv"
    pd.DataFrame([head]).to_csv(path, index=False)
    written["summary"] = path
    for name, table in tables.items():
        path = directory / f"{name}.csv"
        table.to_csv(path, index=False)
        written[name] = path
    LOGGER.info("Report written to %s", directory)
    return written


__all__ = [
    "MISMATCH_BINS",
    "VerificationError",
    "VerificationReport",
    "carried_values",
    "cumulative_profits",
    "duration_mismatch",
    "export_cdf",
    "funding_ratios",
    "one_step_values",
    "portfolio_processes",
    "require_verified",
    "root_allocation",
    "ssd_active_nodes",
    "stage_statistics",
    "summary",
    "verify_solution",
    "write_report",
]
