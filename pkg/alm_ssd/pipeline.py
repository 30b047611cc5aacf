"""Orchestration of generate, solve, verify and report runs on disk."""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from .alm import generate_coefficients
from .config import (
    RunConfig,
    ServiceSettings,
    build_run_config,
    dump_run_config,
    load_run_config,
    parse_run_config,
    with_branching,
    with_parameter,
)
from .decomposer import run as decompose
from .econ import econ_statistics
from .extensive import estimate_size
from .report import VerificationReport, require_verified, summary, verify_solution, write_report
from .solution import Solution, solution_from_json
from .tree import ScenarioTree, build_topology, read_tree, write_tree

LOGGER = logging.getLogger("alm_ssd.pipeline")

TREE_FILE = "tree.txt"
CONFIG_FILE = "config.cfg"
SOLUTION_FILE = "solution.json"
VERIFICATION_FILE = "verification.json"
STAGES = ("generate", "solve", "verify", "report")
COMMANDS = STAGES + ("sweep",)
SWEEP_DIR = "sweep"


@dataclass
class RunResult:
    timestamp: datetime
    duration: float
    output_dir: Path
    summary: Dict[str, Any] = field(default_factory=dict)
    verification: Optional[Dict[str, Any]] = None
    artifacts: Dict[str, str] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def success(self) -> bool:
        return self.error is None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "success": self.success,
            "timestamp": self.timestamp.isoformat(),
            "duration": self.duration,
            "output_dir": str(self.output_dir),
            "summary": self.summary,
            "verification": self.verification,
            "artifacts": self.artifacts,
            "error": self.error,
        }


def generate(cfg: RunConfig, out_dir: Path, seed: Optional[int] = None) -> ScenarioTree:
    """Build the topology, simulate coefficients and write the tree plus economy statistics."""

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    topology = build_topology(cfg.stages, cfg.branching)
    tree, econ, diagnostics = generate_coefficients(topology, cfg, seed)
    write_tree(tree, out_dir / TREE_FILE)
    (out_dir / CONFIG_FILE).write_text(dump_run_config(cfg), encoding="utf-8")
    econ_statistics(econ, topology).to_csv(out_dir / "econ_statistics.csv", index=False)
    (out_dir / "diagnostics.json").write_text(json.dumps(diagnostics.as_dict(), indent=2), encoding="utf-8")
    LOGGER.info("Generated %d nodes into %s (floors: %s)", len(topology), out_dir, diagnostics.as_dict())
    return tree


def solve_tree(
    tree: ScenarioTree,
    cfg: RunConfig,
    threads: int = 1,
    baseline: bool = True,
    engine: Optional[str] = None,
) -> Solution:
    """Decompose ``tree``; with ``baseline`` and phi > 0 also solve the phi = 0 problem."""

    started = time.perf_counter()
    solution = decompose(tree, cfg, engine=engine, threads=threads)
    solution.config_text = dump_run_config(cfg)
    if baseline and cfg.phi > 0.0:
        reference = decompose(tree, replace(cfg, phi=0.0), engine=engine, threads=threads)
        solution.baseline = reference
    LOGGER.info(
        "Solved %s: status=%s objective=%.9g k0=%.6g in %.2fs",
        cfg.name,
        solution.status,
        solution.objective,
        solution.k0,
        time.perf_counter() - started,
    )
    return solution


def write_solution(solution: Solution, path: Path) -> None:
    Path(path).write_text(solution.to_json(pretty=True), encoding="utf-8")


def read_solution(path: Path) -> Solution:
    return solution_from_json(Path(path).read_text(encoding="utf-8"))


def solution_config(solution: Solution, fallback: Optional[RunConfig] = None) -> RunConfig:
    """The configuration a solution was produced with."""

    if solution.config_text:
        return build_run_config(parse_run_config(solution.config_text))
    if fallback is None:
        raise ValueError("solution carries no configuration; pass one explicitly")
    return fallback


def verify(
    solution: Solution,
    tree: ScenarioTree,
    cfg: RunConfig,
    out_dir: Optional[Path] = None,
    oracle: Optional[bool] = None,
    strict: bool = False,
) -> VerificationReport:
    """Run the dominance checks; ``oracle=None`` compares against the extensive form when it fits."""

    if oracle is None:
        oracle = estimate_size(tree, cfg) <= cfg.solver.oracle_max_variables
    report = verify_solution(solution, tree, cfg, oracle=oracle, strict=strict)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / VERIFICATION_FILE).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    return report


def run_pipeline(
    cfg: RunConfig,
    out_dir: Path,
    commands: Sequence[str] = STAGES,
    threads: int = 1,
    oracle: Optional[bool] = None,
    baseline: bool = True,
    report_format: str = "csv",
    strict: bool = False,
    sweep_parameter: Optional[str] = None,
    sweep_values: Optional[Sequence[float]] = None,
) -> RunResult:
    """Chain the requested commands in one output directory.

    ``sweep`` runs the staged pipeline once per value of ``sweep_parameter``
    under ``out_dir/sweep``, after the other commands.

    Raises:
        ConfigError: before any work when ``cfg`` is invalid.
        ValueError: unknown commands, or ``sweep`` without a parameter and values.
        InfeasibleProblemError: when the root becomes infeasible.
        VerificationError: after all files are written, when a check fails.
    """

    cfg = build_run_config(cfg)
    unknown = [c for c in commands if c not in COMMANDS]
    if unknown:
        raise ValueError(f"unknown pipeline commands {unknown}")
    if "sweep" in commands and (sweep_parameter is None or not sweep_values):
        raise ValueError("the sweep command needs a parameter and at least one value")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result = RunResult(timestamp=datetime.now(timezone.utc), duration=0.0, output_dir=out_dir)

    tree: Optional[ScenarioTree] = None
    solution: Optional[Solution] = None
    verification: Optional[VerificationReport] = None
    if "generate" in commands:
        tree = generate(cfg, out_dir)
        result.artifacts["tree"] = str(out_dir / TREE_FILE)
    if tree is None and any(c in commands for c in ("solve", "verify", "report")):
        tree = read_tree(out_dir / TREE_FILE)
    if "solve" in commands:
        solution = solve_tree(tree, cfg, threads=threads, baseline=baseline)
        solution.tree_path = str(out_dir / TREE_FILE)
        write_solution(solution, out_dir / SOLUTION_FILE)
        result.artifacts["solution"] = str(out_dir / SOLUTION_FILE)
    if solution is None and ("verify" in commands or "report" in commands):
        solution = read_solution(out_dir / SOLUTION_FILE)
    if "verify" in commands:
        assert solution is not None
        verification = verify(solution, tree, cfg, out_dir, oracle=oracle, strict=strict)
        result.verification = verification.to_dict()
        result.artifacts["verification"] = str(out_dir / VERIFICATION_FILE)
    if "report" in commands:
        assert solution is not None
        written = write_report(solution, tree, cfg, out_dir / "report", fmt=report_format)
        result.artifacts.update({name: str(path) for name, path in written.items()})
    if solution is not None:
        result.summary = summary(solution, tree, cfg)
    if "sweep" in commands:
        sweep(cfg, sweep_parameter, sweep_values, out_dir / SWEEP_DIR, threads=threads)
        result.artifacts["sweep"] = str(out_dir / SWEEP_DIR / "sweep.csv")
    result.duration = time.perf_counter() - started
    (out_dir / "run.json").write_text(json.dumps(result.to_dict(), indent=2, default=str), encoding="utf-8")
    if verification is not None:
        require_verified(verification)
    return result


def _value_label(value: float) -> str:
    return f"{value:g}".replace("-", "m").replace(".", "p")


def sweep(
    cfg: RunConfig,
    parameter: str,
    values: Sequence[float],
    out_dir: Path,
    threads: int = 1,
) -> pd.DataFrame:
    """One pipeline run per value of ``parameter``; returns and writes the summary table."""

    configs = [with_parameter(cfg, parameter, value) for value in values]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(item) -> Dict[str, Any]:
        value, variant = item
        result = run_pipeline(
            variant,
            out_dir / f"{parameter}_{_value_label(value)}",
            commands=("generate", "solve", "report"),
            baseline=False,
        )
        return {"parameter": parameter, "value": value, **result.summary}

    items = list(zip(values, configs))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, items))
    else:
        rows = [work(item) for item in items]
    table = pd.DataFrame(rows)
    columns = ["parameter", "value", "k0", "fr0", "fr_T_mean", "objective", "iterations", "active_ssd_pct", "status"]
    table = table[[c for c in columns if c in table.columns]]
    table.to_csv(out_dir / "sweep.csv", index=False)
    LOGGER.info("Sweep over %s finished with %d runs", parameter, len(rows))
    return table


class PipelineService:
    """Keeps the latest run for the HTTP surface."""

    def __init__(self, settings: ServiceSettings) -> None:
        self.settings = settings
        self._lock = threading.Lock()
        self._last: Optional[RunResult] = None
        self._counter = 0

    @property
    def last_result(self) -> Optional[RunResult]:
        return self._last

    def run(
        self,
        config_name: str,
        seed: Optional[int] = None,
        phi: Optional[float] = None,
        branching: Optional[List[int]] = None,
    ) -> RunResult:
        cfg = build_run_config(load_run_config(config_name))
        if seed is not None:
            cfg = build_run_config(replace(cfg, seed=int(seed)))
        if phi is not None:
            cfg = with_parameter(cfg, "phi", phi)
        if branching is not None:
            cfg = with_branching(cfg, branching)
        with self._lock:
            self._counter += 1
            stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
            out_dir = self.settings.output_dir / f"{cfg.name}-{stamp}-{self._counter}"
        result = run_pipeline(
            cfg,
            out_dir,
            commands=("generate", "solve", "report"),
            threads=self.settings.threads,
            baseline=False,
        )
        with self._lock:
            self._last = result
        return result


__all__ = [
    "COMMANDS",
    "PipelineService",
    "RunResult",
    "STAGES",
    "generate",
    "read_solution",
    "run_pipeline",
    "solution_config",
    "solve_tree",
    "sweep",
    "verify",
    "write_solution",
]
