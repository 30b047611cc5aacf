"""Command line entry points for the ALM dominance-constrained planner."""

from __future__ import annotations

import argparse
import json
import logging
import os
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import (
    SWEEP_PARAMETERS,
    ConfigError,
    build_run_config,
    build_settings,
    configure_logging,
    load_environment,
    load_run_config,
)
from .decomposer import InfeasibleProblemError
from .pipeline import (
    SOLUTION_FILE,
    generate,
    read_solution,
    run_pipeline,
    solution_config,
    solve_tree,
    sweep,
    verify,
    write_solution,
)
from .report import VerificationError, require_verified, summary, write_report
from .tree import read_tree

LOGGER = logging.getLogger("alm_ssd.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFICATION = 4


def _print(payload: Dict[str, Any], pretty: bool) -> None:
    print(json.dumps(payload, indent=2 if pretty else None, default=str))


def _config(args: argparse.Namespace):
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return build_run_config(cfg)


def _generate_command(args: argparse.Namespace) -> int:
    cfg = _config(args)
    tree = generate(cfg, Path(args.out))
    _print({"nodes": len(tree.topology), "out": args.out, "seed": cfg.seed}, args.pretty)
    return EXIT_OK


def _solve_command(args: argparse.Namespace) -> int:
    cfg = _config(args)
    tree = read_tree(args.tree)
    threads = args.threads or build_settings().threads
    solution = solve_tree(tree, cfg, threads=threads, baseline=not args.no_baseline, engine=args.engine)
    solution.tree_path = str(args.tree)
    out = Path(args.out) if args.out else Path(args.tree).parent / SOLUTION_FILE
    write_solution(solution, out)
    _print(
        {
            "status": solution.status,
            "objective": solution.objective,
            "k0": solution.k0,
            "iterations": solution.iterations,
            "counts": solution.counts,
            "solution": str(out),
        },
        args.pretty,
    )
    return EXIT_OK if solution.optimal else EXIT_FAILURE


def _verify_command(args: argparse.Namespace) -> int:
    solution = read_solution(args.solution)
    cfg = build_run_config(load_run_config(args.config)) if args.config else solution_config(solution)
    tree = read_tree(args.tree)
    report = verify(solution, tree, cfg, Path(args.solution).parent, oracle=args.oracle or None, strict=args.strict)
    _print(report.to_dict(), args.pretty)
    require_verified(report)
    return EXIT_OK


def _report_command(args: argparse.Namespace) -> int:
    solution = read_solution(args.solution)
    cfg = build_run_config(load_run_config(args.config)) if args.config else solution_config(solution)
    tree_path = args.tree or solution.tree_path
    if not tree_path:
        raise ConfigError(["no tree given and the solution records none"])
    tree = read_tree(tree_path)
    out = Path(args.out) if args.out else Path(args.solution).parent / "report"
    written = write_report(solution, tree, cfg, out, fmt=args.format)
    _print({"summary": summary(solution, tree, cfg), "files": {k: str(v) for k, v in written.items()}}, args.pretty)
    return EXIT_OK


def _parse_values(raw: str) -> List[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError([f"sweep values must be numbers, got {raw!r}"]) from None


def _sweep_command(args: argparse.Namespace) -> int:
    cfg = _config(args)
    settings = build_settings()
    threads = args.threads or settings.threads
    out = Path(args.out) if args.out else settings.output_dir / f"sweep-{args.param}"
    table = sweep(cfg, args.param, _parse_values(args.values), out, threads=threads)
    _print({"rows": json.loads(table.to_json(orient="records")), "out": str(out)}, args.pretty)
    return EXIT_OK


def _run_command(args: argparse.Namespace) -> int:
    cfg = _config(args)
    settings = build_settings()
    out = Path(args.out) if args.out else settings.output_dir / cfg.name
    result = run_pipeline(
        cfg,
        out,
        threads=args.threads or settings.threads,
        oracle=True if args.oracle else None,
        report_format=args.format,
        strict=args.strict,
    )
    _print(result.to_dict(), args.pretty)
    return EXIT_OK


def _serve_command(args: argparse.Namespace) -> int:
    try:
        import uvicorn
    except ImportError:  # pragma: no cover - user environment issue
        raise SystemExit("uvicorn is required for the 'serve' command. Install fastapi extras.")

    uvicorn.run(
        "alm_ssd.app:create_app",
        factory=True,
        host=args.host,
        port=args.port,
        reload=args.reload,
        log_level=args.uvicorn_log_level.lower(),
    )
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--env-file", help="Path to .env file overriding defaults")
    parser.add_argument("--log-level", help="Logging level (defaults to ALM_LOG_LEVEL or INFO)")
    parser.add_argument("--pretty", action="store_true", help="Pretty-print JSON output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Asset-liability planning with dominance constraints")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("generate", help="Simulate a scenario tree")
    gen.add_argument("--config", default="base_small", help="Shipped config name or path")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.add_argument("--seed", type=int, help="Override the config seed")
    _add_common(gen)
    gen.set_defaults(func=_generate_command)

    solve = subparsers.add_parser("solve", help="Solve a generated tree by decomposition")
    solve.add_argument("--tree", required=True, help="Tree file written by 'generate'")
    solve.add_argument("--config", default="base_small", help="Shipped config name or path")
    solve.add_argument("--out", help="Solution file (defaults next to the tree)")
    solve.add_argument("--engine", choices=["simplex", "highs"], help="LP engine override")
    solve.add_argument("--threads", type=int, help="Worker threads per stage (defaults to ALM_THREADS)")
    solve.add_argument("--no-baseline", action="store_true", help="Skip the phi = 0 reference solve")
    _add_common(solve)
    solve.set_defaults(func=_solve_command)

    ver = subparsers.add_parser("verify", help="Check dominance of a solved policy")
    ver.add_argument("--tree", required=True)
    ver.add_argument("--solution", required=True)
    ver.add_argument("--config", help="Config override (defaults to the one stored in the solution)")
    ver.add_argument("--oracle", action="store_true", help="Compare against the extensive form")
    ver.add_argument("--strict", action="store_true", help="Also fail on one-step dominance failures before stage T-1")
    _add_common(ver)
    ver.set_defaults(func=_verify_command)

    rep = subparsers.add_parser("report", help="Write result tables and CDF exports")
    rep.add_argument("--solution", required=True)
    rep.add_argument("--tree", help="Tree file (defaults to the one recorded in the solution)")
    rep.add_argument("--config", help="Config override")
    rep.add_argument("--out", help="Report directory")
    rep.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_common(rep)
    rep.set_defaults(func=_report_command)

    swp = subparsers.add_parser("sweep", help="Run the pipeline over values of one parameter")
    swp.add_argument("--config", default="base_small")
    swp.add_argument("--param", required=True, choices=list(SWEEP_PARAMETERS))
    swp.add_argument("--values", required=True, help="Comma separated values")
    swp.add_argument("--out", help="Output directory")
    swp.add_argument("--threads", type=int, help="Parallel runs (defaults to ALM_THREADS)")
    _add_common(swp)
    swp.set_defaults(func=_sweep_command)

    run = subparsers.add_parser("run", help="generate, solve, verify and report in one directory")
    run.add_argument("--config", default="base_small")
    run.add_argument("--out", help="Output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--oracle", action="store_true", help="Force the extensive-form comparison")
    run.add_argument("--strict", action="store_true", help="Also fail on one-step dominance failures before stage T-1")
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_common(run)
    run.set_defaults(func=_run_command)

    serve = subparsers.add_parser("serve", help="Run the FastAPI service with uvicorn")
    serve.add_argument("--host", default="0.0.0.0", help="Bind address for uvicorn")
    serve.add_argument("--port", type=int, default=int(os.environ.get("PORT", "8000")))
    serve.add_argument("--reload", action="store_true", help="Enable auto-reload (development only)")
    serve.add_argument(
        "--uvicorn-log-level",
        default="info",
        choices=["critical", "error", "warning", "info", "debug", "trace"],
        help="Uvicorn log level",
    )
    _add_common(serve)
    serve.set_defaults(func=_serve_command)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    load_environment(args.env_file)
    try:
        settings = build_settings()
        configure_logging(args.log_level or settings.log_level)
        return args.func(args)
    except ConfigError as exc:
        LOGGER.error("Invalid configuration: %s", exc)
        return EXIT_CONFIG
    except InfeasibleProblemError as exc:
        LOGGER.error("Problem infeasible: %s (%d feasibility cuts)", exc, len(exc.trail))
        return EXIT_INFEASIBLE
    except VerificationError as exc:
        LOGGER.error("Verification failed: %s", exc)
        return EXIT_VERIFICATION
    except Exception as exc:  # pragma: no cover - CLI surface
        LOGGER.exception("Command failed: %s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
