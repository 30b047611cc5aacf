"""Configuration helpers for the ALM dominance solver.

Two layers live here: :class:`RunConfig`, the model description read from a
sectioned ``KEY=VALUE`` file, and :class:`ServiceSettings`, the process-level
knobs (log level, threads, output directory) read from the environment.
"""

from __future__ import annotations

import configparser
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

CONFIG_DIR = Path(__file__).resolve().parent / "configs"
DEFAULT_ENV_PATH = Path(__file__).resolve().parent / "alm.env"

ASSET_FAMILIES = ("treasury", "corporate", "equity", "currency")
FIXED_INCOME = ("treasury", "corporate")
ENGINES = ("simplex", "highs")

LOGGER = logging.getLogger("alm_ssd.config")


class ConfigError(RuntimeError):
    """Raised when a run configuration cannot be used.

    ``problems`` lists every violated rule so callers can report them at once.
    """

    def __init__(self, problems: Sequence[str]) -> None:
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


@dataclass(frozen=True)
class AssetSpec:
    """One investable asset; cash (index 0) is implicit and not listed."""

    id: str
    family: str
    duration: float = 0.0
    coefficients: Tuple[float, ...] = ()
    residual_std: float = 0.0
    theta_min: float = 0.0
    theta_max: float = 1.0
    initial_holding: float = 0.0

    @property
    def fixed_income(self) -> bool:
        return self.family in FIXED_INCOME


@dataclass(frozen=True)
class LiabilitySpec:
    """Outflow process of one liability class and its paired revenue line."""

    id: str
    initial_outflow: float
    mu_xi: float
    sigma_xi: float
    revenue_initial: float = 0.0
    mu_rho: float = 0.0
    sigma_rho: float = 0.0


@dataclass(frozen=True)
class EconCoefficients:
    factor_cov: Tuple[Tuple[float, ...], ...] = ((0.0,) * 3,) * 3
    decay: Tuple[float, float, float, float] = (5.0, 0.0, 0.0, 0.0)
    decay_std: float = 0.0
    inflation_speed: float = 0.0
    inflation_vol: float = 0.0
    inflation_target: float = 0.02
    spread: Tuple[float, float, float] = (0.0, 1.0, 0.0)
    spread_std: float = 0.0
    spread_scale: float = 1.0
    gamma_floor: float = 0.5
    residual_correlation: Optional[Tuple[Tuple[float, ...], ...]] = None


@dataclass(frozen=True)
class InitialEconState:
    b1: float = 0.02
    b2: float = 0.0
    b3: float = 0.0
    gamma: float = 5.0
    pi: float = 0.02
    spread: float = 0.0


@dataclass(frozen=True)
class SolverSettings:
    engine: str = "simplex"
    oracle_engine: str = "highs"
    max_iterations: int = 200
    cut_tol: float = 1e-7
    ssd_tol: float = 1e-8
    risk_tol: float = 1e-9
    event_rounds_per_child: int = 50
    oracle_max_variables: int = 5000
    oracle_gap_tol: float = 1e-5


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to generate a tree and solve the ALM program.

    Currency figures are in millions, rates are fractions, durations and
    stage dates are in years.
    """

    name: str = "custom"
    stages: Tuple[float, ...] = (0.0, 1.0)
    branching: Tuple[int, ...] = (2,)
    seed: int = 0
    assets: Tuple[AssetSpec, ...] = ()
    liabilities: Tuple[LiabilitySpec, ...] = ()
    econ: EconCoefficients = field(default_factory=EconCoefficients)
    initial: InitialEconState = field(default_factory=InitialEconState)
    alpha: float = 0.5
    beta: float = 1.0
    phi: float = 1.0
    delta_bar: float = 0.5
    q: float = 0.4
    phi_buy: float = 0.001
    phi_sell: float = 0.001
    t_lambda: int = 5
    first_flow_offset: int = 0
    kappa: float = 0.1
    big_m: float = 1e6
    w_floor: float = -1e6
    small_cap_asset: Optional[str] = None
    solver: SolverSettings = field(default_factory=SolverSettings)

    @property
    def asset_ids(self) -> Tuple[str, ...]:
        return tuple(asset.id for asset in self.assets)

    @property
    def liability_ids(self) -> Tuple[str, ...]:
        return tuple(liability.id for liability in self.liabilities)

    def asset_index(self, asset_id: str) -> int:
        """Position of ``asset_id`` in the coefficient vectors (cash is 0)."""

        return self.asset_ids.index(asset_id) + 1


@dataclass
class ServiceSettings:
    """Process-level settings for the CLI and HTTP surface."""

    log_level: str
    threads: int
    output_dir: Path


def load_env_file(path: Path) -> None:
    """Populate :mod:`os.environ` with KEY=VALUE pairs from ``path``."""

    if not path.exists():
        return
    for raw_line in path.read_text(encoding="utf-8").splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.lower().startswith("export "):
            line = line[7:].strip()
        if "=" not in line:
            continue
        key, value = line.split("=", 1)
        os.environ.setdefault(key.strip(), value.strip().strip("'\""))


def load_environment(explicit: Optional[str] = None) -> Optional[Path]:
    """Load the first env file found among ``explicit`` (or ALM_ENV_FILE), ./.env and the packaged default.

    Returns the file loaded, if any.
    """

    env_file = explicit or os.environ.get("ALM_ENV_FILE")
    candidates = []
    if env_file:
        candidates.append(Path(env_file))
    candidates.append(Path.cwd() / ".env")
    candidates.append(DEFAULT_ENV_PATH)

    seen: set[Path] = set()
    for candidate in candidates:
        resolved = candidate.resolve()
        if resolved in seen:
            continue
        seen.add(resolved)
        if resolved.exists():
            load_env_file(resolved)
            return resolved
    return None


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        return default


def build_settings() -> ServiceSettings:
    """Construct :class:`ServiceSettings` from environment variables."""

    threads = _env_int("ALM_THREADS", 1)
    if threads < 1:
        raise ConfigError(["ALM_THREADS must be at least 1"])
    return ServiceSettings(
        log_level=os.environ.get("ALM_LOG_LEVEL", "INFO"),
        threads=threads,
        output_dir=Path(os.environ.get("ALM_OUTPUT_DIR", "runs")),
    )


def configure_logging(level_name: str) -> None:
    level = getattr(logging, level_name.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


# --------------------------------------------------------------------------
# Validation


def validate_config(cfg: RunConfig) -> List[str]:
    """Return every rule ``cfg`` violates; an empty list means usable."""

    problems: List[str] = []
    if len(cfg.stages) < 2:
        problems.append("tree.stages needs at least two dates")
    elif any(b <= a for a, b in zip(cfg.stages, cfg.stages[1:])):
        problems.append("tree.stages must be strictly increasing")
    elif cfg.stages[0] != 0.0:
        problems.append("tree.stages must start at 0")
    if len(cfg.branching) != max(len(cfg.stages) - 1, 0):
        problems.append("tree.branching needs one count per stage transition")
    if any(count < 1 for count in cfg.branching):
        problems.append("tree.branching counts must be at least 1")
    for gap in zip(cfg.stages, cfg.stages[1:]):
        months = (gap[1] - gap[0]) * 12.0
        if abs(months - round(months)) > 1e-9:
            problems.append("stage dates must fall on whole months")
            break

    if not 0.0 <= cfg.alpha <= 1.0:
        problems.append("model.alpha must lie in [0, 1]")
    if cfg.beta < 0.0:
        problems.append("model.beta must be nonnegative")
    if cfg.phi < 0.0:
        problems.append("model.phi must be nonnegative")
    if not 0.0 <= cfg.q <= 1.0:
        problems.append("model.q must lie in [0, 1]")
    if cfg.delta_bar < 0.0:
        problems.append("model.delta_bar must be nonnegative")
    if cfg.phi_buy < 0.0 or cfg.phi_sell < 0.0 or cfg.phi_sell >= 1.0:
        problems.append("model transaction costs must satisfy phi_buy >= 0 and 0 <= phi_sell < 1")
    if not 0.0 <= cfg.kappa <= 1.0:
        problems.append("model.kappa must lie in [0, 1]")
    if cfg.t_lambda < 1:
        problems.append("model.t_lambda must be at least 1 year")
    if cfg.first_flow_offset not in (0, 1):
        problems.append("model.first_flow_offset must be 0 or 1")
    if cfg.big_m <= 0.0:
        problems.append("model.big_m must be positive")

    seen = set()
    for asset in cfg.assets:
        label = f"asset.{asset.id}"
        if asset.id in seen:
            problems.append(f"{label} is defined twice")
        seen.add(asset.id)
        if asset.family not in ASSET_FAMILIES:
            problems.append(f"{label}.family must be one of {', '.join(ASSET_FAMILIES)}")
        if asset.fixed_income and asset.duration <= 0.0:
            problems.append(f"{label}.duration must be positive for fixed income")
        if not 0.0 <= asset.theta_min <= asset.theta_max <= 1.0:
            problems.append(f"{label} needs 0 <= theta_min <= theta_max <= 1")
        if asset.residual_std < 0.0:
            problems.append(f"{label}.residual_std must be nonnegative")
        if asset.initial_holding < 0.0:
            problems.append(f"{label}.initial_holding must be nonnegative")
        if len(asset.coefficients) > 5:
            problems.append(f"{label}.coefficients takes at most five values")
    if any(asset.family == "corporate" for asset in cfg.assets):
        if cfg.small_cap_asset is None:
            problems.append("model.small_cap_asset is required when corporate assets are present")
        elif cfg.small_cap_asset not in seen:
            problems.append(f"model.small_cap_asset {cfg.small_cap_asset!r} is not a configured asset")
        else:
            small_cap = next(a for a in cfg.assets if a.id == cfg.small_cap_asset)
            if small_cap.family != "equity":
                problems.append("model.small_cap_asset must be an equity asset")
    if cfg.assets and sum(asset.theta_min for asset in cfg.assets) > 1.0 + 1e-12:
        problems.append("asset theta_min values sum above 1")

    for liability in cfg.liabilities:
        label = f"liability.{liability.id}"
        if liability.sigma_xi < 0.0 or liability.sigma_rho < 0.0:
            problems.append(f"{label} volatilities must be nonnegative")
        if liability.initial_outflow < 0.0 or liability.revenue_initial < 0.0:
            problems.append(f"{label} initial levels must be nonnegative")

    econ = cfg.econ
    cov = econ.factor_cov
    if len(cov) != 3 or any(len(row) != 3 for row in cov):
        problems.append("econ.factor_cov must hold 9 values")
    elif any(abs(cov[i][j] - cov[j][i]) > 1e-12 for i in range(3) for j in range(3)):
        problems.append("econ.factor_cov must be symmetric")
    if econ.residual_correlation is not None:
        corr = econ.residual_correlation
        if len(corr) != 3 or any(len(row) != 3 for row in corr):
            problems.append("econ.residual_correlation must hold 9 values")
    if econ.inflation_vol < 0.0 or econ.spread_std < 0.0 or econ.decay_std < 0.0:
        problems.append("econ volatilities must be nonnegative")
    if econ.spread_scale <= 0.0:
        problems.append("econ.spread_scale must be positive")
    if econ.gamma_floor <= 0.0:
        problems.append("econ.gamma_floor must be positive")
    if cfg.initial.gamma <= 0.0:
        problems.append("initial.gamma must be positive")
    if cfg.initial.pi < 0.0:
        problems.append("initial.pi must be nonnegative")

    solver = cfg.solver
    if solver.engine not in ENGINES or solver.oracle_engine not in ENGINES:
        problems.append(f"solver engines must be one of {', '.join(ENGINES)}")
    if solver.max_iterations < 1:
        problems.append("solver.max_iterations must be at least 1")
    if solver.event_rounds_per_child < 1:
        problems.append("solver.event_rounds_per_child must be at least 1")
    return problems


def build_run_config(cfg: RunConfig) -> RunConfig:
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


# --------------------------------------------------------------------------
# File format


def _floats(raw: str) -> Tuple[float, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(token) for token in raw.split(","))


def _matrix(raw: str, label: str, problems: List[str]) -> Optional[Tuple[Tuple[float, ...], ...]]:
    values = _floats(raw)
    if len(values) != 9:
        problems.append(f"{label} must hold 9 comma-separated values")
        return None
    return tuple(tuple(values[3 * i: 3 * i + 3]) for i in range(3))


def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_seq(values: Sequence[float]) -> str:
    return ",".join(_fmt(v) for v in values)


def parse_run_config(text: str, name: str = "custom") -> RunConfig:
    """Parse the sectioned text format into a validated :class:`RunConfig`."""

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unreadable config: {exc}"]) from exc

    problems: List[str] = []

    def section(title: str) -> Dict[str, str]:
        return dict(parser.items(title)) if parser.has_section(title) else {}

    def number(values: Dict[str, str], key: str, default: float, label: str) -> float:
        if key not in values:
            return default
        try:
            return float(values[key])
        except ValueError:
            problems.append(f"{label}.{key} must be a number")
            return default

    def integer(values: Dict[str, str], key: str, default: int, label: str) -> int:
        if key not in values:
            return default
        try:
            return int(values[key])
        except ValueError:
            problems.append(f"{label}.{key} must be an integer")
            return default

    tree = section("tree")
    try:
        stages = _floats(tree.get("stages", "0,1"))
        branching = tuple(int(v) for v in tree.get("branching", "2").split(",") if v.strip())
    except ValueError:
        problems.append("tree.stages and tree.branching must be comma-separated numbers")
        stages, branching = (0.0, 1.0), (2,)

    model = section("model")
    defaults = RunConfig()
    econ_raw = section("econ")
    econ_defaults = EconCoefficients()
    factor_cov = econ_defaults.factor_cov
    if "factor_cov" in econ_raw:
        factor_cov = _matrix(econ_raw["factor_cov"], "econ.factor_cov", problems) or factor_cov
    correlation = None
    if econ_raw.get("residual_correlation", "").strip():
        correlation = _matrix(econ_raw["residual_correlation"], "econ.residual_correlation", problems)
    decay = _floats(econ_raw.get("decay", "")) or econ_defaults.decay
    spread = _floats(econ_raw.get("spread", "")) or econ_defaults.spread
    if len(decay) != 4:
        problems.append("econ.decay must hold 4 values")
        decay = econ_defaults.decay
    if len(spread) != 3:
        problems.append("econ.spread must hold 3 values")
        spread = econ_defaults.spread
    econ = EconCoefficients(
        factor_cov=factor_cov,
        decay=tuple(decay),  # type: ignore[arg-type]
        decay_std=number(econ_raw, "decay_std", econ_defaults.decay_std, "econ"),
        inflation_speed=number(econ_raw, "inflation_speed", econ_defaults.inflation_speed, "econ"),
        inflation_vol=number(econ_raw, "inflation_vol", econ_defaults.inflation_vol, "econ"),
        inflation_target=number(econ_raw, "inflation_target", econ_defaults.inflation_target, "econ"),
        spread=tuple(spread),  # type: ignore[arg-type]
        spread_std=number(econ_raw, "spread_std", econ_defaults.spread_std, "econ"),
        spread_scale=number(econ_raw, "spread_scale", econ_defaults.spread_scale, "econ"),
        gamma_floor=number(econ_raw, "gamma_floor", econ_defaults.gamma_floor, "econ"),
        residual_correlation=correlation,
    )

    init_raw = section("initial")
    init_defaults = InitialEconState()
    initial = InitialEconState(
        **{
            key: number(init_raw, key, getattr(init_defaults, key), "initial")
            for key in ("b1", "b2", "b3", "gamma", "pi", "spread")
        }
    )

    assets: List[AssetSpec] = []
    liabilities: List[LiabilitySpec] = []
    for title in parser.sections():
        if title.startswith("asset."):
            values = dict(parser.items(title))
            try:
                coefficients = _floats(values.get("coefficients", ""))
            except ValueError:
                problems.append(f"{title}.coefficients must be comma-separated numbers")
                coefficients = ()
            assets.append(
                AssetSpec(
                    id=title[len("asset."):],
                    family=values.get("family", "").strip(),
                    duration=number(values, "duration", 0.0, title),
                    coefficients=coefficients,
                    residual_std=number(values, "residual_std", 0.0, title),
                    theta_min=number(values, "theta_min", 0.0, title),
                    theta_max=number(values, "theta_max", 1.0, title),
                    initial_holding=number(values, "initial_holding", 0.0, title),
                )
            )
        elif title.startswith("liability."):
            values = dict(parser.items(title))
            liabilities.append(
                LiabilitySpec(
                    id=title[len("liability."):],
                    initial_outflow=number(values, "initial_outflow", 0.0, title),
                    mu_xi=number(values, "mu_xi", 0.0, title),
                    sigma_xi=number(values, "sigma_xi", 0.0, title),
                    revenue_initial=number(values, "revenue_initial", 0.0, title),
                    mu_rho=number(values, "mu_rho", 0.0, title),
                    sigma_rho=number(values, "sigma_rho", 0.0, title),
                )
            )

    solver_raw = section("solver")
    solver_defaults = SolverSettings()
    solver = SolverSettings(
        engine=solver_raw.get("engine", solver_defaults.engine).strip(),
        oracle_engine=solver_raw.get("oracle_engine", solver_defaults.oracle_engine).strip(),
        max_iterations=integer(solver_raw, "max_iterations", solver_defaults.max_iterations, "solver"),
        cut_tol=number(solver_raw, "cut_tol", solver_defaults.cut_tol, "solver"),
        ssd_tol=number(solver_raw, "ssd_tol", solver_defaults.ssd_tol, "solver"),
        risk_tol=number(solver_raw, "risk_tol", solver_defaults.risk_tol, "solver"),
        event_rounds_per_child=integer(
            solver_raw, "event_rounds_per_child", solver_defaults.event_rounds_per_child, "solver"
        ),
        oracle_max_variables=integer(
            solver_raw, "oracle_max_variables", solver_defaults.oracle_max_variables, "solver"
        ),
        oracle_gap_tol=number(solver_raw, "oracle_gap_tol", solver_defaults.oracle_gap_tol, "solver"),
    )

    small_cap = model.get("small_cap_asset", "").strip() or None
    cfg = RunConfig(
        name=model.get("name", name).strip() or name,
        stages=stages,
        branching=branching,
        seed=integer(tree, "seed", defaults.seed, "tree"),
        assets=tuple(assets),
        liabilities=tuple(liabilities),
        econ=econ,
        initial=initial,
        alpha=number(model, "alpha", defaults.alpha, "model"),
        beta=number(model, "beta", defaults.beta, "model"),
        phi=number(model, "phi", defaults.phi, "model"),
        delta_bar=number(model, "delta_bar", defaults.delta_bar, "model"),
        q=number(model, "q", defaults.q, "model"),
        phi_buy=number(model, "phi_buy", defaults.phi_buy, "model"),
        phi_sell=number(model, "phi_sell", defaults.phi_sell, "model"),
        t_lambda=integer(model, "t_lambda", defaults.t_lambda, "model"),
        first_flow_offset=integer(model, "first_flow_offset", defaults.first_flow_offset, "model"),
        kappa=number(model, "kappa", defaults.kappa, "model"),
        big_m=number(model, "big_m", defaults.big_m, "model"),
        w_floor=number(model, "w_floor", defaults.w_floor, "model"),
        small_cap_asset=small_cap,
        solver=solver,
    )
    problems.extend(validate_config(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def dump_run_config(cfg: RunConfig) -> str:
    """Render ``cfg`` in the text format; ``parse_run_config`` inverts it."""

    lines = [
        "# ALM run configuration",
        "# currency in millions, rates as fractions, durations and dates in years",
        "",
        "[tree]",
        f"stages = {_fmt_seq(cfg.stages)}",
        f"branching = {','.join(str(b) for b in cfg.branching)}",
        f"seed = {cfg.seed}",
        "",
        "[model]",
        f"name = {cfg.name}",
    ]
    for key in (
        "alpha", "beta", "phi", "delta_bar", "q", "phi_buy", "phi_sell",
        "kappa", "big_m", "w_floor",
    ):
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
    lines.append(f"t_lambda = {cfg.t_lambda}")
    lines.append(f"first_flow_offset = {cfg.first_flow_offset}")
    lines.append(f"small_cap_asset = {cfg.small_cap_asset or ''}")

    econ = cfg.econ
    lines += [
        "",
        "[econ]",
        f"factor_cov = {_fmt_seq([v for row in econ.factor_cov for v in row])}",
        f"decay = {_fmt_seq(econ.decay)}",
        f"decay_std = {_fmt(econ.decay_std)}",
        f"inflation_speed = {_fmt(econ.inflation_speed)}",
        f"inflation_vol = {_fmt(econ.inflation_vol)}",
        f"inflation_target = {_fmt(econ.inflation_target)}",
        f"spread = {_fmt_seq(econ.spread)}",
        f"spread_std = {_fmt(econ.spread_std)}",
        f"spread_scale = {_fmt(econ.spread_scale)}",
        f"gamma_floor = {_fmt(econ.gamma_floor)}",
    ]
    if econ.residual_correlation is not None:
        flat = [v for row in econ.residual_correlation for v in row]
        lines.append(f"residual_correlation = {_fmt_seq(flat)}")

    lines += ["", "[initial]"]
    for key in ("b1", "b2", "b3", "gamma", "pi", "spread"):
        lines.append(f"{key} = {_fmt(getattr(cfg.initial, key))}")

    for asset in cfg.assets:
        lines += [
            "",
            f"[asset.{asset.id}]",
            f"family = {asset.family}",
            f"duration = {_fmt(asset.duration)}",
            f"coefficients = {_fmt_seq(asset.coefficients)}",
            f"residual_std = {_fmt(asset.residual_std)}",
            f"theta_min = {_fmt(asset.theta_min)}",
            f"theta_max = {_fmt(asset.theta_max)}",
            f"initial_holding = {_fmt(asset.initial_holding)}",
        ]
    for liability in cfg.liabilities:
        lines += ["", f"[liability.{liability.id}]"]
        for key in ("initial_outflow", "mu_xi", "sigma_xi", "revenue_initial", "mu_rho", "sigma_rho"):
            lines.append(f"{key} = {_fmt(getattr(liability, key))}")

    solver = cfg.solver
    lines += [
        "",
        "[solver]",
        f"engine = {solver.engine}",
        f"oracle_engine = {solver.oracle_engine}",
        f"max_iterations = {solver.max_iterations}",
        f"cut_tol = {_fmt(solver.cut_tol)}",
        f"ssd_tol = {_fmt(solver.ssd_tol)}",
        f"risk_tol = {_fmt(solver.risk_tol)}",
        f"event_rounds_per_child = {solver.event_rounds_per_child}",
        f"oracle_max_variables = {solver.oracle_max_variables}",
        f"oracle_gap_tol = {_fmt(solver.oracle_gap_tol)}",
        "",
    ]
    return "\n".join(lines)


def shipped_config_names() -> List[str]:
    return sorted(path.stem for path in CONFIG_DIR.glob("*.cfg"))


def shipped_config_path(name: str) -> Path:
    """Resolve a bare shipped name (``base_small``) or an explicit path."""

    candidate = Path(name)
    if candidate.suffix == ".cfg" and candidate.exists():
        return candidate
    shipped = CONFIG_DIR / f"{name}.cfg"
    if shipped.exists():
        return shipped
    if candidate.exists():
        return candidate
    raise ConfigError([f"config {name!r} not found (shipped: {', '.join(shipped_config_names())})"])


def load_run_config(path_or_name: str | Path) -> RunConfig:
    path = shipped_config_path(str(path_or_name))
    LOGGER.debug("Loading run config from %s", path)
    return parse_run_config(path.read_text(encoding="utf-8"), name=path.stem)


# --------------------------------------------------------------------------
# Overrides used by sweeps and the HTTP surface

SWEEP_PARAMETERS = ("phi", "alpha", "beta", "delta_bar", "q", "kappa", "stress")


def stressed(cfg: RunConfig, growth: float = 0.05, volatility: float = 0.05) -> RunConfig:
    """Return ``cfg`` with every liability class on the stressed outflow law."""

    liabilities = tuple(replace(l, mu_xi=growth, sigma_xi=volatility) for l in cfg.liabilities)
    return replace(cfg, liabilities=liabilities)


def with_parameter(cfg: RunConfig, name: str, value: float) -> RunConfig:
    """Set one sweepable parameter; ``stress`` toggles the stressed liabilities."""

    if name not in SWEEP_PARAMETERS:
        raise ConfigError([f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_PARAMETERS)}"])
    if name == "stress":
        updated = stressed(cfg) if value else cfg
    else:
        updated = replace(cfg, **{name: float(value)})
    return build_run_config(updated)


def with_branching(cfg: RunConfig, branching: Sequence[int]) -> RunConfig:
    return build_run_config(replace(cfg, branching=tuple(int(b) for b in branching)))


def describe_config(cfg: RunConfig) -> dict:
    """Return a JSON-friendly summary of ``cfg``."""

    return {
        "name": cfg.name,
        "stages": list(cfg.stages),
        "branching": list(cfg.branching),
        "seed": cfg.seed,
        "assets": [
            {"id": a.id, "family": a.family, "duration": a.duration,
             "theta_min": a.theta_min, "theta_max": a.theta_max}
            for a in cfg.assets
        ],
        "liabilities": [
            {"id": l.id, "initial_outflow": l.initial_outflow, "mu_xi": l.mu_xi, "sigma_xi": l.sigma_xi}
            for l in cfg.liabilities
        ],
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "phi": cfg.phi,
        "delta_bar": cfg.delta_bar,
        "q": cfg.q,
        "kappa": cfg.kappa,
        "t_lambda": cfg.t_lambda,
        "engine": cfg.solver.engine,
        "finite_m": math.isfinite(cfg.big_m),
    }


__all__ = [
    "AssetSpec",
    "ConfigError",
    "EconCoefficients",
    "InitialEconState",
    "LiabilitySpec",
    "RunConfig",
    "ServiceSettings",
    "SolverSettings",
    "SWEEP_PARAMETERS",
    "build_settings",
    "configure_logging",
    "describe_config",
    "dump_run_config",
    "build_run_config",
    "load_env_file",
    "load_environment",
    "load_run_config",
    "parse_run_config",
    "shipped_config_names",
    "shipped_config_path",
    "stressed",
    "validate_config",
    "with_branching",
    "with_parameter",
]
