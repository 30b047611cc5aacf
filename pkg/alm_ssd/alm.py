"""ALM coefficient generation: asset returns, gain-loss, liabilities and their values."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import AssetSpec, LiabilitySpec, RunConfig
from .econ import (
    ASSET_STREAM,
    EXTENSION_STREAM,
    LIABILITY_STREAM,
    PI,
    SPREAD,
    EconTree,
    borrow_rate,
    node_stream,
    simulate_econ_tree,
    yield_rate,
)
from .tree import NodeCoefficients, ScenarioTree, TreeTopology, nodal_partition_matrix

LOGGER = logging.getLogger("alm_ssd.alm")

RETURN_FLOOR = -0.99
GROWTH_FLOOR = 0.01
MONTH = 1.0 / 12.0

# Monthly evaluation order; corporates read the small-cap equity return.
FAMILY_ORDER = ("equity", "currency", "treasury", "corporate")


class LiabilityValuationError(ValueError):
    """Raised when a liability value is zero but its duration numerator is not."""


def _coefficients(asset: AssetSpec) -> np.ndarray:
    coef = np.zeros(5, dtype=float)
    coef[: len(asset.coefficients)] = asset.coefficients
    return coef


def asset_return_step(
    asset: AssetSpec,
    prev_return,
    state,
    prev_state,
    small_cap=None,
    noise=0.0,
    dt: float = MONTH,
):
    """Monthly return of one asset from its family regression.

    ``state`` and ``prev_state`` are econ state rows (or stacks of rows) for
    the current and previous month. Returns are floored at -99%.

    Raises:
        ValueError: for a corporate asset without a small-cap return.
    """

    state = np.asarray(state, dtype=float)
    prev_state = np.asarray(prev_state, dtype=float)
    if asset.family == "cash":
        value = yield_rate(state, 0.25) * dt
        return value
    b0, b1, b2, b3, b4 = _coefficients(asset)
    prev_return = np.asarray(prev_return, dtype=float)
    if asset.family == "treasury":
        value = b0 + b1 * prev_return + b2 * yield_rate(prev_state, asset.duration) + b3 * state[..., PI]
    elif asset.family == "corporate":
        if small_cap is None:
            raise ValueError(f"corporate asset {asset.id} needs the small-cap equity return")
        value = (
            b0
            + b1 * prev_return
            + b2 * yield_rate(prev_state, asset.duration)
            + b3 * state[..., SPREAD]
            + b4 * np.asarray(small_cap, dtype=float)
        )
    elif asset.family == "equity":
        term_spread = yield_rate(state, 10.0) - yield_rate(state, 1.0)
        value = b0 + b1 * prev_return + b2 * yield_rate(state, 1.0) + b3 * state[..., PI] + b4 * term_spread
    elif asset.family == "currency":
        value = b0 + b1 * prev_return + b2 * yield_rate(state, 0.25) + b3 * state[..., PI]
    else:
        raise ValueError(f"unknown asset family {asset.family!r}")
    value = np.maximum(value + noise, RETURN_FLOOR)
    return float(value) if np.ndim(value) == 0 else value


def compound_stage_return(monthly) -> np.ndarray | float:
    """Compound monthly returns over the last axis: prod(1 + r) - 1."""

    monthly = np.asarray(monthly, dtype=float)
    if monthly.shape[-1] < 1:
        raise ValueError("at least one monthly return is required")
    value = np.prod(1.0 + monthly, axis=-1) - 1.0
    return float(value) if np.ndim(value) == 0 else value


def gain_loss(stage_returns: Sequence[float]) -> float:
    """Average cumulative compounded return over the stages of a path."""

    returns = np.asarray(stage_returns, dtype=float)
    if returns.size == 0:
        return 0.0
    return float(np.mean(np.cumprod(1.0 + returns) - 1.0))


def grow_levels(start, mu, sigma, noise) -> Tuple[np.ndarray, int]:
    """Geometric monthly growth with annual drift ``mu`` and volatility ``sigma``.

    ``noise`` has shape (..., months, classes); the returned path has one
    more month than ``noise`` with the starting level in front.
    """

    noise = np.asarray(noise, dtype=float)
    factors = 1.0 + np.asarray(mu) * MONTH + np.asarray(sigma) * np.sqrt(MONTH) * noise
    floors = int(np.count_nonzero(factors < GROWTH_FLOOR))
    factors = np.maximum(factors, GROWTH_FLOOR)
    start = np.asarray(start, dtype=float)
    grown = start[..., None, :] * np.cumprod(factors, axis=-2)
    return np.concatenate([start[..., None, :], grown], axis=-2), floors


@dataclass
class LiabilityPath:
    outflow: np.ndarray
    revenue: np.ndarray
    floors: int = 0


def liability_forward(spec: LiabilitySpec, months: int, rng: np.random.Generator) -> LiabilityPath:
    """Monthly outflow and revenue levels (annual rates) over ``months`` months."""

    noise = rng.standard_normal((months, 2))
    outflow, f1 = grow_levels([spec.initial_outflow], [spec.mu_xi], [spec.sigma_xi], noise[:, :1])
    revenue, f2 = grow_levels([spec.revenue_initial], [spec.mu_rho], [spec.sigma_rho], noise[:, 1:])
    return LiabilityPath(outflow=outflow[:, 0], revenue=revenue[:, 0], floors=f1 + f2)


def liability_backward(
    topology: TreeTopology,
    leaf_levels: np.ndarray,
    curves: np.ndarray,
    t_lambda: int,
    first_flow_offset: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Discounted liability value and duration per node and class.

    Args:
        topology: Tree the values are attached to.
        leaf_levels: Shape (leaves, months + 1, classes); annual outflow levels
            on the monthly grid from date 0 through the last stage plus
            ``t_lambda`` years, one row per leaf in leaf order.
        curves: Per-node econ state rows used for discounting.
        t_lambda: Valuation horizon in years.
        first_flow_offset: 0 values flows at h = t..t+t_lambda, 1 at t+1..t+t_lambda.

    Returns:
        ``(lam, delta_lam)`` arrays of shape (nodes, classes).
    """

    npm = nodal_partition_matrix(topology)
    probs = topology.probabilities
    leaf_probs = probs[npm[:, -1]]
    n_classes = leaf_levels.shape[-1]
    lam = np.zeros((len(topology), n_classes), dtype=float)
    delta = np.zeros_like(lam)
    tenors = np.arange(first_flow_offset, t_lambda + 1, dtype=float)

    for t in range(topology.horizon + 1):
        stage_ids = np.array(topology.stage_nodes(t), dtype=np.int64)
        position = np.full(len(topology), -1, dtype=np.int64)
        position[stage_ids] = np.arange(stage_ids.size)
        owner = position[npm[:, t]]
        weights = leaf_probs / probs[npm[:, t]]
        months = np.rint((topology.stages[t] + tenors) * 12.0).astype(np.int64)
        flows = leaf_levels[:, months, :]  # leaves x tenors x classes
        expected = np.empty((stage_ids.size, tenors.size, n_classes), dtype=float)
        for k in range(tenors.size):
            for j in range(n_classes):
                expected[:, k, j] = np.bincount(owner, weights * flows[:, k, j], minlength=stage_ids.size)
        discount = np.exp(-np.stack([np.atleast_1d(yield_rate(curves[stage_ids], tau)) for tau in tenors], axis=1) * tenors)
        value = np.einsum("nk,nkj->nj", discount, expected)
        numerator = np.einsum("nk,nkj->nj", discount * tenors, expected)
        if np.any((value <= 0.0) & (np.abs(numerator) > 0.0)):
            raise LiabilityValuationError(f"zero liability value with nonzero duration at stage {t}")
        lam[stage_ids] = value
        delta[stage_ids] = np.divide(numerator, value, out=np.zeros_like(value), where=value > 0.0)
    return lam, delta


@dataclass
class GenerationDiagnostics:
    econ: Dict[str, int] = field(default_factory=dict)
    return_floors: int = 0
    growth_floors: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {**self.econ, "return_floors": self.return_floors, "growth_floors": self.growth_floors}


def _stage_positions(topology: TreeTopology, stage: int) -> np.ndarray:
    ids = np.array(topology.stage_nodes(stage), dtype=np.int64)
    position = np.full(len(topology), -1, dtype=np.int64)
    position[ids] = np.arange(ids.size)
    return position


def simulate_asset_returns(
    topology: TreeTopology,
    cfg: RunConfig,
    econ: EconTree,
    seed: int,
) -> Tuple[np.ndarray, int]:
    """Inter-stage returns per node: column 0 cash, then assets in config order."""

    assets = cfg.assets
    n_assets = len(assets)
    returns = np.zeros((len(topology), n_assets + 1), dtype=float)
    last_monthly = np.zeros((len(topology), n_assets), dtype=float)
    floors = 0
    small_cap = cfg.asset_index(cfg.small_cap_asset) - 1 if cfg.small_cap_asset else None
    order = [i for family in FAMILY_ORDER for i, a in enumerate(assets) if a.family == family]
    stds = np.array([a.residual_std for a in assets], dtype=float)

    for t in range(1, topology.horizon + 1):
        nodes = np.array(topology.stage_nodes(t), dtype=np.int64)
        path = econ.monthly[t]
        months = path.shape[1] - 1
        parents = topology.ancestors[nodes]
        returns[nodes, 0] = np.atleast_1d(yield_rate(econ.states[parents], 0.25)) * topology.gap_years(t)
        if n_assets == 0:
            continue
        noise = np.stack(
            [node_stream(seed, int(n), ASSET_STREAM).standard_normal((months, n_assets)) for n in nodes]
        ) * stds
        prev = last_monthly[parents].copy()
        growth = np.ones((nodes.size, n_assets), dtype=float)
        for h in range(months):
            current = np.zeros_like(prev)
            for i in order:
                current[:, i] = asset_return_step(
                    assets[i],
                    prev[:, i],
                    path[:, h + 1],
                    path[:, h],
                    small_cap=current[:, small_cap] if small_cap is not None else None,
                    noise=noise[:, h, i],
                )
                floors += int(np.count_nonzero(current[:, i] <= RETURN_FLOOR))
            growth *= 1.0 + current
            prev = current
        returns[nodes, 1:] = growth - 1.0
        last_monthly[nodes] = prev
    return returns, floors


def gain_loss_tree(topology: TreeTopology, returns: np.ndarray) -> np.ndarray:
    """g per node and asset from stage returns along each root path; g at the root is 0."""

    cumulative = np.ones_like(returns)
    running = np.zeros_like(returns)
    g = np.zeros_like(returns)
    for t in range(1, topology.horizon + 1):
        nodes = np.array(topology.stage_nodes(t), dtype=np.int64)
        parents = topology.ancestors[nodes]
        cumulative[nodes] = cumulative[parents] * (1.0 + returns[nodes])
        running[nodes] = running[parents] + cumulative[nodes] - 1.0
        g[nodes] = running[nodes] / t
    g[:, 0] = 0.0
    return g


def simulate_liabilities(
    topology: TreeTopology,
    cfg: RunConfig,
    seed: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Forward liability pass.

    Returns per-node outflows (nodes x classes), per-node revenue, the leaf
    monthly level paths extended ``t_lambda`` years past the horizon, and the
    growth-floor count.
    """

    specs = cfg.liabilities
    n_classes = len(specs)
    mu = np.array([s.mu_xi for s in specs] + [s.mu_rho for s in specs], dtype=float)
    sigma = np.array([s.sigma_xi for s in specs] + [s.sigma_rho for s in specs], dtype=float)
    start = np.array([s.initial_outflow for s in specs] + [s.revenue_initial for s in specs], dtype=float)

    levels = np.zeros((len(topology), 2 * n_classes), dtype=float)
    levels[0] = start
    flows = np.zeros_like(levels)
    stage_paths: Dict[int, np.ndarray] = {}
    floors = 0
    for t in range(1, topology.horizon + 1):
        nodes = np.array(topology.stage_nodes(t), dtype=np.int64)
        months = topology.gap_months(t)
        noise = np.stack(
            [node_stream(seed, int(n), LIABILITY_STREAM).standard_normal((months, 2 * n_classes)) for n in nodes]
        )
        path, hit = grow_levels(levels[topology.ancestors[nodes]], mu, sigma, noise)
        floors += hit
        levels[nodes] = path[:, -1]
        flows[nodes] = path[:, 1:].sum(axis=1) * MONTH
        stage_paths[t] = path

    npm = nodal_partition_matrix(topology)
    extension_months = 12 * cfg.t_lambda
    leaves = npm[:, -1]
    noise = np.stack(
        [node_stream(seed, int(n), EXTENSION_STREAM).standard_normal((extension_months, 2 * n_classes)) for n in leaves]
    )
    extension, hit = grow_levels(levels[leaves], mu, sigma, noise)
    floors += hit

    pieces: List[np.ndarray] = [np.broadcast_to(start, (leaves.size, 1, 2 * n_classes))]
    for t in range(1, topology.horizon + 1):
        position = _stage_positions(topology, t)
        pieces.append(stage_paths[t][position[npm[:, t]], 1:])
    pieces.append(extension[:, 1:])
    leaf_levels = np.concatenate(pieces, axis=1)[:, :, :n_classes]

    outflows = flows[:, :n_classes]
    revenue = flows[:, n_classes:].sum(axis=1)
    return outflows, revenue, leaf_levels, floors


def generate_coefficients(
    topology: TreeTopology,
    cfg: RunConfig,
    seed: Optional[int] = None,
) -> Tuple[ScenarioTree, EconTree, GenerationDiagnostics]:
    """Simulate the economy and fill every node's coefficient record.

    Args:
        topology: Tree to populate.
        cfg: Validated run configuration.
        seed: Overrides ``cfg.seed`` when given.

    Returns:
        The populated :class:`ScenarioTree`, the simulated economy and the
        floor diagnostics.
    """

    seed = cfg.seed if seed is None else seed
    econ = simulate_econ_tree(topology, cfg.econ, cfg.initial, seed)
    returns, return_floors = simulate_asset_returns(topology, cfg, econ, seed)
    g = gain_loss_tree(topology, returns)
    outflows, revenue, leaf_levels, growth_floors = simulate_liabilities(topology, cfg, seed)
    lam, delta = liability_backward(topology, leaf_levels, econ.states, cfg.t_lambda, cfg.first_flow_offset)
    r_minus = np.atleast_1d(borrow_rate(econ.states))

    coefficients = [
        NodeCoefficients(
            r=returns[n].copy(),
            g=g[n].copy(),
            L=outflows[n].copy(),
            c=float(revenue[n]),
            lam=lam[n].copy(),
            delta_lam=delta[n].copy(),
            r_minus=float(r_minus[n]),
        )
        for n in range(len(topology))
    ]
    diagnostics = GenerationDiagnostics(
        econ=econ.diagnostics.as_dict(), return_floors=return_floors, growth_floors=growth_floors
    )
    LOGGER.info(
        "Generated coefficients nodes=%d Lambda0=%.6f floors=%s",
        len(topology),
        coefficients[0].Lambda,
        diagnostics.as_dict(),
    )
    tree = ScenarioTree(
        topology=topology,
        asset_ids=cfg.asset_ids,
        liability_ids=cfg.liability_ids,
        coefficients=coefficients,
        econ=econ.states.copy(),
    )
    return tree, econ, diagnostics


__all__ = [
    "GenerationDiagnostics",
    "LiabilityPath",
    "LiabilityValuationError",
    "asset_return_step",
    "compound_stage_return",
    "gain_loss",
    "gain_loss_tree",
    "generate_coefficients",
    "grow_levels",
    "liability_backward",
    "liability_forward",
    "simulate_asset_returns",
    "simulate_liabilities",
]
