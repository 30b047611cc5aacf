"""Core economic model: yield curve, decay factor, inflation and credit spread.

Every node owns an independent random stream derived from ``(seed, node id)``
so simulated trees do not depend on evaluation order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np
import pandas as pd
from scipy import linalg

from .config import EconCoefficients, InitialEconState
from .tree import TreeTopology

LOGGER = logging.getLogger("alm_ssd.econ")

ECON_STREAM = 0
ASSET_STREAM = 1
LIABILITY_STREAM = 2
EXTENSION_STREAM = 3

# Column layout of every per-node / per-month state array.
B1, B2, B3, GAMMA, PI, SPREAD = range(6)
STATE_WIDTH = 6


class CovarianceError(ValueError):
    """Raised when a covariance or correlation matrix is not PSD."""


@dataclass(frozen=True)
class CurveState:
    b1: float
    b2: float
    b3: float
    gamma: float


@dataclass(frozen=True)
class EconState:
    curve: CurveState
    pi: float
    s: float

    @classmethod
    def from_row(cls, row: Sequence[float]) -> "EconState":
        return cls(
            curve=CurveState(float(row[B1]), float(row[B2]), float(row[B3]), float(row[GAMMA])),
            pi=float(row[PI]),
            s=float(row[SPREAD]),
        )

    def to_row(self) -> np.ndarray:
        c = self.curve
        return np.array([c.b1, c.b2, c.b3, c.gamma, self.pi, self.s], dtype=float)


def node_stream(seed: int, node_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(node_id, stream)))


def yield_rate(curve: CurveState | np.ndarray, tau) -> np.ndarray | float:
    """Curve yield at term ``tau`` years: b1 + b2 e^{-tau/g} + b3 (tau/g) e^{-tau/g}.

    ``curve`` is either a :class:`CurveState` or an array whose last axis holds
    at least (b1, b2, b3, gamma). At tau = 0 the value is b1 + b2.
    """

    if isinstance(curve, CurveState):
        b1, b2, b3, gamma = curve.b1, curve.b2, curve.b3, curve.gamma
    else:
        arr = np.asarray(curve, dtype=float)
        b1, b2, b3, gamma = arr[..., B1], arr[..., B2], arr[..., B3], arr[..., GAMMA]
    x = np.asarray(tau, dtype=float) / gamma
    decay = np.exp(-x)
    value = b1 + b2 * decay + b3 * x * decay
    return float(value) if np.ndim(value) == 0 else value


def decay_factor_raw(b1, b2, b3, coeffs: Sequence[float], noise=0.0):
    a0, a1, a2, a3 = coeffs
    return a0 + a1 * np.asarray(b1) + a2 * np.asarray(b2) + a3 * np.asarray(b3) + noise


def decay_factor(b1, b2, b3, coeffs: Sequence[float], noise=0.0, floor: float = 0.5):
    """Decay regression gamma = a0 + a1 b1 + a2 b2 + a3 b3 + noise, floored."""

    value = np.maximum(decay_factor_raw(b1, b2, b3, coeffs, noise), floor)
    return float(value) if np.ndim(value) == 0 else value


def step_inflation_raw(pi_prev, dt: float, speed: float, vol: float, noise=0.0, target: float = 0.02):
    pi_prev = np.asarray(pi_prev, dtype=float)
    root = np.sqrt(np.maximum(pi_prev, 0.0))
    return pi_prev + speed * (target - pi_prev) * dt + vol * root * np.sqrt(dt) * noise


def step_inflation(pi_prev, dt: float, speed: float, vol: float, noise=0.0, target: float = 0.02):
    """One square-root mean-reverting step for annual inflation, floored at 0."""

    value = np.maximum(step_inflation_raw(pi_prev, dt, speed, vol, noise, target), 0.0)
    return float(value) if np.ndim(value) == 0 else value


def step_spread_raw(s_prev, short_rate, coeffs: Sequence[float], noise=0.0, scale: float = 1.0):
    c0, c1, c2 = coeffs
    scaled = c0 + c1 * scale * np.asarray(s_prev, dtype=float) + c2 * np.asarray(short_rate) + noise
    return scaled / scale


def step_spread(s_prev, short_rate, coeffs: Sequence[float], noise=0.0, scale: float = 1.0):
    """Autoregressive credit spread step, floored at 0.

    The regression runs on ``scale * s`` (for example percent when scale is
    100) while ``short_rate`` enters as a fraction; the result is returned as
    a fraction.
    """

    value = np.maximum(step_spread_raw(s_prev, short_rate, coeffs, noise, scale), 0.0)
    return float(value) if np.ndim(value) == 0 else value


def borrow_rate(state: EconState | np.ndarray):
    """Borrowing rate r^- = y(1) + sIG."""

    if isinstance(state, EconState):
        return yield_rate(state.curve, 1.0) + state.s
    arr = np.asarray(state, dtype=float)
    return yield_rate(arr, 1.0) + arr[..., SPREAD]


def matrix_root(matrix: np.ndarray, label: str) -> np.ndarray:
    """Symmetric square root factor R with R R^T = matrix.

    Raises:
        CovarianceError: if ``matrix`` is asymmetric or has a negative eigenvalue.
    """

    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (3, 3) or not np.allclose(matrix, matrix.T, atol=1e-12):
        raise CovarianceError(f"{label} must be a symmetric 3x3 matrix")
    eigenvalues, vectors = linalg.eigh(matrix)
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    if eigenvalues.min() < -1e-12 * scale:
        raise CovarianceError(f"{label} is not positive semidefinite (min eigenvalue {eigenvalues.min():.3g})")
    return vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


@dataclass
class EconDiagnostics:
    decay_floors: int = 0
    inflation_floors: int = 0
    spread_floors: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {
            "decay_floors": self.decay_floors,
            "inflation_floors": self.inflation_floors,
            "spread_floors": self.spread_floors,
        }


@dataclass
class EconTree:
    """Simulated economy on a tree.

    ``states[n]`` is the state at node n's date. ``monthly[t]`` has shape
    (nodes at stage t, months + 1, 6): row 0 is the ancestor's state and the
    last row equals the node state.
    """

    states: np.ndarray
    monthly: Dict[int, np.ndarray] = field(default_factory=dict)
    diagnostics: EconDiagnostics = field(default_factory=EconDiagnostics)

    def state(self, node_id: int) -> EconState:
        return EconState.from_row(self.states[node_id])


def initial_state(init: InitialEconState) -> np.ndarray:
    return np.array([init.b1, init.b2, init.b3, init.gamma, init.pi, init.spread], dtype=float)


def simulate_econ_tree(
    topology: TreeTopology,
    coeffs: EconCoefficients,
    init: InitialEconState,
    seed: int,
) -> EconTree:
    """Simulate factor levels, decay, inflation and spread along the tree.

    Each stage transition is simulated month by month, vectorized over the
    nodes of the stage. Factors follow a Gaussian random walk with monthly
    covariance ``factor_cov / 12``.
    """

    factor_root = matrix_root(np.asarray(coeffs.factor_cov, dtype=float) / 12.0, "factor covariance")
    if coeffs.residual_correlation is not None:
        residual_root = matrix_root(np.asarray(coeffs.residual_correlation), "residual correlation")
    else:
        residual_root = np.eye(3)
    stds = np.array([coeffs.decay_std, coeffs.inflation_vol, coeffs.spread_std], dtype=float)
    dt = 1.0 / 12.0

    states = np.zeros((len(topology), STATE_WIDTH), dtype=float)
    states[0] = initial_state(init)
    diagnostics = EconDiagnostics()
    monthly: Dict[int, np.ndarray] = {}

    for t in range(1, topology.horizon + 1):
        nodes = np.array(topology.stage_nodes(t), dtype=np.int64)
        months = topology.gap_months(t)
        draws = np.stack(
            [node_stream(seed, int(n), ECON_STREAM).standard_normal((months, 6)) for n in nodes]
        )
        factor_noise = draws[:, :, :3] @ factor_root.T
        residuals = draws[:, :, 3:] @ residual_root.T

        path = np.empty((nodes.size, months + 1, STATE_WIDTH), dtype=float)
        path[:, 0] = states[topology.ancestors[nodes]]
        current = path[:, 0].copy()
        for h in range(months):
            current[:, :3] = current[:, :3] + factor_noise[:, h]
            b1, b2, b3 = current[:, B1], current[:, B2], current[:, B3]
            gamma_noise = stds[0] * residuals[:, h, 0]
            raw_gamma = decay_factor_raw(b1, b2, b3, coeffs.decay, gamma_noise)
            diagnostics.decay_floors += int(np.count_nonzero(raw_gamma < coeffs.gamma_floor))
            current[:, GAMMA] = decay_factor(b1, b2, b3, coeffs.decay, gamma_noise, floor=coeffs.gamma_floor)

            inflation = (current[:, PI], dt, coeffs.inflation_speed, coeffs.inflation_vol, residuals[:, h, 1])
            raw_pi = step_inflation_raw(*inflation, target=coeffs.inflation_target)
            diagnostics.inflation_floors += int(np.count_nonzero(raw_pi < 0.0))
            current[:, PI] = step_inflation(*inflation, target=coeffs.inflation_target)

            spread = (current[:, SPREAD], b1 + b2, coeffs.spread, stds[2] * residuals[:, h, 2])
            raw_spread = step_spread_raw(*spread, scale=coeffs.spread_scale)
            diagnostics.spread_floors += int(np.count_nonzero(raw_spread < 0.0))
            current[:, SPREAD] = step_spread(*spread, scale=coeffs.spread_scale)
            path[:, h + 1] = current
        states[nodes] = current
        monthly[t] = path

    if diagnostics.decay_floors or diagnostics.inflation_floors or diagnostics.spread_floors:
        LOGGER.debug("Econ floors hit: %s", diagnostics.as_dict())
    return EconTree(states=states, monthly=monthly, diagnostics=diagnostics)


def econ_statistics(econ: EconTree, topology: TreeTopology) -> pd.DataFrame:
    """Probability-weighted mean and std of pi, sIG, y(1) and gamma per stage."""

    records = []
    probs = topology.probabilities
    for t in range(topology.horizon + 1):
        nodes = list(topology.stage_nodes(t))
        weights = probs[nodes]
        rows = econ.states[nodes]
        columns = {
            "pi": rows[:, PI],
            "sIG": rows[:, SPREAD],
            "y1": np.atleast_1d(yield_rate(rows, 1.0)),
            "gamma": rows[:, GAMMA],
        }
        record: Dict[str, float] = {"stage": t, "date": topology.stages[t]}
        for name, values in columns.items():
            mean = float(np.dot(weights, values))
            record[f"{name}_mean"] = mean
            record[f"{name}_std"] = float(np.sqrt(max(np.dot(weights, (values - mean) ** 2), 0.0)))
        records.append(record)
    return pd.DataFrame.from_records(records)


__all__ = [
    "CovarianceError",
    "CurveState",
    "EconDiagnostics",
    "EconState",
    "EconTree",
    "borrow_rate",
    "decay_factor",
    "econ_statistics",
    "initial_state",
    "matrix_root",
    "node_stream",
    "simulate_econ_tree",
    "step_inflation",
    "step_inflation_raw",
    "step_spread",
    "step_spread_raw",
    "yield_rate",
]
