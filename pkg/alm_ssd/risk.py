"""Mean-semideviation risk measure, its dual multipliers and nested evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tree import TreeTopology


@dataclass(frozen=True)
class RiskSpec:
    kappa: float = 0.1
    w_floor: float = -1e6

    def __post_init__(self) -> None:
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")


def mean_semideviation(values: Sequence[float], probs: Sequence[float], kappa: float) -> float:
    """rho(Z) = E[Z] + kappa E[(Z - E[Z])_+] for a cost Z."""

    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    expectation = float(np.dot(probs, values))
    return expectation + kappa * float(np.dot(probs, np.maximum(values - expectation, 0.0)))


def risk_cut(values: Sequence[float], probs: Sequence[float], kappa: float) -> np.ndarray:
    """Maximizing dual multipliers mu = 1 + h - E[h], h = kappa 1{v >= E v}.

    ``sum(probs * mu * values)`` equals ``mean_semideviation(values, probs, kappa)``.
    """

    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    expectation = float(np.dot(probs, values))
    h = np.where(values >= expectation, kappa, 0.0)
    return 1.0 + h - float(np.dot(probs, h))


def in_dual_set(mu: Sequence[float], probs: Sequence[float], kappa: float, tol: float = 1e-12) -> bool:
    """True when mu = 1 + h - E[h] for some 0 <= h <= kappa."""

    mu = np.asarray(mu, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if np.any(mu < -tol) or abs(float(np.dot(probs, mu)) - 1.0) > tol * max(1, mu.size):
        return False
    # h is fixed up to a constant; choose the smallest h >= 0.
    h = mu - mu.min()
    return bool(h.max() <= kappa + tol)


def nested_risk_evaluate(topology: TreeTopology, costs: Sequence[float], kappa: float) -> float:
    """Root value of the nested mean-semideviation of per-node costs.

    Leaves carry their own cost; a non-leaf node adds its cost to the risk of
    its children's values. The caller adds any first-stage term such as beta K0.
    """

    costs = np.asarray(costs, dtype=float)
    value = costs.copy()
    for t in range(topology.horizon - 1, -1, -1):
        for n in topology.stage_nodes(t):
            children = list(topology.children(n))
            value[n] = costs[n] + mean_semideviation(
                value[children], topology.conditional_probabilities(n), kappa
            )
    return float(value[0])


__all__ = ["RiskSpec", "in_dual_set", "mean_semideviation", "nested_risk_evaluate", "risk_cut"]
