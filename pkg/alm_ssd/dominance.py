"""Stochastic-order calculus on finite distributions and sequential processes."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .tree import TreeTopology

DEFAULT_TOL = 1e-8
PROBABILITY_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite distribution in canonical form: sorted, merged, positive atoms."""

    values: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_atoms(cls, values: Sequence[float], probs: Sequence[float]) -> "DiscreteDistribution":
        values = np.asarray(values, dtype=float).ravel()
        probs = np.asarray(probs, dtype=float).ravel()
        if values.shape != probs.shape or values.size == 0:
            raise ValueError("values and probabilities must be nonempty and of equal length")
        if np.any(probs < 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("probabilities must be nonnegative and values finite")
        if abs(probs.sum() - 1.0) > PROBABILITY_TOL * max(1, probs.size):
            raise ValueError(f"probabilities sum to {probs.sum()!r}, expected 1")
        keep = probs > 0.0
        unique, inverse = np.unique(values[keep], return_inverse=True)
        merged = np.bincount(inverse, weights=probs[keep], minlength=unique.size)
        return cls(values=unique, probs=merged)

    @classmethod
    def degenerate(cls, value: float) -> "DiscreteDistribution":
        return cls(values=np.array([float(value)]), probs=np.array([1.0]))

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def scaled(self, factor: float) -> "DiscreteDistribution":
        return DiscreteDistribution.from_atoms(self.values * factor, self.probs)

    def shifted(self, offset: float) -> "DiscreteDistribution":
        return DiscreteDistribution(values=self.values + offset, probs=self.probs.copy())


def mean(d: DiscreteDistribution) -> float:
    return float(np.dot(d.values, d.probs))


def variance(d: DiscreteDistribution) -> float:
    mu = mean(d)
    return float(np.dot(d.probs, (d.values - mu) ** 2))


def cdf(d: DiscreteDistribution, eta: float) -> float:
    """Right-continuous F(eta) = P[Z <= eta]."""

    return float(d.probs[d.values <= eta].sum())


def survival(d: DiscreteDistribution, eta: float) -> float:
    return float(d.probs[d.values > eta].sum())


def quantile(d: DiscreteDistribution, p: float) -> float:
    """Left-continuous inverse inf{eta : F(eta) >= p} for 0 < p <= 1."""

    if not 0.0 < p <= 1.0:
        raise ValueError("quantile level must lie in (0, 1]")
    index = int(np.searchsorted(d.cumulative, p - PROBABILITY_TOL, side="left"))
    return float(d.values[min(index, d.values.size - 1)])


def integrated_cdf(d: DiscreteDistribution, eta: float) -> float:
    """F^(2)(eta) = E[(eta - Z)_+]."""

    return float(np.dot(d.probs, np.maximum(eta - d.values, 0.0)))


def integrated_cdf_k(d: DiscreteDistribution, eta: float, k: int) -> float:
    """F^(k)(eta) = E[(eta - Z)_+^(k-1)] / (k-1)! for k >= 2."""

    if k < 2:
        raise ValueError("k must be at least 2")
    gap = np.maximum(eta - d.values, 0.0)
    return float(np.dot(d.probs, gap ** (k - 1)) / math.factorial(k - 1))


def lorenz(d: DiscreteDistribution, p: float) -> float:
    """L(p) = integral of the quantile function over [0, p]."""

    if not 0.0 <= p <= 1.0 + PROBABILITY_TOL:
        raise ValueError("Lorenz level must lie in [0, 1]")
    cumulative = d.cumulative
    before = np.concatenate(([0.0], cumulative[:-1]))
    mass = np.clip(np.minimum(cumulative, p) - before, 0.0, None)
    return float(np.dot(mass, d.values))


def lorenz_breakpoints(d: DiscreteDistribution) -> np.ndarray:
    return np.concatenate(([0.0], np.minimum(d.cumulative, 1.0)))


@dataclass(frozen=True)
class SSDCheck:
    dominates: bool
    violation: float


def ssd_dominates(x: DiscreteDistribution, y: DiscreteDistribution, tol: float = DEFAULT_TOL) -> SSDCheck:
    """Lorenz test L_x(p) >= L_y(p) - tol at all breakpoints of either function."""

    points = np.union1d(lorenz_breakpoints(x), lorenz_breakpoints(y))
    gaps = np.array([lorenz(y, p) - lorenz(x, p) for p in points])
    violation = float(max(gaps.max(), 0.0))
    return SSDCheck(dominates=violation <= tol, violation=violation)


def shortfall_dominates(x: DiscreteDistribution, y: DiscreteDistribution, tol: float = DEFAULT_TOL) -> SSDCheck:
    """Shortfall test E[(eta - x)_+] <= E[(eta - y)_+] + tol at every atom of both."""

    points = np.union1d(x.values, y.values)
    gaps = np.array([integrated_cdf(x, eta) - integrated_cdf(y, eta) for eta in points])
    violation = float(max(gaps.max(), 0.0))
    return SSDCheck(dominates=violation <= tol, violation=violation)


def fsd_dominates(x: DiscreteDistribution, y: DiscreteDistribution, tol: float = DEFAULT_TOL) -> SSDCheck:
    """First-order check F_x(eta) <= F_y(eta) at every atom of both."""

    points = np.union1d(x.values, y.values)
    gaps = np.array([cdf(x, eta) - cdf(y, eta) for eta in points])
    violation = float(max(gaps.max(), 0.0))
    return SSDCheck(dominates=violation <= tol, violation=violation)


def conjugacy_check(d: DiscreteDistribution, levels: Optional[Sequence[float]] = None) -> float:
    """Max |L(p) - max_eta (p eta - F^(2)(eta))| with eta over the atoms."""

    if levels is None:
        levels = np.linspace(0.0, 1.0, 101)
    worst = 0.0
    shortfalls = np.array([integrated_cdf(d, eta) for eta in d.values])
    for p in levels:
        conjugate = float(np.max(p * d.values - shortfalls))
        worst = max(worst, abs(lorenz(d, p) - conjugate))
    return worst


def dump_curves(d: DiscreteDistribution, order: int, grid: Sequence[float]) -> str:
    """Two-column CSV ``eta,value`` of F (order 1) or F^(k) on ``grid``."""

    out = io.StringIO()
    out.write("eta,value\n")
    for eta in grid:
        value = cdf(d, eta) if order == 1 else integrated_cdf_k(d, eta, order)
        out.write(f"{float(eta)!r},{value!r}\n")
    return out.getvalue()


# --------------------------------------------------------------------------
# Sequential processes


@dataclass
class SequentialProcess:
    """A value per tree node; the root value is not used by the comparisons."""

    topology: TreeTopology
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.topology),):
            raise ValueError("a sequential process needs one value per node")


def expected_future_values(proc: SequentialProcess) -> np.ndarray:
    """F[n] = E[sum of values at strictly later stages | n]."""

    topology = proc.topology
    future = np.zeros(len(topology), dtype=float)
    for t in range(topology.horizon - 1, -1, -1):
        for n in topology.stage_nodes(t):
            children = topology.children(n)
            probs = topology.conditional_probabilities(n)
            future[n] = float(np.dot(probs, proc.values[list(children)] + future[list(children)]))
    return future


def project_future_value(proc: SequentialProcess, node_id: int, future: Optional[np.ndarray] = None) -> DiscreteDistribution:
    """Distribution over children m of X_m + E[later values | m].

    Its mean is the nested conditional expectation of all future values.
    """

    topology = proc.topology
    children = list(topology.children(node_id))
    if not children:
        raise ValueError(f"node {node_id} is a leaf")
    if future is None:
        future = expected_future_values(proc)
    return DiscreteDistribution.from_atoms(
        proc.values[children] + future[children], topology.conditional_probabilities(node_id)
    )


def accumulated_difference(x: SequentialProcess, y: SequentialProcess) -> np.ndarray:
    """sigma[n] = sum over the path of stages 1..t(n) of (X - Y)."""

    topology = x.topology
    sigma = np.zeros(len(topology), dtype=float)
    for node in topology.nodes:
        if node.ancestor is not None:
            sigma[node.id] = sigma[node.ancestor] + x.values[node.id] - y.values[node.id]
    return sigma


@dataclass
class SequentialCheck:
    results: Dict[int, SSDCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.dominates for check in self.results.values())

    def failures(self) -> List[int]:
        return sorted(n for n, check in self.results.items() if not check.dominates)


def check_sequential_ssd(x: SequentialProcess, y: SequentialProcess, tol: float = DEFAULT_TOL) -> SequentialCheck:
    """Evaluate the time-consistent order at every non-leaf node.

    At node n: sigma(n) + [X_m + E(future X | m)] must SSD-dominate
    [Y_m + E(future Y | m)] over the children m of n.
    """

    if x.topology is not y.topology and len(x.topology) != len(y.topology):
        raise ValueError("processes must share a topology")
    topology = x.topology
    fx = expected_future_values(x)
    fy = expected_future_values(y)
    sigma = accumulated_difference(x, y)
    check = SequentialCheck()
    for node in topology.nodes:
        if not node.children:
            continue
        left = project_future_value(x, node.id, fx).shifted(sigma[node.id])
        right = project_future_value(y, node.id, fy)
        check.results[node.id] = ssd_dominates(left, right, tol)
    return check


@dataclass(frozen=True)
class PropagationResult:
    premise: bool
    conclusion: bool
    premise_failures: Tuple[int, ...]
    conclusion_failures: Tuple[int, ...]


def check_propagation(x: SequentialProcess, y: SequentialProcess, tol: float = DEFAULT_TOL) -> PropagationResult:
    """Check the last-but-one-stage premise and the order at all earlier stages.

    The premise is the comparison at stage T-1 nodes; the conclusion covers
    every non-leaf node before T-1. No implication is claimed when the premise
    fails.
    """

    topology = x.topology
    last_but_one = topology.horizon - 1
    full = check_sequential_ssd(x, y, tol)
    premise = tuple(n for n in full.failures() if topology.nodes[n].stage == last_but_one)
    conclusion = tuple(n for n in full.failures() if topology.nodes[n].stage < last_but_one)
    return PropagationResult(
        premise=not premise,
        conclusion=not conclusion,
        premise_failures=premise,
        conclusion_failures=conclusion,
    )


@dataclass(frozen=True)
class Separation:
    delta: float
    event: Tuple[int, ...]
    probability: float
    target: float


def separation_oracle(
    values: Sequence[float],
    probs: Sequence[float],
    benchmark: DiscreteDistribution,
) -> Separation:
    """Worst lower-set violation of the quantile-form SSD constraints.

    ``values[m]`` is the portfolio value at child m with conditional
    probability ``probs[m]``. For every distinct value eta, A = {m : X_m <= eta}
    is scored by L_benchmark(P(A))/P(A) minus the conditional mean of X over A.
    The event of the largest score is returned; ties go to the smallest eta.
    """

    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(values, kind="stable")
    best: Optional[Separation] = None
    cumulative_p = 0.0
    cumulative_x = 0.0
    position = 0
    while position < order.size:
        eta = values[order[position]]
        while position < order.size and values[order[position]] <= eta:
            m = order[position]
            cumulative_p += probs[m]
            cumulative_x += probs[m] * values[m]
            position += 1
        level = min(cumulative_p, 1.0)
        target = lorenz(benchmark, level) / cumulative_p
        delta = target - cumulative_x / cumulative_p
        if best is None or delta > best.delta:
            event = tuple(sorted(int(m) for m in order[:position]))
            best = Separation(delta=float(delta), event=event, probability=float(cumulative_p), target=float(target))
    assert best is not None
    return best


__all__ = [
    "DiscreteDistribution",
    "SSDCheck",
    "Separation",
    "SequentialCheck",
    "SequentialProcess",
    "PropagationResult",
    "accumulated_difference",
    "cdf",
    "check_sequential_ssd",
    "conjugacy_check",
    "dump_curves",
    "expected_future_values",
    "fsd_dominates",
    "integrated_cdf",
    "integrated_cdf_k",
    "lorenz",
    "mean",
    "project_future_value",
    "quantile",
    "separation_oracle",
    "shortfall_dominates",
    "ssd_dominates",
    "survival",
    "variance",
]
