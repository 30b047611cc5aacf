"""Linear model description and solve front-end.

Dual values follow one convention for every engine: ``duals[i]`` is the
derivative of the optimal objective with respect to ``rhs[i]``. In a
minimisation a ``>=`` row therefore has a nonnegative dual and a ``<=`` row a
nonpositive one. Infeasibility certificates are the same derivative of the
phase-one objective (total artificial infeasibility). See docs/dual_signs.md.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from .simplex import solve_standard

LOGGER = logging.getLogger("alm_ssd.lp")

SENSES = ("<=", "=", ">=")
Key = Union[int, str]


class LPModelError(ValueError):
    """Raised when a linear model is malformed."""


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERIC_FAILURE = "numeric-failure"


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-9
    optimality: float = 1e-9
    pivot: float = 1e-11
    max_iterations: int = 20000


@dataclass
class Variable:
    name: str
    lower: float
    upper: float
    objective: float


@dataclass
class Constraint:
    name: str
    coeffs: Dict[int, float]
    sense: str
    rhs: float
    dual: bool = False


class LinearModel:
    """Minimisation model built incrementally by name."""

    def __init__(self, name: str = "model") -> None:
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective_constant = 0.0
        self._variable_index: Dict[str, int] = {}
        self._constraint_index: Dict[str, int] = {}

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def add_variable(
        self,
        name: str,
        lower: float = 0.0,
        upper: float = math.inf,
        objective: float = 0.0,
    ) -> int:
        if name in self._variable_index:
            raise LPModelError(f"variable {name!r} already registered")
        if math.isnan(lower) or math.isnan(upper) or lower > upper or lower == math.inf or upper == -math.inf:
            raise LPModelError(f"variable {name!r} has invalid bounds [{lower}, {upper}]")
        self.variables.append(Variable(name, float(lower), float(upper), float(objective)))
        self._variable_index[name] = len(self.variables) - 1
        return len(self.variables) - 1

    def variable_index(self, key: Key) -> int:
        if isinstance(key, str):
            try:
                return self._variable_index[key]
            except KeyError:
                raise LPModelError(f"unknown variable {key!r}") from None
        index = int(key)
        if not 0 <= index < len(self.variables):
            raise LPModelError(f"unknown variable index {index}")
        return index

    def set_objective(self, key: Key, coefficient: float) -> None:
        self.variables[self.variable_index(key)].objective = float(coefficient)

    def add_constraint(
        self,
        name: str,
        coeffs: Mapping[Key, float],
        sense: str,
        rhs: float,
        dual: bool = False,
    ) -> int:
        if sense not in SENSES:
            raise LPModelError(f"constraint {name!r} has unknown sense {sense!r}")
        if not math.isfinite(rhs):
            raise LPModelError(f"constraint {name!r} has a non-finite right-hand side")
        if name in self._constraint_index:
            raise LPModelError(f"constraint {name!r} already registered")
        row: Dict[int, float] = {}
        for key, value in coeffs.items():
            if not math.isfinite(value):
                raise LPModelError(f"constraint {name!r} has a non-finite coefficient")
            index = self.variable_index(key)
            row[index] = row.get(index, 0.0) + float(value)
        self.constraints.append(Constraint(name, row, sense, float(rhs), dual))
        self._constraint_index[name] = len(self.constraints) - 1
        return len(self.constraints) - 1

    def constraint_index(self, name: str) -> int:
        try:
            return self._constraint_index[name]
        except KeyError:
            raise LPModelError(f"unknown constraint {name!r}") from None

    def to_arrays(self) -> Tuple[np.ndarray, np.ndarray, List[str], np.ndarray, np.ndarray, np.ndarray]:
        """Dense ``(c, A, senses, b, lower, upper)``."""

        c = np.array([v.objective for v in self.variables], dtype=float)
        A = np.zeros((len(self.constraints), len(self.variables)), dtype=float)
        for i, constraint in enumerate(self.constraints):
            for j, value in constraint.coeffs.items():
                A[i, j] = value
        senses = [constraint.sense for constraint in self.constraints]
        b = np.array([constraint.rhs for constraint in self.constraints], dtype=float)
        lower = np.array([v.lower for v in self.variables], dtype=float)
        upper = np.array([v.upper for v in self.variables], dtype=float)
        return c, A, senses, b, lower, upper


@dataclass
class SolveResult:
    status: SolveStatus
    objective: float = float("nan")
    primal: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    farkas: Optional[np.ndarray] = None
    infeasibility: float = 0.0
    iterations: int = 0
    message: str = ""
    model: Optional[LinearModel] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    def value(self, key: Key) -> float:
        assert self.primal is not None and self.model is not None
        return float(self.primal[self.model.variable_index(key)])

    def dual(self, name: str) -> float:
        assert self.duals is not None and self.model is not None
        return float(self.duals[self.model.constraint_index(name)])

    def flagged_duals(self) -> Dict[str, float]:
        """Duals of the rows added with ``dual=True``."""

        assert self.duals is not None and self.model is not None
        return {
            constraint.name: float(self.duals[i])
            for i, constraint in enumerate(self.model.constraints)
            if constraint.dual
        }


# --------------------------------------------------------------------------
# In-package simplex


def _solve_simplex(model: LinearModel, tolerances: Tolerances) -> SolveResult:
    c, A, senses, b, lower, upper = model.to_arrays()
    m, n = A.shape
    columns: List[np.ndarray] = []
    costs: List[float] = []
    # Each original variable maps to x = offset + sign * z_pos (- z_neg when free).
    recover: List[Tuple[float, float, int, int]] = []
    bound_rows: List[Tuple[int, float]] = []
    shift = np.zeros(m)
    constant = model.objective_constant
    for j in range(n):
        lo, up = lower[j], upper[j]
        if math.isfinite(lo):
            offset, sign = lo, 1.0
        elif math.isfinite(up):
            offset, sign = up, -1.0
        else:
            offset, sign = 0.0, 1.0
        shift += A[:, j] * offset
        constant += c[j] * offset
        columns.append(sign * A[:, j])
        costs.append(sign * c[j])
        pos = len(columns) - 1
        neg = -1
        if not math.isfinite(lo) and not math.isfinite(up):
            columns.append(-A[:, j])
            costs.append(-c[j])
            neg = len(columns) - 1
        elif math.isfinite(lo) and math.isfinite(up):
            bound_rows.append((pos, up - lo))
        recover.append((offset, sign, pos, neg))

    n_cols = len(columns)
    n_slack = sum(1 for s in senses if s != "=")
    n_rows = m + len(bound_rows)
    total = n_cols + n_slack + len(bound_rows)
    std_A = np.zeros((n_rows, total))
    std_b = np.zeros(n_rows)
    std_c = np.zeros(total)
    if n_cols:
        std_A[:m, :n_cols] = np.column_stack(columns)
        std_c[:n_cols] = costs
    std_b[:m] = b - shift
    slack = n_cols
    for i, sense in enumerate(senses):
        if sense == "<=":
            std_A[i, slack] = 1.0
            slack += 1
        elif sense == ">=":
            std_A[i, slack] = -1.0
            slack += 1
    for k, (pos, width) in enumerate(bound_rows):
        std_A[m + k, pos] = 1.0
        std_A[m + k, slack + k] = 1.0
        std_b[m + k] = width

    result = solve_standard(
        std_A,
        std_b,
        std_c,
        feas_tol=tolerances.feasibility,
        opt_tol=tolerances.optimality,
        pivot_tol=tolerances.pivot,
        max_iterations=tolerances.max_iterations,
    )
    if result.status == "infeasible":
        return SolveResult(
            status=SolveStatus.INFEASIBLE,
            farkas=result.farkas[:m],
            infeasibility=result.infeasibility,
            iterations=result.iterations,
            message=result.message,
            model=model,
        )
    if result.status != "optimal":
        return SolveResult(status=SolveStatus(result.status), iterations=result.iterations, message=result.message, model=model)

    z = result.z
    primal = np.empty(n)
    for j, (offset, sign, pos, neg) in enumerate(recover):
        value = offset + sign * z[pos]
        if neg >= 0:
            value -= z[neg]
        primal[j] = value
    return SolveResult(
        status=SolveStatus.OPTIMAL,
        objective=float(c @ primal + model.objective_constant),
        primal=primal,
        duals=result.duals[:m].copy(),
        iterations=result.iterations,
        model=model,
    )


# --------------------------------------------------------------------------
# HiGHS through scipy


def _highs_bounds(lower: np.ndarray, upper: np.ndarray) -> List[Tuple[Optional[float], Optional[float]]]:
    return [
        (lo if math.isfinite(lo) else None, up if math.isfinite(up) else None)
        for lo, up in zip(lower, upper)
    ]


def _linprog(c, A, senses, b, bounds):
    ub_rows = [i for i, s in enumerate(senses) if s != "="]
    eq_rows = [i for i, s in enumerate(senses) if s == "="]
    flip = np.array([-1.0 if senses[i] == ">=" else 1.0 for i in ub_rows])
    kwargs = {}
    if ub_rows:
        kwargs["A_ub"] = A[ub_rows] * flip[:, None]
        kwargs["b_ub"] = b[ub_rows] * flip
    if eq_rows:
        kwargs["A_eq"] = A[eq_rows]
        kwargs["b_eq"] = b[eq_rows]
    res = linprog(c, bounds=bounds, method="highs", **kwargs)
    duals = None
    if res.status == 0:
        duals = np.zeros(len(senses))
        if ub_rows:
            duals[ub_rows] = np.asarray(res.ineqlin.marginals) * flip
        if eq_rows:
            duals[eq_rows] = np.asarray(res.eqlin.marginals)
    return res, duals


def _solve_highs(model: LinearModel, tolerances: Tolerances) -> SolveResult:
    c, A, senses, b, lower, upper = model.to_arrays()
    m, n = A.shape
    bounds = _highs_bounds(lower, upper)
    res, duals = _linprog(c, A, senses, b, bounds)
    iterations = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        return SolveResult(
            status=SolveStatus.OPTIMAL,
            objective=float(res.fun + model.objective_constant),
            primal=np.asarray(res.x, dtype=float),
            duals=duals,
            iterations=iterations,
            model=model,
        )
    if res.status == 3:
        return SolveResult(status=SolveStatus.UNBOUNDED, iterations=iterations, message=res.message, model=model)
    if res.status != 2:
        return SolveResult(status=SolveStatus.NUMERIC_FAILURE, iterations=iterations, message=res.message, model=model)

    # Explicit phase one: every row gets a+ and a-, minimise their sum.
    phase_A = np.hstack([A, np.eye(m), -np.eye(m)])
    phase_c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    phase_bounds = bounds + [(0.0, None)] * (2 * m)
    phase, phase_duals = _linprog(phase_c, phase_A, senses, b, phase_bounds)
    if phase.status != 0:
        return SolveResult(status=SolveStatus.NUMERIC_FAILURE, iterations=iterations, message=phase.message, model=model)
    return SolveResult(
        status=SolveStatus.INFEASIBLE,
        farkas=phase_duals,
        infeasibility=float(phase.fun),
        iterations=iterations + int(getattr(phase, "nit", 0) or 0),
        message=res.message,
        model=model,
    )


ENGINES = {"simplex": _solve_simplex, "highs": _solve_highs}


def solve(model: LinearModel, tolerances: Optional[Tolerances] = None, engine: str = "simplex") -> SolveResult:
    """Solve ``model`` with the named engine."""

    try:
        runner = ENGINES[engine]
    except KeyError:
        raise LPModelError(f"unknown LP engine {engine!r}") from None
    result = runner(model, tolerances or Tolerances())
    if result.status is not SolveStatus.OPTIMAL:
        LOGGER.debug("LP %s ended %s: %s", model.name, result.status.value, result.message)
    return result


# --------------------------------------------------------------------------
# LP text export

_NAME_PATTERN = re.compile(r"[^A-Za-z0-9_.]")


def _lp_name(name: str) -> str:
    cleaned = _NAME_PATTERN.sub("_", name)
    if not cleaned or cleaned[0].isdigit() or cleaned[0] == ".":
        cleaned = "v_" + cleaned
    return cleaned


def _lp_terms(coeffs: Mapping[int, float], names: List[str]) -> str:
    parts = []
    for j, value in coeffs.items():
        if value == 0.0:
            continue
        sign = "-" if value < 0 else "+"
        parts.append(f"{sign} {abs(value)!r} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def to_lp_format(model: LinearModel) -> str:
    """Render ``model`` as CPLEX LP text."""

    names = [_lp_name(v.name) for v in model.variables]
    lines = [f"\\ {model.name}"]
    if model.objective_constant:
        lines.append(f"\\ objective constant {model.objective_constant!r}")
    lines.append("Minimize")
    objective = {j: v.objective for j, v in enumerate(model.variables) if v.objective}
    lines.append(" obj: " + _lp_terms(objective, names))
    lines.append("Subject To")
    for constraint in model.constraints:
        sense = {"<=": "<=", ">=": ">=", "=": "="}[constraint.sense]
        lines.append(f" {_lp_name(constraint.name)}: {_lp_terms(constraint.coeffs, names)} {sense} {constraint.rhs!r}")
    lines.append("Bounds")
    for name, variable in zip(names, model.variables):
        lo = "-inf" if variable.lower == -math.inf else repr(variable.lower)
        up = "+inf" if variable.upper == math.inf else repr(variable.upper)
        if variable.lower == -math.inf and variable.upper == math.inf:
            lines.append(f" {name} free")
        else:
            lines.append(f" {lo} <= {name} <= {up}")
    lines.append("End")
    return "\n".join(lines) + "\n"


__all__ = [
    "Constraint",
    "LPModelError",
    "LinearModel",
    "SolveResult",
    "SolveStatus",
    "Tolerances",
    "Variable",
    "solve",
    "to_lp_format",
]
