"""Dense two-phase tableau simplex for equality-form problems.

Solves ``min c z  s.t.  A z = b, z >= 0``. Pricing is Dantzig's rule until a
run of degenerate pivots, then Bland's rule for the rest of the phase. The
tableau is refactorized from the original columns at a fixed pivot interval.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

LOGGER = logging.getLogger("alm_ssd.simplex")

DEGENERATE_SWITCH = 50
REFACTOR_EVERY = 50


@dataclass
class StandardResult:
    status: str
    z: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    objective: float = float("nan")
    farkas: Optional[np.ndarray] = None
    infeasibility: float = 0.0
    iterations: int = 0
    message: str = ""


class _NumericFailure(RuntimeError):
    pass


class _Unbounded(RuntimeError):
    pass


@dataclass
class _Phase:
    matrix: np.ndarray
    rhs: np.ndarray
    cost: np.ndarray
    basis: List[int]
    allowed: np.ndarray
    tableau: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)

    def refactor(self) -> None:
        basis_matrix = self.matrix[:, self.basis]
        self.tableau = np.linalg.solve(basis_matrix, self.matrix)
        self.values = np.linalg.solve(basis_matrix, self.rhs)
        self.values[np.abs(self.values) < 1e-13] = 0.0


def _run_phase(phase: _Phase, opt_tol: float, pivot_tol: float, budget: int) -> int:
    """Pivot ``phase`` to optimality; returns the pivot count."""

    phase.refactor()
    m, n = phase.tableau.shape
    degenerate_run = 0
    bland = False
    pivots = 0
    while True:
        basic = np.zeros(n, dtype=bool)
        basic[phase.basis] = True
        reduced = phase.cost - phase.cost[phase.basis] @ phase.tableau
        candidates = np.flatnonzero(phase.allowed & ~basic & (reduced < -opt_tol))
        if candidates.size == 0:
            return pivots
        if pivots >= budget:
            raise _NumericFailure(f"iteration limit {budget} reached")
        if bland:
            entering = int(candidates[0])
        else:
            entering = int(candidates[np.argmin(reduced[candidates])])
        column = phase.tableau[:, entering]
        rows = np.flatnonzero(column > pivot_tol)
        if rows.size == 0:
            raise _Unbounded(f"column {entering} has no positive pivot")
        ratios = phase.values[rows] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        leaving_row = int(min(ties, key=lambda r: phase.basis[r]))

        if best <= 1e-12:
            degenerate_run += 1
            if degenerate_run > DEGENERATE_SWITCH and not bland:
                LOGGER.debug("Switching to Bland's rule after %d degenerate pivots", degenerate_run)
                bland = True
        else:
            degenerate_run = 0

        pivot = column[leaving_row]
        phase.tableau[leaving_row] /= pivot
        phase.values[leaving_row] /= pivot
        factors = phase.tableau[:, entering].copy()
        factors[leaving_row] = 0.0
        phase.tableau -= np.outer(factors, phase.tableau[leaving_row])
        phase.values -= factors * phase.values[leaving_row]
        small = (phase.values < 0.0) & (phase.values > -1e-9)
        phase.values[small] = 0.0
        phase.basis[leaving_row] = entering
        pivots += 1
        if pivots % REFACTOR_EVERY == 0:
            phase.refactor()


def solve_standard(
    A: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    feas_tol: float = 1e-9,
    opt_tol: float = 1e-9,
    pivot_tol: float = 1e-11,
    max_iterations: int = 20000,
) -> StandardResult:
    """Two-phase simplex on ``min c z, A z = b, z >= 0``.

    Duals are the derivatives of the optimal value with respect to ``b``.
    When infeasible, ``farkas`` holds the same derivative of the phase-one
    value (sum of artificials) and ``infeasibility`` that value.
    """

    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if m == 0:
        if np.any(c < -opt_tol):
            return StandardResult(status="unbounded", message="no rows and a negative cost")
        return StandardResult(status="optimal", z=np.zeros(n), duals=np.zeros(0), objective=0.0)

    signs = np.where(b >= 0.0, 1.0, -1.0)
    matrix = np.hstack([A, np.diag(signs)])
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    phase_one = _Phase(
        matrix=matrix,
        rhs=b.copy(),
        cost=cost,
        basis=list(range(n, n + m)),
        allowed=np.ones(n + m, dtype=bool),
    )
    iterations = 0
    try:
        iterations += _run_phase(phase_one, opt_tol, pivot_tol, max_iterations)
        infeasibility = float(cost[phase_one.basis] @ phase_one.values)
        if infeasibility > feas_tol * max(1.0, float(np.abs(b).max())):
            certificate = np.linalg.solve(matrix[:, phase_one.basis].T, cost[phase_one.basis])
            return StandardResult(
                status="infeasible",
                farkas=certificate,
                infeasibility=infeasibility,
                iterations=iterations,
                message=f"phase one ended at {infeasibility:.3g}",
            )

        # Drive remaining artificials out of the basis; rows where that is
        # impossible are linearly dependent and are dropped.
        redundant: List[int] = []
        for row in range(m):
            if phase_one.basis[row] < n:
                continue
            entries = phase_one.tableau[row, :n]
            basic = set(phase_one.basis)
            choices = [j for j in np.flatnonzero(np.abs(entries) > 1e-9) if j not in basic]
            if not choices:
                redundant.append(row)
                continue
            j = int(max(choices, key=lambda k: abs(entries[k])))
            pivot = entries[j]
            phase_one.tableau[row] /= pivot
            phase_one.values[row] /= pivot
            factors = phase_one.tableau[:, j].copy()
            factors[row] = 0.0
            phase_one.tableau -= np.outer(factors, phase_one.tableau[row])
            phase_one.values -= factors * phase_one.values[row]
            phase_one.basis[row] = j

        keep = [row for row in range(m) if row not in redundant]
        phase_two = _Phase(
            matrix=A[keep],
            rhs=b[keep],
            cost=c,
            basis=[phase_one.basis[row] for row in keep],
            allowed=np.ones(n, dtype=bool),
        )
        iterations += _run_phase(phase_two, opt_tol, pivot_tol, max(max_iterations - iterations, 1))
        z = np.zeros(n)
        z[phase_two.basis] = np.maximum(phase_two.values, 0.0)
        kept_duals = np.linalg.solve(phase_two.matrix[:, phase_two.basis].T, c[phase_two.basis])
        duals = np.zeros(m)
        duals[keep] = kept_duals
        return StandardResult(
            status="optimal",
            z=z,
            duals=duals,
            objective=float(c @ z),
            iterations=iterations,
        )
    except _Unbounded as exc:
        return StandardResult(status="unbounded", iterations=iterations, message=str(exc))
    except (_NumericFailure, np.linalg.LinAlgError) as exc:
        return StandardResult(status="numeric-failure", iterations=iterations, message=str(exc))


__all__ = ["StandardResult", "solve_standard"]
