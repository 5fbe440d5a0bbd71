"""Dense two-phase primal simplex for small equality-form linear programs.

Solves   min c.x   subject to   A x = b,  x >= 0.

The refocusing compiler produces tiny instances (tens of rows, at most a
few thousand columns), so a dense tableau with Bland's anti-cycling rule
is simpler and plenty fast.  Bland's rule guarantees finite termination;
the price is a few extra pivots, which is irrelevant at these sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "LPError",
    "LPInfeasibleError",
    "LPUnboundedError",
    "LPSolution",
    "solve_lp",
]

DEFAULT_TOL = 1e-9


class LPError(Exception):
    """Base class for linear-programming failures."""


class LPInfeasibleError(LPError):
    """No feasible point; ``rows`` holds indices of unsatisfiable constraints."""

    def __init__(self, rows: tuple[int, ...], residual: float):
        self.rows = rows
        self.residual = residual
        super().__init__(
            f"infeasible linear program: constraint rows {list(rows)} "
            f"cannot be met (phase-1 residual {residual:.3e})"
        )


class LPUnboundedError(LPError):
    """Objective decreases without bound along a feasible ray."""


@dataclass(frozen=True)
class LPSolution:
    x: NDArray
    objective: float
    basis: tuple[int, ...]


def _pivot(tab: NDArray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    for i in range(tab.shape[0]):
        if i != row and tab[i, col] != 0.0:
            tab[i] -= tab[i, col] * tab[row]


def _iterate(tab: NDArray, basis: list[int], n_cols: int, tol: float) -> None:
    """Run Bland-rule pivots until the objective row has no negative entry.

    ``tab`` carries the constraint rows followed by one reduced-cost row;
    the last column is the right-hand side.  Only the first ``n_cols``
    columns are eligible to enter the basis.
    """
    m = tab.shape[0] - 1
    while True:
        obj = tab[m, :n_cols]
        entering = -1
        for j in range(n_cols):
            if obj[j] < -tol:
                entering = j
                break
        if entering < 0:
            return
        # ratio test; ties broken by smallest basis variable index (Bland)
        best_ratio = np.inf
        leaving = -1
        for i in range(m):
            a = tab[i, entering]
            if a > tol:
                ratio = tab[i, -1] / a
                if ratio < best_ratio - tol or (
                    abs(ratio - best_ratio) <= tol
                    and (leaving < 0 or basis[i] < basis[leaving])
                ):
                    best_ratio = ratio
                    leaving = i
        if leaving < 0:
            raise LPUnboundedError(
                f"objective unbounded along column {entering}"
            )
        _pivot(tab, leaving, entering)
        basis[leaving] = entering


def solve_lp(
    c: NDArray,
    a: NDArray,
    b: NDArray,
    tol: float = DEFAULT_TOL,
) -> LPSolution:
    """Minimize ``c.x`` over ``a x = b``, ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    m, n = a.shape
    if c.shape != (n,):
        raise ValueError(f"cost vector length {c.shape} does not match {n} columns")
    if b.shape != (m,):
        raise ValueError(f"rhs length {b.shape[0]} does not match {m} rows")
    if m == 0:
        if np.any(c < -tol):
            raise LPUnboundedError("no constraints and a negative cost entry")
        return LPSolution(x=np.zeros(n), objective=0.0, basis=())

    a = a.copy()
    b = b.copy()
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0

    # phase 1: minimize the sum of artificial variables
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = a
    tab[:m, n : n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -a.sum(axis=0)
    tab[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    _iterate(tab, basis, n + m, tol)

    scale = max(1.0, float(np.abs(b).max()))
    residual = -tab[m, -1]
    if residual > tol * scale:
        bad = tuple(i for i in range(m) if (n + i) in basis
                    and tab[basis.index(n + i), -1] > tol * scale)
        raise LPInfeasibleError(bad if bad else tuple(range(m)), float(residual))

    # drive leftover zero-value artificials out of the basis
    keep_rows = list(range(m))
    for i in range(m):
        if basis[i] >= n:
            piv = -1
            for j in range(n):
                if abs(tab[i, j]) > tol:
                    piv = j
                    break
            if piv >= 0:
                _pivot(tab, i, piv)
                basis[i] = piv
            else:
                keep_rows.remove(i)  # redundant constraint row

    if len(keep_rows) < m:
        tab = tab[[*keep_rows, m]]
        basis = [basis[i] for i in keep_rows]
        m = len(keep_rows)

    # phase 2: true costs, artificial columns removed
    tab = np.concatenate([tab[:, :n], tab[:, -1:]], axis=1)
    tab[m, :n] = c
    tab[m, -1] = 0.0
    for i, bi in enumerate(basis):
        if abs(tab[m, bi]) > 0.0:
            tab[m] -= tab[m, bi] * tab[i]
    _iterate(tab, basis, n, tol)

    x = np.zeros(n)
    for i, bi in enumerate(basis):
        x[bi] = tab[i, -1]
    return LPSolution(x=x, objective=float(c @ x), basis=tuple(basis))
