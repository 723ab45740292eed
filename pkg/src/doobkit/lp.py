"""Dense two-phase simplex kernel.

Minimizes a linear objective over equality and >= constraints with
variables bounded below by 0 (selected variables may be free).  Bland's
smallest-index rule is the default pivot rule, so the method terminates on
degenerate desk-scale problems; a Dantzig most-negative rule is available
as a fast path and falls back to Bland if it fails to make progress.

The tableau keeps the artificial columns through both phases, which makes
the dual vector readable off the final tableau: the artificial block holds
the running basis inverse.  Every optimal outcome carries its recovered
duals and the residuals of the primal, weak-duality and complementary
slackness checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = ["LinearProgram", "LpOutcome", "NumericalBreakdown", "solve", "feasible_point"]

PIVOT_TOL = 1e-12
FEAS_TOL = 1e-9
_MAX_ITERS = 50_000


class NumericalBreakdown(RuntimeError):
    """No admissible pivot above the stability threshold."""


@dataclass(frozen=True)
class LinearProgram:
    """min objective . x  s.t.  a_eq x = b_eq,  a_ge x >= b_ge,  x >= 0.

    Variables listed in ``free_vars`` are unbounded below (handled by a
    difference-of-nonnegatives split).
    """

    objective: np.ndarray
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    a_ge: Optional[np.ndarray] = None
    b_ge: Optional[np.ndarray] = None
    free_vars: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.objective, dtype=float))
        object.__setattr__(self, "objective", c)
        n = c.shape[0]
        for name in ("a_eq", "a_ge"):
            mat = getattr(self, name)
            if mat is not None:
                mat = np.atleast_2d(np.asarray(mat, dtype=float))
                if mat.shape[1] != n:
                    raise ValueError(f"{name} has {mat.shape[1]} columns for {n} variables")
                object.__setattr__(self, name, mat)
        for mname, vname in (("a_eq", "b_eq"), ("a_ge", "b_ge")):
            mat, vec = getattr(self, mname), getattr(self, vname)
            if (mat is None) != (vec is None):
                raise ValueError(f"{mname} and {vname} must be given together")
            if vec is not None:
                vec = np.atleast_1d(np.asarray(vec, dtype=float))
                if vec.shape[0] != mat.shape[0]:
                    raise ValueError(f"{vname} length does not match {mname}")
                object.__setattr__(self, vname, vec)
        pieces = [c] + [m for m in (self.a_eq, self.b_eq, self.a_ge, self.b_ge) if m is not None]
        if any(not np.all(np.isfinite(p)) for p in pieces):
            raise ValueError("LP data must be finite")
        if any(not 0 <= j < n for j in self.free_vars):
            raise ValueError("free variable index out of range")

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True)
class LpOutcome:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: Optional[np.ndarray]
    value: Optional[float]
    y_eq: Optional[np.ndarray] = None
    y_ge: Optional[np.ndarray] = None
    primal_residual: float = 0.0
    duality_gap: float = 0.0
    comp_slackness: float = 0.0
    infeasibility: float = 0.0  # phase-1 objective when status == "infeasible"


class _Tableau:
    """Simplex state: rows of [A | b] in basis-canonical form."""

    def __init__(self, a: np.ndarray, b: np.ndarray, verbose: bool) -> None:
        m, n = a.shape
        # flip rows to make rhs nonnegative before adding artificials
        flip = b < 0
        a = np.where(flip[:, None], -a, a)
        b = np.where(flip, -b, b)
        self.row_sign = np.where(flip, -1.0, 1.0)
        self.n_real = n
        self.n_rows = m
        self.art = list(range(n, n + m))
        self.tab = np.hstack([a, np.eye(m), b[:, None]])
        self.basis = list(self.art)
        self.verbose = verbose

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        cb = cost[self.basis]
        return cost - cb @ self.tab[:, :-1]

    def _pivot(self, row: int, col: int) -> None:
        self.tab[row] /= self.tab[row, col]
        for i in range(self.n_rows):
            if i != row and self.tab[i, col] != 0.0:
                self.tab[i] -= self.tab[i, col] * self.tab[row]
        self.basis[row] = col
        if self.verbose:
            print(f"pivot row={row} col={col}\n{self.tab}")

    def _choose_row(self, col: int) -> int:
        rhs = self.tab[:, -1]
        colvals = self.tab[:, col]
        candidates = np.where(colvals > PIVOT_TOL)[0]
        if candidates.size == 0:
            if np.any(colvals > 0):
                raise NumericalBreakdown(
                    f"all candidate pivots in column {col} are below {PIVOT_TOL}"
                )
            return -1  # unbounded direction
        ratios = rhs[candidates] / colvals[candidates]
        best = ratios.min()
        ties = candidates[ratios <= best + PIVOT_TOL]
        # Bland tie-break: leave the smallest basis index
        return int(min(ties, key=lambda i: self.basis[i]))

    def run(self, cost: np.ndarray, eligible: np.ndarray, pivot_rule: str) -> str:
        """Iterate to optimality of ``cost``; returns "optimal" or "unbounded"."""
        rule = pivot_rule
        for _ in range(_MAX_ITERS):
            red = self._reduced_costs(cost)
            red[~eligible] = 0.0
            neg = np.where(red < -PIVOT_TOL)[0]
            if neg.size == 0:
                return "optimal"
            if rule == "dantzig":
                col = int(neg[np.argmin(red[neg])])
            else:
                col = int(neg[0])
            row = self._choose_row(col)
            if row < 0:
                return "unbounded"
            self._pivot(row, col)
        if rule == "dantzig":
            return self.run(cost, eligible, "bland")
        raise NumericalBreakdown("simplex failed to terminate")

    def solution(self) -> np.ndarray:
        x = np.zeros(self.tab.shape[1] - 1)
        for i, j in enumerate(self.basis):
            x[j] = self.tab[i, -1]
        return x

    def duals(self, cost: np.ndarray) -> np.ndarray:
        # artificial columns started as the identity, so they now hold B^{-1}
        cb = cost[self.basis]
        y = cb @ self.tab[:, self.art]
        return y * self.row_sign


def _standardize(lp: LinearProgram):
    """Assemble the standard-form matrix with free-variable splits and slacks."""
    n = lp.n_vars
    free = sorted(set(lp.free_vars))
    n_split = len(free)
    rows = []
    rhs = []
    n_ge = 0 if lp.a_ge is None else lp.a_ge.shape[0]
    n_eq = 0 if lp.a_eq is None else lp.a_eq.shape[0]
    width = n + n_split + n_ge
    if n_eq:
        for a, b in zip(lp.a_eq, lp.b_eq):
            row = np.zeros(width)
            row[:n] = a
            row[n : n + n_split] = -a[free]
            rows.append(row)
            rhs.append(b)
    if n_ge:
        for k, (a, b) in enumerate(zip(lp.a_ge, lp.b_ge)):
            row = np.zeros(width)
            row[:n] = a
            row[n : n + n_split] = -a[free]
            row[n + n_split + k] = -1.0
            rows.append(row)
            rhs.append(b)
    a_std = np.array(rows) if rows else np.zeros((0, width))
    b_std = np.array(rhs) if rhs else np.zeros(0)
    c_std = np.zeros(width)
    c_std[:n] = lp.objective
    c_std[n : n + n_split] = -lp.objective[free]
    return a_std, b_std, c_std, free, n_ge, n_eq


def _recover_x(x_std: np.ndarray, n: int, free: list[int]) -> np.ndarray:
    x = x_std[:n].copy()
    for k, j in enumerate(free):
        x[j] -= x_std[n + k]
    return x


def solve(lp: LinearProgram, pivot_rule: str = "bland", verbose: bool = False) -> LpOutcome:
    """Two-phase simplex solve of ``lp``.

    Raises :class:`NumericalBreakdown` when no numerically safe pivot
    exists; all other failure modes come back in the outcome status.
    """
    if pivot_rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pivot rule {pivot_rule!r}")
    a_std, b_std, c_std, free, n_ge, n_eq = _standardize(lp)
    n = lp.n_vars

    if a_std.shape[0] == 0:
        # no constraints: x = 0 is optimal unless the objective points downhill
        bounded = [j for j in range(n) if j not in set(free)]
        if np.any(lp.objective[bounded] < 0) or any(lp.objective[j] != 0 for j in free):
            return LpOutcome(status="unbounded", x=None, value=None)
        return LpOutcome(status="optimal", x=np.zeros(n), value=0.0)

    t = _Tableau(a_std, b_std, verbose)
    width = a_std.shape[1]
    total = width + t.n_rows

    phase1_cost = np.zeros(total)
    phase1_cost[width:] = 1.0
    eligible1 = np.ones(total, dtype=bool)
    status = t.run(phase1_cost, eligible1, pivot_rule)
    infeas = float(phase1_cost[t.basis] @ t.tab[:, -1])
    if status != "optimal" or infeas > FEAS_TOL:
        return LpOutcome(status="infeasible", x=None, value=None, infeasibility=max(infeas, 0.0))

    # drive leftover artificials out of the basis with degenerate pivots so
    # they cannot drift positive in phase 2; an all-zero row over the real
    # columns is a redundant constraint and its artificial can never move
    for i in range(t.n_rows):
        if t.basis[i] >= width:
            cols = np.where(np.abs(t.tab[i, :width]) > PIVOT_TOL)[0]
            if cols.size:
                t._pivot(i, int(cols[0]))

    phase2_cost = np.zeros(total)
    phase2_cost[:width] = c_std
    eligible2 = np.ones(total, dtype=bool)
    eligible2[width:] = False  # artificials may leave but never re-enter
    status = t.run(phase2_cost, eligible2, pivot_rule)
    if status == "unbounded":
        return LpOutcome(status="unbounded", x=None, value=None)

    x_std = t.solution()[:width]
    x = _recover_x(x_std, n, free)
    value = float(lp.objective @ x)

    y = t.duals(phase2_cost)
    y_eq = y[:n_eq] if n_eq else np.zeros(0)
    y_ge = y[n_eq:] if n_ge else np.zeros(0)

    primal_residual = 0.0
    dual_obj = 0.0
    comp = 0.0
    reduced = lp.objective.astype(float).copy()
    if n_eq:
        r = lp.a_eq @ x - lp.b_eq
        primal_residual = max(primal_residual, float(np.abs(r).max()))
        dual_obj += float(lp.b_eq @ y_eq)
        reduced -= lp.a_eq.T @ y_eq
    if n_ge:
        slack = lp.a_ge @ x - lp.b_ge
        primal_residual = max(primal_residual, float(max(0.0, -slack.min(initial=0.0))))
        dual_obj += float(lp.b_ge @ y_ge)
        reduced -= lp.a_ge.T @ y_ge
        comp = max(comp, float(np.abs(y_ge * slack).max(initial=0.0)))
    bounded = [j for j in range(n) if j not in set(free)]
    if bounded:
        primal_residual = max(primal_residual, float(max(0.0, -x[bounded].min(initial=0.0))))
        comp = max(comp, float(np.abs(x[bounded] * reduced[bounded]).max(initial=0.0)))

    return LpOutcome(
        status="optimal",
        x=x,
        value=value,
        y_eq=y_eq,
        y_ge=y_ge,
        primal_residual=primal_residual,
        duality_gap=float(value - dual_obj),
        comp_slackness=comp,
    )


def feasible_point(
    a_eq: Optional[np.ndarray] = None,
    b_eq: Optional[np.ndarray] = None,
    a_ge: Optional[np.ndarray] = None,
    b_ge: Optional[np.ndarray] = None,
    n_vars: Optional[int] = None,
    free_vars: Sequence[int] = (),
) -> Optional[np.ndarray]:
    """Phase-one feasibility: a point of the system, or None."""
    if n_vars is None:
        if a_eq is not None:
            n_vars = np.atleast_2d(a_eq).shape[1]
        elif a_ge is not None:
            n_vars = np.atleast_2d(a_ge).shape[1]
        else:
            raise ValueError("cannot infer the number of variables")
    lp = LinearProgram(
        objective=np.zeros(n_vars),
        a_eq=a_eq,
        b_eq=b_eq,
        a_ge=a_ge,
        b_ge=b_ge,
        free_vars=tuple(free_vars),
    )
    out = solve(lp)
    return out.x if out.status == "optimal" else None
