"""Supermartingale classification and the uniform Doob decomposition.

A process is a supermartingale for a whole family of measures when its
one-step conditional drift is nonpositive under every extreme; convexity
of conditional expectations in the measure extends that to every mixture.
Such a process decomposes as ``f = M - g`` with ``M`` a martingale under
every measure of the family and ``g`` non-decreasing from zero exactly
when each step admits a unit-conditional-expectation certificate: an
F_m-measurable ``xi0 >= f_m / f_{m-1}`` whose conditional expectation given
F_{m-1} equals one under every extreme.

Two certificate constructions are provided.  The LP path solves the
feasibility program cell by cell and always finds a certificate when one
exists.  The alpha path follows the closed-form recipe: normalize the
one-step ratio, then dominate it by ``1 + alpha * (increment of a density
martingale)``.  The alpha path silently presumes that the density
martingale has zero conditional drift under *every* extreme, which fails
for general families (see :mod:`doobkit.claims`), so the construction
re-verifies the unit-conditional property before emitting a certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .lp import LinearProgram, solve
from .space import (
    DEFAULT_TOL,
    STRICT_TOL,
    AdaptedProcess,
    FilteredSpace,
    Measure,
    MeasureFamily,
    ShapeMismatch,
    cond_exp_cells,
    contract,
    mixture,
    rn_bounds,
)

__all__ = [
    "A0Element",
    "Classification",
    "MartingaleDelta",
    "Xi0Step",
    "StepFailure",
    "OptionalDecomposition",
    "AlphaInterval",
    "GapBoundReport",
    "CheckResult",
    "DecompositionReport",
    "CompletenessReport",
    "NotInA0",
    "NotSupermartingale",
    "NotLocallyRegular",
    "PreconditionFailed",
    "classify",
    "a0_membership",
    "make_a0_element",
    "find_a0_element",
    "uniform_gap_bound",
    "martingale_increments",
    "alpha_interval",
    "xi0_step_alpha",
    "xi0_step_lp",
    "one_step_ratio_cells",
    "optional_decompose",
    "verify_decomposition",
    "completeness_check",
]


class NotInA0(ValueError):
    """The random variable is not a unit-expectation density for the family."""


class NotSupermartingale(ValueError):
    """Decomposition was requested for a process that is not a nonnegative
    supermartingale for the family."""


class NotLocallyRegular(ValueError):
    """No unit-conditional certificate exists at some step."""

    def __init__(self, failure: "StepFailure") -> None:
        super().__init__(f"step {failure.m}: {failure.reason}")
        self.failure = failure


class PreconditionFailed(ValueError):
    """A stated hypothesis of the operation does not hold on the input."""


@dataclass(frozen=True, eq=False)
class A0Element:
    """Nonnegative random variable with expectation one under every extreme."""

    xi: np.ndarray

    def __post_init__(self) -> None:
        xi = np.array(self.xi, dtype=float)  # copy before freezing
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        if np.any(xi < -STRICT_TOL) or not np.all(np.isfinite(xi)):
            raise NotInA0("element must be nonnegative and finite")


@dataclass(frozen=True)
class Classification:
    """Verdict of the one-step supermartingale test over all extremes."""

    kind: str  # "martingale" | "supermartingale-strict" | "not-supermartingale"
    worst_violation: tuple[int, int, int, float]  # (time, cell, extreme, E - f_prev)

    @property
    def is_supermartingale(self) -> bool:
        return self.kind != "not-supermartingale"


@dataclass(frozen=True, eq=False)
class MartingaleDelta:
    """One-step increment of a conditional-expectation process of a density.

    ``increments[j]`` is the time-``m`` cell value minus its parent's
    time-``m-1`` value, computed under one explicit base measure.  The
    split records which cells move down (``neg_cells``, increment <= 0)
    and up (``pos_cells``, increment > 0); together they cover every cell.
    The increments have zero conditional mean under the base measure; the
    same under *other* extremes is exactly the contested invariance and is
    never assumed here.
    """

    m: int
    increments: np.ndarray
    neg_cells: tuple[int, ...]
    pos_cells: tuple[int, ...]
    base_index: int


@dataclass(frozen=True, eq=False)
class Xi0Step:
    """Per-step certificate: F_m-measurable, unit conditional expectation
    under every extreme, dominates the one-step ratio."""

    m: int
    xi0: np.ndarray  # per atom, constant on time-m cells
    method: str  # "alpha-path" | "lp-path"
    alpha: Optional[float] = None


@dataclass(frozen=True, eq=False)
class StepFailure:
    """Why a certificate could not be produced at one step."""

    m: int
    reason: str
    cell: Optional[int] = None
    certificate: Optional[float] = None


@dataclass(frozen=True, eq=False)
class OptionalDecomposition:
    """f = martingale - compensator, with the per-step certificates used."""

    martingale: AdaptedProcess
    compensator: AdaptedProcess
    steps: tuple[Xi0Step, ...]


@dataclass(frozen=True)
class AlphaInterval:
    """Feasible scalars alpha with ``values <= 1 + alpha * increments``."""

    lower: float
    upper: float
    preferred: Optional[float]

    @property
    def empty(self) -> bool:
        return self.preferred is None

    def contains(self, alpha: float, tol: float = STRICT_TOL) -> bool:
        return (not self.empty) and self.lower - tol <= alpha <= self.upper + tol


@dataclass(frozen=True)
class GapBoundReport:
    """Result of propagating a one-measure drift gap to sampled mixtures."""

    constant: float
    l: float
    L: float
    eps_bar: float
    n_samples: int
    max_violation: float
    verified: bool


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_violation: float
    passed: bool


@dataclass(frozen=True)
class DecompositionReport:
    checks: tuple[CheckResult, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "status": "ok" if self.ok else "fail",
            "checks": [
                {"name": c.name, "max_violation": c.max_violation, "pass": c.passed}
                for c in self.checks
            ],
        }


@dataclass(frozen=True)
class CompletenessReport:
    """Diagnostic: how close the two-point contracted measures come to the
    hull of the family's contractions.

    Finitely generated strictly positive families contract to strictly
    positive vectors, so a two-point measure can at best sit within
    tolerance of the hull boundary; the fraction is a diagnostic, not a
    certificate.
    """

    level: int
    fraction_inside: float
    pairs: tuple[tuple[int, int, float], ...]  # (neg cell, pos cell, hull distance)
    vacuous: bool


# ---------------------------------------------------------------------------
# classification and the density set


def classify(f: AdaptedProcess, family: MeasureFamily, tol: float = DEFAULT_TOL) -> Classification:
    """One-step drift test under every extreme.

    Testing extremes suffices: the conditional expectation under a mixture
    is a cellwise convex combination of the extremes' conditional
    expectations, so no mixture can violate where no extreme does.
    """
    space = family.space
    if f.space is not space and f.space != space:
        raise ShapeMismatch("process and family live on different spaces")
    worst = (-np.inf, 0, 0, 0)
    max_abs = 0.0
    for m in range(1, space.horizon + 1):
        fm = f.at_atoms(m)
        prev = f.at_cells(m - 1)
        for i, p in enumerate(family):
            defect = cond_exp_cells(space, fm, p, m - 1) - prev
            j = int(np.argmax(defect))
            if defect[j] > worst[0]:
                worst = (defect[j], m, j, i)
            max_abs = max(max_abs, float(np.abs(defect).max()))
    violation = (worst[1], worst[2], worst[3], float(worst[0]))
    if worst[0] > tol:
        kind = "not-supermartingale"
    elif max_abs <= tol:
        kind = "martingale"
    else:
        kind = "supermartingale-strict"
    return Classification(kind=kind, worst_violation=violation)


def a0_membership(family: MeasureFamily, xi: np.ndarray, tol: float = STRICT_TOL) -> bool:
    """True iff ``xi`` is nonnegative with expectation one under every
    extreme (and then, by linearity, under every mixture)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (family.space.n_atoms,):
        return False
    if np.any(xi < -tol):
        return False
    return all(abs(p.expect(xi) - 1.0) <= tol for p in family)


def make_a0_element(family: MeasureFamily, xi: np.ndarray) -> A0Element:
    """Validated construction; raises :class:`NotInA0` on failure."""
    if not a0_membership(family, xi):
        raise NotInA0("expectation is not one under every extreme")
    return A0Element(xi=np.asarray(xi, dtype=float))


def find_a0_element(
    family: MeasureFamily, objective: Optional[np.ndarray] = None
) -> A0Element:
    """An element of the unit-expectation density set, by linear programming.

    With an objective, maximizes its inner product over the set (a vertex);
    without one, maximizes the smallest entry, which picks an interior
    point.  The constant 1 is always feasible, so the program never fails.
    """
    space = family.space
    n = space.n_atoms
    a_eq = np.vstack([p.probs for p in family])
    b_eq = np.ones(len(family))
    if objective is None:
        # variables (xi, t): maximize t subject to xi - t >= 0
        c = np.zeros(n + 1)
        c[-1] = -1.0
        a_eq_ext = np.hstack([a_eq, np.zeros((len(family), 1))])
        a_ge = np.hstack([np.eye(n), -np.ones((n, 1))])
        out = solve(LinearProgram(c, a_eq=a_eq_ext, b_eq=b_eq, a_ge=a_ge, b_ge=np.zeros(n)))
        xi = out.x[:n]
    else:
        obj = np.asarray(objective, dtype=float)
        if obj.shape != (n,):
            raise ShapeMismatch("objective must have one entry per atom")
        out = solve(LinearProgram(-obj, a_eq=a_eq, b_eq=b_eq))
        xi = out.x
    if out.status != "optimal":  # pragma: no cover - xi == 1 is always feasible
        raise RuntimeError(f"density search unexpectedly {out.status}")
    xi = np.maximum(xi, 0.0)
    resid = a_eq @ xi - b_eq
    if np.abs(resid).max() > 1e-13:
        # one least-squares polish step keeps the unit-expectation identity tight
        xi = xi - np.linalg.lstsq(a_eq, resid, rcond=None)[0]
        xi = np.maximum(xi, 0.0)
    return make_a0_element(family, xi)


# ---------------------------------------------------------------------------
# drift-gap propagation


def uniform_gap_bound(
    f: AdaptedProcess,
    family: MeasureFamily,
    m0: int,
    phi: np.ndarray,
    n_samples: int = 100,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> GapBoundReport:
    """Propagate a drift gap under the first extreme to nearby mixtures.

    Requires ``f_{m0-1} - E{f_m0 | F_{m0-1}} >= phi >= 0`` under the first
    extreme, with ``phi`` measurable at time ``m0 - 1``.  Then every
    measure of the form ``(1 - a) P_1 + a P_2`` with ``a <= L/(1+L)``
    keeps a gap of at least ``l/(1+L) * phi``; the report records the
    worst slack over sampled such measures.
    """
    space = family.space
    if not 1 <= m0 <= space.horizon:
        raise PreconditionFailed(f"m0 must be in 1..{space.horizon}")
    phi = np.asarray(phi, dtype=float)
    try:
        phi_cells = space.restrict(m0 - 1, phi, atol=0.0)
    except ShapeMismatch as exc:
        raise PreconditionFailed(f"phi is not measurable at time {m0 - 1}: {exc}") from exc
    if np.any(phi_cells < -STRICT_TOL):
        raise PreconditionFailed("phi must be nonnegative")
    p1 = family.extremes[0]
    fm_atoms = f.at_atoms(m0)
    gap1 = f.at_cells(m0 - 1) - cond_exp_cells(space, fm_atoms, p1, m0 - 1)
    if np.any(gap1 < phi_cells - STRICT_TOL):
        raise PreconditionFailed("drift gap under the first extreme is below phi")

    lo, hi = rn_bounds(family)
    eps_bar = hi / (1.0 + hi)
    constant = lo / (1.0 + hi)
    rng = np.random.default_rng(seed)
    worst = 0.0
    k = len(family)
    for _ in range(n_samples):
        a = float(rng.uniform(0.0, eps_bar))
        w = rng.dirichlet(np.ones(k))
        p2 = mixture(family, w)
        q = Measure((1.0 - a) * p1.probs + a * p2.probs)
        gap_q = f.at_cells(m0 - 1) - cond_exp_cells(space, fm_atoms, q, m0 - 1)
        worst = max(worst, float((constant * phi_cells - gap_q).max()))
    return GapBoundReport(
        constant=constant,
        l=lo,
        L=hi,
        eps_bar=eps_bar,
        n_samples=n_samples,
        max_violation=worst,
        verified=worst <= tol,
    )


# ---------------------------------------------------------------------------
# certificates


def martingale_increments(
    xi0: A0Element, family: MeasureFamily, base_index: int, n: int
) -> MartingaleDelta:
    """Cellwise increments of the conditional expectations of ``xi0`` under
    an explicitly chosen extreme, with the down/up cell split."""
    if n < 1:
        raise ValueError("increments need n >= 1")
    space = family.space
    base = family.extremes[base_index]
    now = cond_exp_cells(space, xi0.xi, base, n)
    prev = cond_exp_cells(space, xi0.xi, base, n - 1)
    d = now - prev[space.parent_cell(n)]
    neg = tuple(int(j) for j in range(d.shape[0]) if d[j] <= 0.0)
    pos = tuple(int(j) for j in range(d.shape[0]) if d[j] > 0.0)
    return MartingaleDelta(
        m=n, increments=d, neg_cells=neg, pos_cells=pos, base_index=base_index
    )


def alpha_interval(f_normalized: np.ndarray, increments: np.ndarray) -> AlphaInterval:
    """All alpha with ``f_normalized <= 1 + alpha * increments`` cellwise.

    Cells with positive increment force a lower bound, cells with negative
    increment a cap, and zero-increment cells must already sit at or below
    one.  The preferred point is the cap (the closed-form choice) whenever
    the values on down-moving cells do not exceed one.
    """
    vals = np.asarray(f_normalized, dtype=float)
    d = np.asarray(increments, dtype=float)
    if vals.shape != d.shape:
        raise ShapeMismatch("values and increments must align cell by cell")
    lower, upper = -np.inf, np.inf
    feasible = True
    for v, di in zip(vals, d):
        if di > 0.0:
            lower = max(lower, (v - 1.0) / di)
        elif di < 0.0:
            upper = min(upper, (1.0 - v) / (-di))
        elif v > 1.0 + STRICT_TOL:
            feasible = False
    if not feasible or lower > upper + STRICT_TOL:
        return AlphaInterval(lower=lower, upper=upper, preferred=None)
    if np.isfinite(upper):
        preferred = upper
    elif lower <= 0.0:
        preferred = 0.0
    else:
        preferred = lower
    preferred = float(min(max(preferred, lower), upper))
    return AlphaInterval(lower=lower, upper=upper, preferred=preferred)


def one_step_ratio_cells(f: AdaptedProcess, m: int) -> np.ndarray:
    """f_m / f_{m-1} per time-``m`` cell.

    On cells whose parent value is zero a nonnegative supermartingale is
    forced to stay at zero, and the ratio is defined as 1 there so the
    certificate inequalities stay meaningful.
    """
    space = f.space
    prev = f.at_cells(m - 1)[space.parent_cell(m)]
    now = f.at_cells(m)
    out = np.ones_like(now)
    nz = prev != 0.0
    out[nz] = now[nz] / prev[nz]
    return out


def _check_unit_conditional(
    space: FilteredSpace,
    family: MeasureFamily,
    xi0_atoms: np.ndarray,
    m: int,
    tol: float,
) -> tuple[bool, int, float]:
    """Worst deviation of E{xi0 | F_{m-1}} from one over all extremes."""
    worst = 0.0
    worst_i = 0
    for i, p in enumerate(family):
        dev = float(np.abs(cond_exp_cells(space, xi0_atoms, p, m - 1) - 1.0).max())
        if dev > worst:
            worst, worst_i = dev, i
    return worst <= tol, worst_i, worst


def xi0_step_alpha(
    f: AdaptedProcess,
    xi0: A0Element,
    family: MeasureFamily,
    m: int,
    base_index: int = 0,
    tol: float = DEFAULT_TOL,
) -> Union[Xi0Step, StepFailure]:
    """Closed-form certificate ``1 + alpha * increment`` at step ``m``.

    The ratio is normalized per predecessor cell by the largest conditional
    expectation over the extremes (the cellwise refinement of the global
    normalization), the feasible alpha set is intersected over predecessor
    cells, and the resulting candidate is accepted only if its conditional
    expectation is one under every extreme: the increment process is only
    guaranteed driftless under the base measure.
    """
    space = family.space
    ratio = one_step_ratio_cells(f, m)
    sup_cells = np.vstack(
        [cond_exp_cells(space, space.expand(m, ratio), p, m - 1) for p in family]
    ).max(axis=0)
    delta = martingale_increments(xi0, family, base_index=base_index, n=m)
    parent = space.parent_cell(m)

    lower, upper = -np.inf, np.inf
    feasible = True
    for b in range(space.n_cells(m - 1)):
        children = np.where(parent == b)[0]
        s = sup_cells[b]
        norm = ratio[children] / s if s > 0.0 else np.zeros(children.shape[0])
        iv = alpha_interval(norm, delta.increments[children])
        lower = max(lower, iv.lower)
        upper = min(upper, iv.upper)
        if iv.preferred is None:
            feasible = False
    if not feasible or lower > upper + STRICT_TOL:
        return StepFailure(m=m, reason="empty alpha interval")
    if np.isfinite(upper):
        alpha = upper
    elif lower <= 0.0:
        alpha = 0.0
    else:
        alpha = lower
    alpha = float(min(max(alpha, lower), upper))

    xi0_atoms = 1.0 + alpha * space.expand(m, delta.increments)
    ok, bad_i, dev = _check_unit_conditional(space, family, xi0_atoms, m, tol)
    if not ok:
        return StepFailure(
            m=m,
            reason=f"conditional expectation is {1 + dev:.12g}-ish under extreme {bad_i}, not 1",
            certificate=dev,
        )
    if np.any(xi0_atoms < space.expand(m, ratio) - tol):
        return StepFailure(m=m, reason="candidate does not dominate the one-step ratio")
    return Xi0Step(m=m, xi0=xi0_atoms, method="alpha-path", alpha=alpha)


def xi0_step_lp(
    f: AdaptedProcess,
    family: MeasureFamily,
    m: int,
    tol: float = DEFAULT_TOL,
) -> Union[Xi0Step, StepFailure]:
    """Certificate at step ``m`` by cellwise linear programming.

    Per predecessor cell: find values on the child cells, at least the
    one-step ratio, whose conditional expectation is one under every
    extreme.  Feasibility at every cell of every step is equivalent to the
    existence of the decomposition.  The constant 1 is returned outright
    when it is feasible; otherwise the entry sum is minimized as a
    deterministic tie-break.
    """
    space = family.space
    ratio = one_step_ratio_cells(f, m)
    parent = space.parent_cell(m)
    values = np.empty_like(ratio)
    for b in range(space.n_cells(m - 1)):
        children = np.where(parent == b)[0]
        r = ratio[children]
        if r.max() <= 1.0 + 1e-13:
            values[children] = 1.0
            continue
        cond = np.vstack(
            [
                [p.probs[list(space.cells(m)[c])].sum() for c in children]
                for p in family
            ]
        )
        cond = cond / cond.sum(axis=1, keepdims=True)
        out = solve(
            LinearProgram(
                objective=np.ones(children.shape[0]),
                a_eq=cond,
                b_eq=np.ones(len(family)),
                a_ge=np.eye(children.shape[0]),
                b_ge=r,
            )
        )
        if out.status != "optimal":
            return StepFailure(
                m=m,
                reason=f"no unit-conditional dominator over cell {b} at time {m - 1}",
                cell=b,
                certificate=out.infeasibility if out.status == "infeasible" else None,
            )
        values[children] = out.x
    xi0_atoms = space.expand(m, values)
    ok, bad_i, dev = _check_unit_conditional(space, family, xi0_atoms, m, tol)
    if not ok:  # pragma: no cover - the LP enforces these equalities
        return StepFailure(m=m, reason=f"LP residual {dev} under extreme {bad_i}", certificate=dev)
    return Xi0Step(m=m, xi0=xi0_atoms, method="lp-path", alpha=None)


# ---------------------------------------------------------------------------
# decomposition


def optional_decompose(
    f: AdaptedProcess,
    family: MeasureFamily,
    strategy: str = "auto",
    tol: float = DEFAULT_TOL,
) -> OptionalDecomposition:
    """Split a nonnegative family-supermartingale into martingale minus
    non-decreasing compensator.

    Strategies: ``"lp"`` uses the cellwise LP at every step; ``"alpha-with-xi0"``
    uses the closed-form path seeded with an interior density element;
    ``"auto"`` tries the closed form and falls back to the LP per step.
    Raises :class:`NotSupermartingale` or :class:`NotLocallyRegular`.
    """
    if strategy not in ("lp", "alpha-with-xi0", "auto"):
        raise ValueError(f"unknown strategy {strategy!r}")
    space = family.space
    lowest = min(float(f.at_cells(m).min()) for m in range(space.horizon + 1))
    cls = classify(f, family, tol=tol)
    if lowest < -tol or not cls.is_supermartingale:
        raise NotSupermartingale(
            f"classify: {cls.kind}, min value {lowest}; decomposition needs a "
            "nonnegative supermartingale"
        )

    seed_xi0: Optional[A0Element] = None
    if strategy in ("alpha-with-xi0", "auto"):
        seed_xi0 = find_a0_element(family)

    steps: list[Xi0Step] = []
    for m in range(1, space.horizon + 1):
        step: Union[Xi0Step, StepFailure]
        if strategy == "lp":
            step = xi0_step_lp(f, family, m, tol=tol)
        elif strategy == "alpha-with-xi0":
            step = xi0_step_alpha(f, seed_xi0, family, m, tol=tol)
        else:
            step = xi0_step_alpha(f, seed_xi0, family, m, tol=tol)
            if isinstance(step, StepFailure):
                step = xi0_step_lp(f, family, m, tol=tol)
        if isinstance(step, StepFailure):
            raise NotLocallyRegular(step)
        steps.append(step)

    mart_levels = [f.at_atoms(0)]
    for step in steps:
        prev_f = f.at_atoms(step.m - 1)
        mart_levels.append(mart_levels[-1] + prev_f * (step.xi0 - 1.0))
    comp_levels = [mart_levels[m] - f.at_atoms(m) for m in range(space.horizon + 1)]
    martingale = AdaptedProcess.from_atom_values(space, mart_levels)
    compensator = AdaptedProcess.from_atom_values(space, comp_levels)
    return OptionalDecomposition(
        martingale=martingale, compensator=compensator, steps=tuple(steps)
    )


def verify_decomposition(
    f: AdaptedProcess,
    decomposition: OptionalDecomposition,
    family: MeasureFamily,
    tol: float = DEFAULT_TOL,
    n_mixtures: int = 20,
    seed: int = 0,
) -> DecompositionReport:
    """Re-derive every property the decomposition promises; never raises.

    Checks reconstruction, the compensator's start and monotonicity, the
    martingale property under the extremes and sampled mixtures, the match
    between one-step drift and expected compensator growth, and that the
    compensator increments recenter to zero under each extreme.
    """
    space = family.space
    mart, comp = decomposition.martingale, decomposition.compensator
    checks: list[CheckResult] = []

    def add(name: str, violation: float, bound: float = tol) -> None:
        checks.append(CheckResult(name=name, max_violation=float(violation), passed=violation <= bound))

    try:
        recon = max(
            float(np.abs(f.at_atoms(m) - (mart.at_atoms(m) - comp.at_atoms(m))).max())
            for m in range(space.horizon + 1)
        )
    except ShapeMismatch as exc:
        return DecompositionReport(
            checks=(CheckResult(name=f"shapes ({exc})", max_violation=np.inf, passed=False),)
        )
    add("reconstruction", recon)
    add("compensator-starts-at-zero", float(np.abs(comp.at_cells(0)).max()))
    growth = 0.0
    for m in range(1, space.horizon + 1):
        delta = comp.at_atoms(m) - comp.at_atoms(m - 1)
        growth = max(growth, float((-delta).max()))
    add("compensator-monotone", max(growth, 0.0))

    def mart_defect(p: Measure) -> float:
        worst = 0.0
        for m in range(1, space.horizon + 1):
            e = cond_exp_cells(space, mart.at_atoms(m), p, m - 1)
            worst = max(worst, float(np.abs(e - mart.at_cells(m - 1)).max()))
        return worst

    add("martingale-extremes", max(mart_defect(p) for p in family))
    rng = np.random.default_rng(seed)
    mixed = 0.0
    for _ in range(n_mixtures):
        q = mixture(family, rng.dirichlet(np.ones(len(family))))
        mixed = max(mixed, mart_defect(q))
    add("martingale-mixtures", mixed)

    drift = 0.0
    centered = 0.0
    for m in range(1, space.horizon + 1):
        df = f.at_atoms(m - 1) - f.at_atoms(m)
        dg = comp.at_atoms(m) - comp.at_atoms(m - 1)
        for p in family:
            lhs = cond_exp_cells(space, df, p, m - 1)
            rhs = cond_exp_cells(space, dg, p, m - 1)
            drift = max(drift, float(np.abs(lhs - rhs).max()))
            psi = dg - space.expand(m - 1, rhs)
            centered = max(
                centered, float(np.abs(cond_exp_cells(space, psi, p, m - 1)).max())
            )
    add("drift-matches-compensator-growth", drift)
    add("centered-compensator-residuals", centered, bound=STRICT_TOL)
    return DecompositionReport(checks=tuple(checks))


def completeness_check(
    family: MeasureFamily,
    delta: MartingaleDelta,
    n: int,
    tol: float = DEFAULT_TOL,
) -> CompletenessReport:
    """Distance of each two-point contracted measure from the contraction hull.

    For each (down cell i, up cell j) pair the two-point measure puts mass
    ``d_j / (d_j - d_i)`` on cell i and the rest on cell j.  Membership is
    an LP: minimize the sup-norm deviation between the target and a convex
    combination of the contracted extremes.
    """
    cvecs = contract(family, n)
    d = delta.increments
    pairs: list[tuple[int, int, float]] = []
    if not delta.pos_cells:
        return CompletenessReport(level=n, fraction_inside=1.0, pairs=(), vacuous=True)
    n_cells = cvecs[0].shape[0]
    k = len(cvecs)
    inside = 0
    for i in delta.neg_cells:
        for j in delta.pos_cells:
            denom = d[j] - d[i]
            target = np.zeros(n_cells)
            target[i] = d[j] / denom
            target[j] = -d[i] / denom
            # variables: (lambda_1..lambda_k, deviation)
            cmat = np.vstack(cvecs).T  # cells x k
            a_ge = np.vstack(
                [
                    np.hstack([-cmat, np.ones((n_cells, 1))]),
                    np.hstack([cmat, np.ones((n_cells, 1))]),
                ]
            )
            b_ge = np.concatenate([-target, target])
            a_eq = np.concatenate([np.ones(k), [0.0]])[None, :]
            obj = np.zeros(k + 1)
            obj[-1] = 1.0
            out = solve(LinearProgram(obj, a_eq=a_eq, b_eq=np.ones(1), a_ge=a_ge, b_ge=b_ge))
            dev = float(out.value) if out.status == "optimal" else np.inf
            pairs.append((int(i), int(j), dev))
            if dev <= tol:
                inside += 1
    return CompletenessReport(
        level=n,
        fraction_inside=inside / len(pairs),
        pairs=tuple(pairs),
        vacuous=False,
    )
