"""Instance-level audits of the envelope identities.

Several appealing statements about upper envelopes of conditional
expectations over a convex family of measures hold for a single measure
(or for families stable under pasting of conditional pieces) but fail for
general finitely generated hulls.  This module evaluates each such claim
literally on a concrete instance, reports the violating quantity when one
exists, and searches small random instances for counterexamples with
greedy shrinking.  The point is evidence, not proof: a "pass" after an
exhausted search budget is a verdict about the instances tried.

Audited claims:

* ``lemma-q5`` / ``lemma-lkq4``: conditioning the upper envelope at a later
  time never exceeds the envelope at an earlier time.
* ``lemma-tmars5``: the envelope process of a nonnegative payoff is a
  supermartingale for every measure of the family.
* ``lemma-1q5``: with equal expectations across extremes, the envelope
  process is a family-martingale.
* ``thm-fmars5``: for a unit-expectation density, conditional expectations
  agree across measures and form a family-martingale.
* ``thm-mars12``: the envelope admits a decomposition at every step iff
  the expectations across extremes agree.
* ``thm-mmars1``: a pathwise non-increasing process times a density
  martingale is a family-supermartingale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .generators import random_family, random_space
from .regularity import (
    StepFailure,
    a0_membership,
    classify,
    find_a0_element,
    xi0_step_lp,
)
from .scenario import ClaimSpec, scenario_to_dict
from .space import (
    DEFAULT_TOL,
    STRICT_TOL,
    AdaptedProcess,
    FilteredSpace,
    Measure,
    MeasureFamily,
    build_space,
    cond_exp_cells,
    ess_sup_cond_exp_cells,
)

__all__ = [
    "CLAIM_IDS",
    "ClaimPreconditionUnmet",
    "AuditInstance",
    "AuditResult",
    "audit",
    "instance_from_dict",
    "search_counterexample",
    "envelope_process",
]

CLAIM_IDS = (
    "lemma-q5",
    "lemma-lkq4",
    "lemma-tmars5",
    "lemma-1q5",
    "thm-fmars5",
    "thm-mars12",
    "thm-mmars1",
)

#: claims whose hypotheses need a unit-expectation density
_NEEDS_A0 = {"thm-fmars5", "thm-mmars1"}


class ClaimPreconditionUnmet(ValueError):
    """The instance does not satisfy the claim's hypotheses."""


@dataclass(frozen=True, eq=False)
class AuditInstance:
    """A concrete space/family plus the payoff (and, where needed, the
    non-increasing process) the claim quantifies over."""

    family: MeasureFamily
    xi: Optional[np.ndarray] = None
    f: Optional[AdaptedProcess] = None

    @property
    def space(self) -> FilteredSpace:
        return self.family.space

    def as_dict(self) -> dict:
        measures = {f"P{i + 1}": p for i, p in enumerate(self.family)}
        processes = {"f": self.f} if self.f is not None else None
        claims = None
        extra: dict = {}
        if self.xi is not None:
            if _is_measurable(self.space, self.xi):
                n = self.space.horizon
                claims = {
                    "xi": ClaimSpec(time=n, values=self.space.restrict(n, self.xi, atol=0.0))
                }
            else:
                # payoff finer than the last partition: record raw atom values
                extra["xi_atoms"] = list(map(float, self.xi))
        doc = scenario_to_dict(self.space, measures=measures, processes=processes, claims=claims)
        doc.update(extra)
        return doc


def _is_measurable(space: FilteredSpace, xi: np.ndarray) -> bool:
    try:
        space.restrict(space.horizon, xi, atol=0.0)
        return True
    except Exception:
        return False


@dataclass(frozen=True, eq=False)
class AuditResult:
    claim: str
    verdict: str  # "pass" | "counterexample"
    violation: float
    detail: str
    witness: Optional[dict] = None
    budget_used: int = 1

    def as_dict(self) -> dict:
        out = {
            "claim": self.claim,
            "verdict": self.verdict,
            "violation": self.violation,
            "detail": self.detail,
            "budget_used": self.budget_used,
        }
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def envelope_process(family: MeasureFamily, xi: np.ndarray) -> AdaptedProcess:
    """The upper envelope of conditional expectations, as an adapted process."""
    space = family.space
    levels = [
        ess_sup_cond_exp_cells(space, xi, family, m) for m in range(space.horizon + 1)
    ]
    return AdaptedProcess(space=space, per_time=tuple(levels))


# ---------------------------------------------------------------------------
# claim evaluators: return (violation, detail)


def _require_xi(instance: AuditInstance, nonnegative: bool) -> np.ndarray:
    if instance.xi is None:
        raise ClaimPreconditionUnmet("claim needs a payoff xi")
    xi = np.asarray(instance.xi, dtype=float)
    if nonnegative and np.any(xi < -STRICT_TOL):
        raise ClaimPreconditionUnmet("claim needs a nonnegative xi")
    return xi


def _eval_envelope_tower(instance: AuditInstance) -> tuple[float, str]:
    family = instance.family
    space = instance.space
    xi = _require_xi(instance, nonnegative=False)
    worst, where = 0.0, ""
    for n in range(1, space.horizon + 1):
        phi = space.expand(n, ess_sup_cond_exp_cells(space, xi, family, n))
        for m in range(n):
            rhs = ess_sup_cond_exp_cells(space, xi, family, m)
            for i, q in enumerate(family):
                gap = float((cond_exp_cells(space, phi, q, m) - rhs).max())
                if gap > worst:
                    worst = gap
                    where = f"conditioning the time-{n} envelope to time {m} under extreme {i}"
    return worst, where or "no excess over the early envelope"


def _eval_lkq4(instance: AuditInstance) -> tuple[float, str]:
    _require_xi(instance, nonnegative=True)
    return _eval_envelope_tower(instance)


def _eval_tmars5(instance: AuditInstance) -> tuple[float, str]:
    xi = _require_xi(instance, nonnegative=True)
    cls = classify(envelope_process(instance.family, xi), instance.family, tol=0.0)
    t, cell, i, mag = cls.worst_violation
    if mag > 0:
        return mag, f"envelope drifts up by {mag:.6g} at time {t}, cell {cell}, extreme {i}"
    return 0.0, "envelope is a supermartingale for every extreme"


def _eval_1q5(instance: AuditInstance) -> tuple[float, str]:
    xi = _require_xi(instance, nonnegative=True)
    exps = [p.expect(xi) for p in instance.family]
    if max(exps) - min(exps) > STRICT_TOL:
        raise ClaimPreconditionUnmet("claim needs equal expectation under every extreme")
    space = instance.space
    env = envelope_process(instance.family, xi)
    worst, where = 0.0, ""
    for m in range(1, space.horizon + 1):
        for i, p in enumerate(instance.family):
            defect = cond_exp_cells(space, env.at_atoms(m), p, m - 1) - env.at_cells(m - 1)
            mag = float(np.abs(defect).max())
            if mag > worst:
                worst = mag
                where = f"martingale defect {mag:.6g} at time {m} under extreme {i}"
    return worst, where or "envelope is a family-martingale"


def _eval_fmars5(instance: AuditInstance) -> tuple[float, str]:
    xi = _require_xi(instance, nonnegative=True)
    family = instance.family
    if not a0_membership(family, xi, tol=1e-9):
        raise ClaimPreconditionUnmet("xi is not a unit-expectation density for the family")
    space = instance.space
    conds = [
        [cond_exp_cells(space, xi, p, m) for m in range(space.horizon + 1)] for p in family
    ]
    worst, where = 0.0, ""
    for m in range(space.horizon + 1):
        for i in range(len(family)):
            for j in range(i + 1, len(family)):
                mag = float(np.abs(conds[i][m] - conds[j][m]).max())
                if mag > worst:
                    worst = mag
                    where = (
                        f"conditional expectations at time {m} differ by {mag:.6g} "
                        f"between extremes {i} and {j}"
                    )
    for b in range(len(family)):
        proc = AdaptedProcess(space=space, per_time=tuple(conds[b]))
        for m in range(1, space.horizon + 1):
            for i, p in enumerate(family):
                defect = cond_exp_cells(space, proc.at_atoms(m), p, m - 1) - proc.at_cells(m - 1)
                mag = float(np.abs(defect).max())
                if mag > worst:
                    worst = mag
                    where = (
                        f"density martingale under extreme {b} has defect {mag:.6g} "
                        f"at time {m} under extreme {i}"
                    )
    return worst, where or "conditional expectations agree and form a family-martingale"


def _eval_mars12(instance: AuditInstance) -> tuple[float, str]:
    xi = _require_xi(instance, nonnegative=True)
    family = instance.family
    space = instance.space
    if not _is_measurable(space, xi):
        raise ClaimPreconditionUnmet("claim needs xi measurable at the horizon")
    env = envelope_process(family, xi)
    failures: list[StepFailure] = []
    for m in range(1, space.horizon + 1):
        step = xi0_step_lp(env, family, m)
        if isinstance(step, StepFailure):
            failures.append(step)
    regular = not failures
    exps = [p.expect(xi) for p in family]
    spread = max(exps) - min(exps)
    equal = spread <= DEFAULT_TOL
    if regular == equal:
        return 0.0, "step certificates exist exactly when expectations agree"
    if equal and not regular:
        mag = max((fl.certificate or 0.0) for fl in failures)
        mag = mag if mag > 0 else 1.0
        return (
            mag,
            f"expectations agree but step {failures[0].m} has no certificate "
            f"(infeasibility {mag:.6g})",
        )
    return spread, f"certificates exist at every step but expectations spread by {spread:.6g}"


def _eval_mmars1(instance: AuditInstance) -> tuple[float, str]:
    xi = _require_xi(instance, nonnegative=True)
    family = instance.family
    space = instance.space
    if not a0_membership(family, xi, tol=1e-9):
        raise ClaimPreconditionUnmet("xi is not a unit-expectation density for the family")
    if instance.f is None:
        raise ClaimPreconditionUnmet("claim needs a pathwise non-increasing process f")
    f = instance.f
    for m in range(1, space.horizon + 1):
        if np.any(f.at_atoms(m) > f.at_atoms(m - 1) + STRICT_TOL):
            raise ClaimPreconditionUnmet("f must be pathwise non-increasing")
    worst, where = 0.0, ""
    for b, base in enumerate(family):
        levels = [
            f.at_cells(m) * cond_exp_cells(space, xi, base, m)
            for m in range(space.horizon + 1)
        ]
        prod = AdaptedProcess(space=space, per_time=tuple(levels))
        cls = classify(prod, family, tol=0.0)
        t, cell, i, mag = cls.worst_violation
        if mag > worst:
            worst = mag
            where = (
                f"product with the density martingale under extreme {b} drifts up "
                f"by {mag:.6g} at time {t}, cell {cell}, extreme {i}"
            )
    return worst, where or "product is a supermartingale for every base and extreme"


_EVALUATORS = {
    "lemma-q5": _eval_envelope_tower,
    "lemma-lkq4": _eval_lkq4,
    "lemma-tmars5": _eval_tmars5,
    "lemma-1q5": _eval_1q5,
    "thm-fmars5": _eval_fmars5,
    "thm-mars12": _eval_mars12,
    "thm-mmars1": _eval_mmars1,
}


def instance_from_dict(doc: dict) -> AuditInstance:
    """Rebuild an audit instance from a witness (or scenario) document.

    The payoff comes from the ``xi`` claim when present, else from the raw
    ``xi_atoms`` fallback used when the payoff is finer than the last
    partition; an ``f`` process is picked up when present.
    """
    from .scenario import parse_scenario

    scenario = parse_scenario({k: v for k, v in doc.items() if k != "xi_atoms"})
    xi: Optional[np.ndarray] = None
    if "xi" in scenario.claims:
        xi = scenario.claims["xi"].atoms(scenario.space)
    elif "xi_atoms" in doc:
        xi = np.asarray(doc["xi_atoms"], dtype=float)
    return AuditInstance(
        family=scenario.family(), xi=xi, f=scenario.processes.get("f")
    )


def audit(claim: str, instance: AuditInstance, tol: float = DEFAULT_TOL) -> AuditResult:
    """Evaluate one claim literally on one instance."""
    if claim not in _EVALUATORS:
        raise ValueError(f"unknown claim {claim!r}; choose from {CLAIM_IDS}")
    violation, detail = _EVALUATORS[claim](instance)
    if violation > tol:
        return AuditResult(
            claim=claim,
            verdict="counterexample",
            violation=violation,
            detail=detail,
            witness=instance.as_dict(),
        )
    return AuditResult(claim=claim, verdict="pass", violation=violation, detail=detail)


# ---------------------------------------------------------------------------
# randomized search with shrinking


def _drop_extreme(instance: AuditInstance, idx: int) -> Optional[AuditInstance]:
    family = instance.family
    if len(family) <= 1:
        return None
    extremes = tuple(p for i, p in enumerate(family) if i != idx)
    return AuditInstance(
        family=MeasureFamily(space=family.space, extremes=extremes),
        xi=instance.xi,
        f=instance.f,
    )


def _drop_atom(instance: AuditInstance, atom: int) -> Optional[AuditInstance]:
    space = instance.space
    if space.n_atoms <= 2:
        return None
    relabel = {a: (a if a < atom else a - 1) for a in range(space.n_atoms) if a != atom}
    partitions = []
    kept_cells: list[list[int]] = []  # per level, surviving cell indices
    for level in space.partitions:
        cells = []
        kept = []
        for j, cell in enumerate(level):
            reduced = [relabel[a] for a in cell if a != atom]
            if reduced:
                cells.append(reduced)
                kept.append(j)
        partitions.append(cells)
        kept_cells.append(kept)
    try:
        new_space = build_space(space.n_atoms - 1, partitions)
    except Exception:
        return None
    mask = np.array([a != atom for a in range(space.n_atoms)])
    extremes = []
    for p in instance.family:
        probs = p.probs[mask]
        extremes.append(Measure(probs / probs.sum()))
    family = MeasureFamily(space=new_space, extremes=tuple(extremes))
    xi = instance.xi[mask] if instance.xi is not None else None
    f = None
    if instance.f is not None:
        f = AdaptedProcess(
            space=new_space,
            per_time=tuple(
                instance.f.at_cells(m)[kept_cells[m]] for m in range(space.horizon + 1)
            ),
        )
    return AuditInstance(family=family, xi=xi, f=f)


def _shrink(claim: str, instance: AuditInstance, tol: float) -> AuditInstance:
    """Greedy removal of extremes then atoms while the violation persists."""
    current = instance
    improved = True
    while improved:
        improved = False
        for idx in reversed(range(len(current.family))):
            candidate = _drop_extreme(current, idx)
            if candidate is None:
                continue
            try:
                if audit(claim, candidate, tol=tol).verdict == "counterexample":
                    current = candidate
                    improved = True
                    break
            except ClaimPreconditionUnmet:
                continue
        if improved:
            continue
        for atom in reversed(range(current.space.n_atoms)):
            candidate = _drop_atom(current, atom)
            if candidate is None:
                continue
            try:
                if audit(claim, candidate, tol=tol).verdict == "counterexample":
                    current = candidate
                    improved = True
                    break
            except ClaimPreconditionUnmet:
                continue
    return current


def _terminal_unit_density(
    family: MeasureFamily, rng: np.random.Generator
) -> Optional[np.ndarray]:
    """Horizon-measurable nonnegative payoff with expectation one under every
    extreme, at a random vertex of that polytope."""
    from .lp import LinearProgram, solve as lp_solve

    space = family.space
    horizon = space.horizon
    cvecs = np.vstack([p.cell_prob(space, horizon) for p in family])
    out = lp_solve(
        LinearProgram(
            -rng.normal(size=space.n_cells(horizon)),
            a_eq=cvecs,
            b_eq=np.ones(len(family)),
        )
    )
    if out.status != "optimal":
        return None
    return space.expand(horizon, np.maximum(out.x, 0.0))


def _sample_instance(
    claim: str,
    rng: np.random.Generator,
    max_atoms: int,
    max_periods: int,
    max_extremes: int,
) -> Optional[AuditInstance]:
    space = random_space(rng, max_atoms=max_atoms, max_periods=max_periods)
    family = random_family(rng, space, max_extremes=max_extremes)
    n = space.n_atoms
    if claim in _NEEDS_A0 or claim == "lemma-1q5":
        try:
            xi = find_a0_element(family, objective=rng.normal(size=n)).xi
        except Exception:
            return None
        if claim == "lemma-1q5":
            xi = xi * float(rng.uniform(0.5, 2.0))
    elif claim == "thm-mars12":
        # the fragile direction needs equal expectations across extremes
        xi = _terminal_unit_density(family, rng)
        if xi is None:
            return None
        xi = xi * float(rng.uniform(0.5, 2.0))
    else:
        # measurable at the horizon, so the witness serializes as a claim
        per_cell = rng.uniform(0.0, 2.0, size=space.n_cells(space.horizon))
        xi = space.expand(space.horizon, per_cell)
    f = None
    if claim == "thm-mmars1":
        levels = [np.array([float(rng.uniform(1.0, 2.0))])]
        for m in range(1, space.horizon + 1):
            drop = rng.uniform(0.0, 0.4, size=space.n_cells(m))
            levels.append(levels[-1][space.parent_cell(m)] - drop)
        f = AdaptedProcess(space=space, per_time=tuple(levels))
    return AuditInstance(family=family, xi=xi, f=f)


def search_counterexample(
    claim: str,
    budget: int,
    seed: int,
    max_atoms: int = 8,
    max_periods: int = 3,
    max_extremes: int = 3,
    tol: float = DEFAULT_TOL,
) -> AuditResult:
    """Randomized counterexample search over small instances.

    Deterministic for a fixed seed.  Returns the first (shrunk)
    counterexample found, or a pass verdict after exhausting the budget.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if claim not in _EVALUATORS:
        raise ValueError(f"unknown claim {claim!r}; choose from {CLAIM_IDS}")
    rng = np.random.default_rng(seed)
    tried = 0
    for _ in range(budget):
        instance = _sample_instance(claim, rng, max_atoms, max_periods, max_extremes)
        if instance is None:
            continue
        tried += 1
        try:
            result = audit(claim, instance, tol=tol)
        except ClaimPreconditionUnmet:
            continue
        if result.verdict == "counterexample":
            shrunk = _shrink(claim, instance, tol)
            final = audit(claim, shrunk, tol=tol)
            return AuditResult(
                claim=claim,
                verdict="counterexample",
                violation=final.violation,
                detail=final.detail,
                witness=shrunk.as_dict(),
                budget_used=tried,
            )
    return AuditResult(
        claim=claim,
        verdict="pass",
        violation=0.0,
        detail=f"no violation over {tried} sampled instances",
        budget_used=tried,
    )
