"""Fair pricing of terminal claims by superhedging, and hedge extraction.

The fair price of a claim is the smallest initial capital ``a`` such that
``a * E{xi | F_N}`` dominates the claim pathwise for some nonnegative
``xi`` with unit expectation under every measure of the family.  On a
finite space that infimum is attained by a linear program, so no limiting
sequences appear here.  Because conditional expectations of such densities
need not agree across measures (see :mod:`doobkit.claims`), the domination
constraint is imposed under every extreme separately; when the terminal
partition separates atoms the readings coincide.

Two modes: the free mode optimizes over the whole density set, the
generator mode over the simplex spanned by finitely many given densities.
The generator price always dominates the free price.  When the family's
extremes are martingale measures for a price process and the generators
are the normalized price slices, the optimal dominator is itself a
tradable martingale, and a self-financed strategy superhedging the claim
falls out of a per-node linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .lp import LinearProgram, solve
from .regularity import A0Element, NotInA0, make_a0_element
from .space import (
    DEFAULT_TOL,
    STRICT_TOL,
    AdaptedProcess,
    FilteredSpace,
    Measure,
    MeasureFamily,
    ShapeMismatch,
    cond_exp_cells,
)

__all__ = [
    "BadBounds",
    "NotMeasurable",
    "GeneratorNotInA0",
    "FamilyNotEmm",
    "NotRepresentable",
    "PricingInfeasible",
    "MarketModel",
    "PricingResult",
    "EmmResult",
    "EmmReport",
    "TradingStrategy",
    "fair_price_a0",
    "fair_price_generators",
    "closed_form_call",
    "closed_form_put",
    "find_emm",
    "verify_emm",
    "martingale_representation",
    "price_slice_generators",
    "superhedge_strategy",
]


class BadBounds(ValueError):
    """Nonpositive price or bound inputs."""


class NotMeasurable(ValueError):
    """The claim is not measurable at the terminal time."""


class GeneratorNotInA0(ValueError):
    """A generator fails the unit-expectation density conditions."""


class FamilyNotEmm(ValueError):
    """An extreme of the family is not a martingale measure for the asset."""


class PricingInfeasible(ValueError):
    """No combination of the given generators dominates the claim."""


class NotRepresentable(ValueError):
    """The martingale's increments leave the span of the asset increments."""

    def __init__(self, m: int, cell: int, residual: float) -> None:
        super().__init__(
            f"increment at time {m}, predecessor cell {cell} is not an asset "
            f"combination (residual {residual:.3e})"
        )
        self.m = m
        self.cell = cell
        self.residual = residual


@dataclass(frozen=True, eq=False)
class MarketModel:
    """One risky asset with the riskless asset pinned at 1.

    Optional per-time bounds (low, high) must bracket the price pathwise,
    with lows non-increasing and highs non-decreasing in time.
    """

    S: AdaptedProcess
    bounds: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self) -> None:
        for m in range(self.S.horizon + 1):
            if np.any(self.S.at_cells(m) <= 0.0):
                raise BadBounds(f"price must be strictly positive (time {m})")
        if self.bounds is not None:
            bounds = tuple((float(a), float(b)) for a, b in self.bounds)
            object.__setattr__(self, "bounds", bounds)
            if len(bounds) != self.S.horizon + 1:
                raise BadBounds("need one (low, high) pair per time")
            for m, (lo, hi) in enumerate(bounds):
                if lo <= 0.0 or hi < lo:
                    raise BadBounds(f"time {m}: bad bracket ({lo}, {hi})")
                s = self.S.at_cells(m)
                if np.any(s < lo - STRICT_TOL) or np.any(s > hi + STRICT_TOL):
                    raise BadBounds(f"time {m}: price leaves [{lo}, {hi}]")
                if m:
                    if lo > bounds[m - 1][0] + STRICT_TOL:
                        raise BadBounds("lower bounds must be non-increasing")
                    if hi < bounds[m - 1][1] - STRICT_TOL:
                        raise BadBounds("upper bounds must be non-decreasing")

    @property
    def space(self) -> FilteredSpace:
        return self.S.space

    @property
    def s0(self) -> float:
        return float(self.S.at_cells(0)[0])


@dataclass(frozen=True, eq=False)
class PricingResult:
    fair_price: float
    dominator: np.ndarray  # per atom, >= claim
    mode: str  # "a0" | "generators"
    gamma: Optional[np.ndarray] = None  # simplex weights, generator mode
    lower_bound: float = 0.0  # max over extremes of the claim's expectation
    density: Optional[np.ndarray] = None  # optimal density (free mode, price > 0)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "fair_price": self.fair_price,
            "gamma": None if self.gamma is None else [float(g) for g in self.gamma],
            "dominator": [float(v) for v in self.dominator],
            "lower_bound": self.lower_bound,
        }


@dataclass(frozen=True, eq=False)
class EmmResult:
    measure: Optional[Measure]
    min_slack: float


@dataclass(frozen=True)
class EmmReport:
    max_residual: float
    passed: bool


@dataclass(frozen=True, eq=False)
class TradingStrategy:
    """Predictable positions and the capital they carry.

    ``cash[m]`` and ``risky[m]`` for m >= 1 hold one value per cell of the
    time ``m-1`` partition (announced one step ahead); index 0 holds the
    initial scalar positions.  Capital is ``cash + risky * price`` and the
    rebalancing is self-financed.
    """

    cash: tuple[np.ndarray, ...]
    risky: tuple[np.ndarray, ...]
    capital: AdaptedProcess
    pricing: PricingResult

    def initial_capital(self) -> float:
        return float(self.capital.at_cells(0)[0])

    def self_financing_residual(self, market: MarketModel) -> float:
        """Max |change of cash + change of risky * previous price| at a node."""
        space = self.capital.space
        worst = 0.0
        for m in range(1, space.horizon + 1):
            prev_cells = space.atom_to_cell(m - 1)
            h_now = self.risky[m][prev_cells]
            c_now = self.cash[m][prev_cells]
            if m == 1:
                h_prev = np.full(space.n_atoms, float(self.risky[0][0]))
                c_prev = np.full(space.n_atoms, float(self.cash[0][0]))
            else:
                pp = space.atom_to_cell(m - 2)
                h_prev = self.risky[m - 1][pp]
                c_prev = self.cash[m - 1][pp]
            s_prev = market.S.at_atoms(m - 1)
            resid = (c_now - c_prev) + (h_now - h_prev) * s_prev
            worst = max(worst, float(np.abs(resid).max()))
        return worst

    def capital_residual(self, market: MarketModel) -> float:
        """Max |capital - (cash + risky * price)|."""
        space = self.capital.space
        worst = 0.0
        for m in range(space.horizon + 1):
            if m == 0:
                held = float(self.cash[0][0]) + float(self.risky[0][0]) * market.s0
                worst = max(worst, abs(self.initial_capital() - held))
                continue
            prev_cells = space.atom_to_cell(m - 1)
            held = self.cash[m][prev_cells] + self.risky[m][prev_cells] * market.S.at_atoms(m)
            worst = max(worst, float(np.abs(self.capital.at_atoms(m) - held).max()))
        return worst


# ---------------------------------------------------------------------------
# pricing LPs


def _claim_cells(space: FilteredSpace, claim: np.ndarray) -> np.ndarray:
    claim = np.asarray(claim, dtype=float)
    if claim.shape != (space.n_atoms,):
        raise NotMeasurable(f"claim has shape {claim.shape}, space has {space.n_atoms} atoms")
    if np.any(claim < -STRICT_TOL):
        raise ValueError("claim must be nonnegative")
    try:
        return space.restrict(space.horizon, claim, atol=0.0)
    except ShapeMismatch as exc:
        raise NotMeasurable(str(exc)) from exc


def _domination_rows(space: FilteredSpace, family: MeasureFamily) -> np.ndarray:
    """Rows mapping an atom vector h to E{h | F_N}(cell), per extreme per cell."""
    n = space.n_atoms
    rows = []
    for p in family:
        for cell in space.cells(space.horizon):
            row = np.zeros(n)
            idx = list(cell)
            row[idx] = p.probs[idx] / p.probs[idx].sum()
            rows.append(row)
    return np.vstack(rows)


def fair_price_a0(
    claim: np.ndarray, family: MeasureFamily, tol: float = DEFAULT_TOL
) -> PricingResult:
    """Smallest capital whose scaled density conditional dominates the claim.

    Solved as: minimize t over nonnegative h with expectation t under every
    extreme and terminal conditional expectation at least the claim under
    every extreme.  Always feasible (a large constant works).  The optimal
    h/t is the realizing density when the price is positive.
    """
    space = family.space
    claim_cells = _claim_cells(space, claim)
    n = space.n_atoms
    k = len(family)
    # variables (h_1..h_n, t)
    a_eq = np.hstack([np.vstack([p.probs for p in family]), -np.ones((k, 1))])
    b_eq = np.zeros(k)
    dom = _domination_rows(space, family)
    a_ge = np.hstack([dom, np.zeros((dom.shape[0], 1))])
    b_ge = np.tile(claim_cells, k)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    out = solve(LinearProgram(c, a_eq=a_eq, b_eq=b_eq, a_ge=a_ge, b_ge=b_ge))
    if out.status != "optimal":  # pragma: no cover - always feasible and bounded
        raise RuntimeError(f"free-mode pricing LP came back {out.status}")
    h = out.x[:n]
    price = float(out.x[-1])
    dominator = space.expand(
        space.horizon, cond_exp_cells(space, h, family.extremes[0], space.horizon)
    )
    lower = max(p.expect(np.asarray(claim, dtype=float)) for p in family)
    if price < lower - 1e-8:  # pragma: no cover - would contradict the LP constraints
        raise RuntimeError(f"price {price} fell below the expectation bound {lower}")
    density = h / price if price > tol else None
    return PricingResult(
        fair_price=price,
        dominator=dominator,
        mode="a0",
        gamma=None,
        lower_bound=lower,
        density=density,
    )


def fair_price_generators(
    claim: np.ndarray,
    generators: Sequence[Union[A0Element, np.ndarray]],
    family: MeasureFamily,
    tol: float = DEFAULT_TOL,
    check_ordering: bool = True,
) -> PricingResult:
    """Fair price over the simplex spanned by the given densities.

    Minimizes the total weight of a nonnegative combination of the
    generators whose terminal conditional expectation dominates the claim
    under every extreme.  Since the simplex sits inside the full density
    set, the price can only exceed the free-mode price; that ordering is
    verified unless ``check_ordering`` is disabled.
    """
    space = family.space
    claim_cells = _claim_cells(space, claim)
    elems: list[A0Element] = []
    for g in generators:
        xi = g.xi if isinstance(g, A0Element) else np.asarray(g, dtype=float)
        try:
            elems.append(make_a0_element(family, xi))
        except NotInA0 as exc:
            raise GeneratorNotInA0(str(exc)) from exc
    if not elems:
        raise ValueError("need at least one generator")
    dom = _domination_rows(space, family)
    cols = np.column_stack([dom @ e.xi for e in elems])
    b_ge = np.tile(claim_cells, len(family))
    out = solve(LinearProgram(np.ones(len(elems)), a_ge=cols, b_ge=b_ge))
    if out.status != "optimal":
        raise PricingInfeasible(
            "no nonnegative combination of the generators dominates the claim"
        )
    weights = out.x
    price = float(weights.sum())
    n_cells = space.n_cells(space.horizon)
    dominator = space.expand(space.horizon, (cols @ weights)[:n_cells])
    lower = max(p.expect(np.asarray(claim, dtype=float)) for p in family)
    gamma = weights / price if price > tol else None
    if check_ordering:
        free = fair_price_a0(claim, family, tol=tol)
        if price < free.fair_price - 1e-9:  # pragma: no cover - simplex is a subset
            raise RuntimeError(
                f"generator price {price} undercuts the free price {free.fair_price}"
            )
    return PricingResult(
        fair_price=price,
        dominator=dominator,
        mode="generators",
        gamma=gamma,
        lower_bound=lower,
    )


def closed_form_call(s0: float, strike: float, terminal_high: float) -> float:
    """Price of ``(S_N - K)+`` on a band-bounded market: ``S0 (1 - K / high)``
    when the strike is inside the band, zero past it."""
    if s0 <= 0.0 or terminal_high <= 0.0 or strike < 0.0:
        raise BadBounds("need s0 > 0, terminal_high > 0, strike >= 0")
    if strike >= terminal_high:
        return 0.0
    return s0 * (1.0 - strike / terminal_high)


def closed_form_put(strike: float, terminal_low: float) -> float:
    """Price of ``(K - S_N)+`` on a band-bounded market: ``K - low`` when the
    strike is above the floor, zero below it."""
    if terminal_low <= 0.0 or strike < 0.0:
        raise BadBounds("need terminal_low > 0, strike >= 0")
    if strike <= terminal_low:
        return 0.0
    return strike - terminal_low


# ---------------------------------------------------------------------------
# martingale measures


def find_emm(market: MarketModel, space: Optional[FilteredSpace] = None) -> EmmResult:
    """Strictly positive martingale measure with maximal smallest atom.

    Maximizes the floor of the probability vector subject to the cellwise
    zero-drift equalities.  Returns no measure when the floor cannot be
    pushed above 1e-10.
    """
    space = space or market.space
    n = space.n_atoms
    # variables (q_1..q_n, eps)
    rows = [np.concatenate([np.ones(n), [0.0]])]
    rhs = [1.0]
    for m in range(1, space.horizon + 1):
        s_now = market.S.at_atoms(m)
        s_prev = market.S.at_atoms(m - 1)
        for cell in space.cells(m - 1):
            row = np.zeros(n + 1)
            idx = list(cell)
            row[idx] = s_now[idx] - s_prev[idx]
            rows.append(row)
            rhs.append(0.0)
    a_ge = np.hstack([np.eye(n), -np.ones((n, 1))])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    out = solve(
        LinearProgram(c, a_eq=np.vstack(rows), b_eq=np.array(rhs), a_ge=a_ge, b_ge=np.zeros(n))
    )
    if out.status != "optimal":
        return EmmResult(measure=None, min_slack=0.0)
    slack = float(out.x[-1])
    if slack <= 1e-10:
        return EmmResult(measure=None, min_slack=max(slack, 0.0))
    return EmmResult(measure=Measure(out.x[:n] / out.x[:n].sum()), min_slack=slack)


def verify_emm(
    q: Measure, market: MarketModel, space: Optional[FilteredSpace] = None, tol: float = DEFAULT_TOL
) -> EmmReport:
    """Largest cellwise one-step drift of the price under ``q``."""
    space = space or market.space
    worst = 0.0
    for m in range(1, space.horizon + 1):
        e = cond_exp_cells(space, market.S.at_atoms(m), q, m - 1)
        worst = max(worst, float(np.abs(e - market.S.at_cells(m - 1)).max()))
    return EmmReport(max_residual=worst, passed=worst <= tol)


# ---------------------------------------------------------------------------
# representation and hedging


def martingale_representation(
    mproc: AdaptedProcess,
    market: MarketModel,
    space: Optional[FilteredSpace] = None,
    tol: float = DEFAULT_TOL,
) -> list[np.ndarray]:
    """Predictable positions whose gains replicate the martingale increments.

    Per predecessor cell, solves ``H * (price increment) = (martingale
    increment)`` over the child cells by least squares, taking the
    least-norm solution.  Raises :class:`NotRepresentable` at the first
    node whose residual exceeds ``tol``; on success the gains process
    telescopes back to the martingale exactly up to those residuals.
    """
    space = space or market.space
    if mproc.space != space:
        raise ShapeMismatch("martingale lives on a different space")
    positions: list[np.ndarray] = []
    for m in range(1, space.horizon + 1):
        parent = space.parent_cell(m)
        ds = market.S.at_cells(m) - market.S.at_cells(m - 1)[parent]
        dm = mproc.at_cells(m) - mproc.at_cells(m - 1)[parent]
        h = np.zeros(space.n_cells(m - 1))
        for b in range(space.n_cells(m - 1)):
            children = np.where(parent == b)[0]
            a = ds[children][:, None]
            sol, *_ = np.linalg.lstsq(a, dm[children], rcond=None)
            resid = float(np.abs(a @ sol - dm[children]).max())
            if resid > tol:
                raise NotRepresentable(m=m, cell=b, residual=resid)
            h[b] = float(sol[0])
        positions.append(h)
    return positions


def price_slice_generators(market: MarketModel) -> list[A0Element]:
    """The normalized price slices S_m / S_0 for m = 0..N (so slice 0 is the
    constant 1); each is a unit-expectation density when every extreme is a
    martingale measure."""
    space = market.space
    return [
        A0Element(xi=market.S.at_atoms(m) / market.s0) for m in range(space.horizon + 1)
    ]


def superhedge_strategy(
    claim: np.ndarray,
    market: MarketModel,
    family: MeasureFamily,
    generators: Optional[Sequence[A0Element]] = None,
    tol: float = DEFAULT_TOL,
) -> TradingStrategy:
    """Self-financed strategy superhedging the claim from its fair price.

    Requires every extreme to be a martingale measure for the asset.  The
    claim is priced over the normalized price slices; the optimal
    dominator's conditional-expectation process is then a stopped-slice
    combination, the same under every martingale measure, and its per-node
    representation in asset increments gives the risky position.  Capital
    starts at the fair price and ends at or above the claim.
    """
    space = market.space
    for i, p in enumerate(family):
        report = verify_emm(p, market, space, tol=tol)
        if not report.passed:
            raise FamilyNotEmm(
                f"extreme {i} has price drift {report.max_residual:.3e}"
            )
    slices = price_slice_generators(market)
    if generators is None:
        generators = slices
    else:
        generators = list(generators)
        for g in generators:
            if not any(np.allclose(g.xi, s.xi, atol=STRICT_TOL) for s in slices):
                raise ValueError(
                    "superhedge extraction needs normalized price slices as generators"
                )
    pricing = fair_price_generators(claim, generators, family, tol=tol)
    price = pricing.fair_price

    # map generator weights onto slice times
    slice_weight = np.zeros(space.horizon + 1)
    if pricing.gamma is not None:
        for g, w in zip(generators, pricing.gamma):
            for i, s in enumerate(slices):
                if np.allclose(g.xi, s.xi, atol=STRICT_TOL):
                    slice_weight[i] += w
                    break

    # dominator martingale: price * sum_i gamma_i * S_{min(i, m)} / S_0;
    # level 0 is the price itself so the initial capital is exact
    levels = [np.array([price])]
    for m in range(1, space.horizon + 1):
        acc = np.zeros(space.n_cells(m))
        for i in range(space.horizon + 1):
            stopped = space.restrict(m, market.S.at_atoms(min(i, m)))
            acc += slice_weight[i] * stopped
        levels.append(price * acc / market.s0)
    mart = AdaptedProcess(space=space, per_time=tuple(levels))

    if price <= tol:
        positions = [np.zeros(space.n_cells(m - 1)) for m in range(1, space.horizon + 1)]
    else:
        positions = martingale_representation(mart, market, space, tol=tol)

    cash: list[np.ndarray] = [np.array([price])]
    risky: list[np.ndarray] = [np.array([0.0])]
    for m in range(1, space.horizon + 1):
        h = positions[m - 1]
        c = mart.at_cells(m - 1) - h * market.S.at_cells(m - 1)
        risky.append(h)
        cash.append(c)
    return TradingStrategy(
        cash=tuple(cash), risky=tuple(risky), capital=mart, pricing=pricing
    )
