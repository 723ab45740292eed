"""Finite filtered probability spaces and the conditional-expectation calculus.

Everything lives on a finite set of atoms (elementary events).  Information
is a refining sequence of partitions: partition ``m`` lists the cells of the
time-``m`` algebra, partition 0 is the trivial one-cell partition, and every
cell at time ``m`` splits into cells at time ``m+1``.  Probability measures
are strictly positive vectors over atoms (strict positivity is what
"equivalent" means on a finite space), and a family of measures is a finite
list of extreme points whose convex hull is the uncertainty set.

Random variables are plain float arrays with one entry per atom.  Adapted
processes store one value per cell per time and are expanded to atoms on
demand, so measurability cannot silently break.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SpaceError",
    "TrivialRootMissing",
    "BadCover",
    "NonRefining",
    "BadWeights",
    "LengthMismatch",
    "ShapeMismatch",
    "FilteredSpace",
    "Measure",
    "MeasureFamily",
    "AdaptedProcess",
    "build_space",
    "cond_exp",
    "cond_exp_cells",
    "cond_exp_mixture",
    "cond_exp_change_of_measure",
    "ess_sup_cond_exp",
    "ess_sup_cond_exp_cells",
    "mixture",
    "rn_bounds",
    "contract",
    "rho_metric",
]

#: default tolerance for soft equality checks across the package
DEFAULT_TOL = 1e-9
#: tolerance for identities that must hold to near machine precision
STRICT_TOL = 1e-12
#: smallest admissible atom probability
MIN_PROB = 1e-15


class SpaceError(ValueError):
    """Invalid filtered-space data."""


class TrivialRootMissing(SpaceError):
    """partition 0 is not the single cell containing every atom."""


class BadCover(SpaceError):
    """A partition has gaps, overlaps, or out-of-range atoms."""


class NonRefining(SpaceError):
    """A cell at time m+1 straddles two cells of time m."""


class BadWeights(ValueError):
    """Mixture weights are negative or do not sum to one."""


class LengthMismatch(ValueError):
    """Vectors that must have equal length do not."""


class ShapeMismatch(ValueError):
    """A process or random variable does not fit the space."""


Cell = tuple[int, ...]
Partition = tuple[Cell, ...]


def _canonical_partition(cells: Iterable[Iterable[int]]) -> Partition:
    # cells sorted by least atom so cell indices are stable across runs
    normalized = [tuple(sorted(int(a) for a in cell)) for cell in cells]
    return tuple(sorted(normalized, key=lambda c: c[0] if c else -1))


@dataclass(frozen=True)
class FilteredSpace:
    """A finite atom set with a refining sequence of partitions."""

    n_atoms: int
    partitions: tuple[Partition, ...]

    @property
    def horizon(self) -> int:
        return len(self.partitions) - 1

    def cells(self, m: int) -> Partition:
        return self.partitions[m]

    def n_cells(self, m: int) -> int:
        return len(self.partitions[m])

    def atom_to_cell(self, m: int) -> np.ndarray:
        """Index of the time-``m`` cell containing each atom."""
        out = np.empty(self.n_atoms, dtype=np.intp)
        for j, cell in enumerate(self.partitions[m]):
            out[list(cell)] = j
        return out

    def parent_cell(self, m: int) -> np.ndarray:
        """For each cell of time ``m`` >= 1, the index of its time ``m-1`` parent."""
        if m < 1:
            raise ValueError("parent_cell needs m >= 1")
        coarse = self.atom_to_cell(m - 1)
        return np.array([coarse[cell[0]] for cell in self.partitions[m]], dtype=np.intp)

    def children(self, m: int, parent: int) -> list[int]:
        """Cells of time ``m`` contained in cell ``parent`` of time ``m-1``."""
        return [j for j, p in enumerate(self.parent_cell(m)) if p == parent]

    def expand(self, m: int, cell_values: np.ndarray) -> np.ndarray:
        """Lift per-cell values at time ``m`` to a per-atom array."""
        cell_values = np.asarray(cell_values, dtype=float)
        if cell_values.shape != (self.n_cells(m),):
            raise ShapeMismatch(
                f"expected {self.n_cells(m)} cell values at time {m}, got {cell_values.shape}"
            )
        return cell_values[self.atom_to_cell(m)]

    def restrict(self, m: int, atom_values: np.ndarray, atol: float = 0.0) -> np.ndarray:
        """Collapse a per-atom array that is constant on time-``m`` cells."""
        atom_values = np.asarray(atom_values, dtype=float)
        if atom_values.shape != (self.n_atoms,):
            raise ShapeMismatch(f"expected {self.n_atoms} atom values, got {atom_values.shape}")
        out = np.empty(self.n_cells(m))
        for j, cell in enumerate(self.partitions[m]):
            vals = atom_values[list(cell)]
            if np.max(vals) - np.min(vals) > atol:
                raise ShapeMismatch(
                    f"values are not measurable at time {m}: cell {j} spans "
                    f"[{vals.min()}, {vals.max()}]"
                )
            out[j] = vals[0]
        return out


def build_space(n_atoms: int, partitions: Sequence[Iterable[Iterable[int]]]) -> FilteredSpace:
    """Validate raw partition data and return a canonical :class:`FilteredSpace`.

    Atom indices are 0-based here; the file format uses 1-based indices and
    is shifted during parsing.  Raises :class:`TrivialRootMissing`,
    :class:`BadCover` or :class:`NonRefining` on invalid input.
    """
    if n_atoms < 1:
        raise SpaceError("need at least one atom")
    if len(partitions) < 2:
        raise SpaceError("need partitions for times 0..N with N >= 1")
    canon = tuple(_canonical_partition(p) for p in partitions)

    for m, part in enumerate(canon):
        seen: list[int] = []
        for cell in part:
            if not cell:
                raise BadCover(f"time {m}: empty cell")
            seen.extend(cell)
        if sorted(seen) != list(range(n_atoms)):
            raise BadCover(
                f"time {m}: cells do not partition the {n_atoms} atoms exactly once"
            )

    if len(canon[0]) != 1:
        raise TrivialRootMissing("partition 0 must be the single cell of all atoms")

    space = FilteredSpace(n_atoms=n_atoms, partitions=canon)
    for m in range(1, space.horizon + 1):
        coarse = space.atom_to_cell(m - 1)
        for cell in canon[m]:
            owners = {int(coarse[a]) for a in cell}
            if len(owners) != 1:
                raise NonRefining(
                    f"time {m}: cell {cell} straddles time-{m - 1} cells {sorted(owners)}"
                )
    return space


@dataclass(frozen=True, eq=False)
class Measure:
    """A strictly positive probability vector over atoms."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        # copy before freezing so the caller's array is left alone
        probs = np.array(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1:
            raise ValueError("probs must be one-dimensional")
        if not np.all(np.isfinite(probs)):
            raise ValueError("probs must be finite")
        if probs.min(initial=np.inf) <= MIN_PROB:
            raise ValueError(f"measure must be strictly positive (min entry > {MIN_PROB})")
        if abs(float(probs.sum()) - 1.0) > STRICT_TOL:
            raise ValueError(f"probs sum to {probs.sum()}, not 1")

    def __len__(self) -> int:
        return self.probs.shape[0]

    def cell_prob(self, space: FilteredSpace, m: int) -> np.ndarray:
        """Probability of each time-``m`` cell."""
        return np.array([self.probs[list(cell)].sum() for cell in space.cells(m)])

    def expect(self, xi: np.ndarray) -> float:
        return float(np.dot(self.probs, np.asarray(xi, dtype=float)))


@dataclass(frozen=True, eq=False)
class MeasureFamily:
    """Finitely many extreme measures; their convex hull is the prior set."""

    space: FilteredSpace
    extremes: tuple[Measure, ...]

    def __post_init__(self) -> None:
        extremes = tuple(self.extremes)
        object.__setattr__(self, "extremes", extremes)
        if not extremes:
            raise ValueError("family needs at least one measure")
        for p in extremes:
            if len(p) != self.space.n_atoms:
                raise ShapeMismatch("measure length does not match the space")
        for i in range(len(extremes)):
            for j in range(i + 1, len(extremes)):
                if np.array_equal(extremes[i].probs, extremes[j].probs):
                    raise ValueError(f"duplicate extreme measures at positions {i} and {j}")

    def __len__(self) -> int:
        return len(self.extremes)

    def __iter__(self):
        return iter(self.extremes)


@dataclass(frozen=True, eq=False)
class AdaptedProcess:
    """One value per cell per time; the process cannot peek into the future."""

    space: FilteredSpace
    per_time: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        vals = []
        if len(self.per_time) != self.space.horizon + 1:
            raise ShapeMismatch(
                f"process has {len(self.per_time)} levels, space horizon is {self.space.horizon}"
            )
        for m, level in enumerate(self.per_time):
            arr = np.array(level, dtype=float)  # copy before freezing
            if arr.shape != (self.space.n_cells(m),):
                raise ShapeMismatch(
                    f"time {m}: got {arr.shape[0] if arr.ndim == 1 else arr.shape} values, "
                    f"partition has {self.space.n_cells(m)} cells"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"time {m}: non-finite process values")
            arr.setflags(write=False)
            vals.append(arr)
        object.__setattr__(self, "per_time", tuple(vals))

    @classmethod
    def from_atom_values(
        cls, space: FilteredSpace, levels: Sequence[np.ndarray], atol: float = 0.0
    ) -> "AdaptedProcess":
        """Build from per-atom arrays, verifying measurability at each time."""
        per_time = tuple(space.restrict(m, lvl, atol=atol) for m, lvl in enumerate(levels))
        return cls(space=space, per_time=per_time)

    @property
    def horizon(self) -> int:
        return self.space.horizon

    def at_cells(self, m: int) -> np.ndarray:
        return self.per_time[m]

    def at_atoms(self, m: int) -> np.ndarray:
        return self.space.expand(m, self.per_time[m])

    def terminal(self) -> np.ndarray:
        return self.at_atoms(self.horizon)


# ---------------------------------------------------------------------------
# conditional expectations


def _as_rv(space: FilteredSpace, xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (space.n_atoms,):
        raise ShapeMismatch(f"random variable has shape {xi.shape}, space has {space.n_atoms} atoms")
    if not np.all(np.isfinite(xi)):
        raise ValueError("random variable must be finite")
    return xi


def cond_exp_cells(space: FilteredSpace, xi: np.ndarray, p: Measure, m: int) -> np.ndarray:
    """Conditional expectation of ``xi`` given time ``m``, one value per cell."""
    xi = _as_rv(space, xi)
    out = np.empty(space.n_cells(m))
    for j, cell in enumerate(space.cells(m)):
        idx = list(cell)
        w = p.probs[idx]
        out[j] = float(np.dot(w, xi[idx]) / w.sum())
    return out


def cond_exp(space: FilteredSpace, xi: np.ndarray, p: Measure, m: int) -> np.ndarray:
    """Conditional expectation of ``xi`` given time ``m``, expanded to atoms."""
    return space.expand(m, cond_exp_cells(space, xi, p, m))


def _check_weights(weights: np.ndarray, k: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (k,):
        raise BadWeights(f"expected {k} weights, got shape {w.shape}")
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > STRICT_TOL:
        raise BadWeights("weights must be nonnegative and sum to 1")
    return w


def mixture(family: MeasureFamily, weights: np.ndarray) -> Measure:
    """Convex combination of the family's extremes."""
    w = _check_weights(weights, len(family))
    probs = np.zeros(family.space.n_atoms)
    for wi, p in zip(w, family):
        probs = probs + wi * p.probs
    return Measure(probs / probs.sum())


def cond_exp_mixture(
    space: FilteredSpace,
    xi: np.ndarray,
    family: MeasureFamily,
    weights: np.ndarray,
    m: int,
) -> np.ndarray:
    """Conditional expectation under a mixed measure, via the density-weighted
    combination of the extremes' conditional expectations.

    Numerator and denominator both live on cells of time ``m``: each extreme
    contributes its conditional expectation weighted by its mixture weight
    times the conditional expectation of its density against the first
    extreme.  The result agrees with :func:`cond_exp` under the mixed
    measure to near machine precision.
    """
    xi = _as_rv(space, xi)
    w = _check_weights(weights, len(family))
    base = family.extremes[0]
    num = np.zeros(space.n_cells(m))
    den = np.zeros(space.n_cells(m))
    for wi, p in zip(w, family):
        phi = p.probs / base.probs
        e_phi = cond_exp_cells(space, phi, base, m)
        num += wi * e_phi * cond_exp_cells(space, xi, p, m)
        den += wi * e_phi
    return space.expand(m, num / den)


def cond_exp_change_of_measure(
    space: FilteredSpace,
    xi: np.ndarray,
    p_target: Measure,
    p_base: Measure,
    m: int,
) -> np.ndarray:
    """Conditional expectation under ``p_target`` computed with ``p_base``.

    Uses the normalized density trick: multiply ``xi`` by the atomwise
    density of ``p_target`` against ``p_base``, renormalized by that
    density's conditional expectation, and condition under ``p_base``.
    """
    xi = _as_rv(space, xi)
    density = p_target.probs / p_base.probs
    scale = cond_exp(space, density, p_base, m)
    return cond_exp(space, xi * density / scale, p_base, m)


def ess_sup_cond_exp_cells(
    space: FilteredSpace, xi: np.ndarray, family: MeasureFamily, m: int
) -> np.ndarray:
    """Cellwise upper envelope of conditional expectations over the family.

    On a finite hull the essential supremum over every mixture equals the
    pointwise maximum over the extremes.
    """
    stacked = np.vstack([cond_exp_cells(space, xi, p, m) for p in family])
    return stacked.max(axis=0)


def ess_sup_cond_exp(
    space: FilteredSpace, xi: np.ndarray, family: MeasureFamily, m: int
) -> np.ndarray:
    return family.space.expand(m, ess_sup_cond_exp_cells(space, xi, family, m))


# ---------------------------------------------------------------------------
# densities and contractions


def rn_bounds(family: MeasureFamily) -> tuple[float, float]:
    """Global min and max of atomwise densities over ordered extreme pairs.

    By the mediant inequality the same bounds hold between any two mixtures,
    so (l, L) bound the densities across the whole hull; 0 < l <= 1 <= L.
    """
    lo, hi = np.inf, -np.inf
    for p in family:
        for q in family:
            ratio = p.probs / q.probs
            lo = min(lo, float(ratio.min()))
            hi = max(hi, float(ratio.max()))
    return lo, hi


def contract(family: MeasureFamily, m: int) -> list[np.ndarray]:
    """Each extreme reduced to its vector of time-``m`` cell probabilities."""
    return [p.cell_prob(family.space, m) for p in family]


def rho_metric(p_contracted: np.ndarray, q_contracted: np.ndarray) -> float:
    """Total-variation style distance between two cell-probability vectors.

    Sums |difference| over all cells.  This is a pseudometric on contracted
    measures: distinct measures can contract to the same vector.
    """
    p = np.asarray(p_contracted, dtype=float)
    q = np.asarray(q_contracted, dtype=float)
    if p.shape != q.shape:
        raise LengthMismatch(f"contracted vectors differ in shape: {p.shape} vs {q.shape}")
    return float(np.abs(p - q).sum())
