"""Random instance generators for property suites and counterexample search.

The supermartingale generator is sound by construction: it samples a true
family-martingale by solving the per-node zero-drift system (one equality
per extreme, cell by cell, sampled from the nullspace), subtracts a random
non-decreasing process, and shifts everything up to nonnegativity.  Every
instance it emits therefore admits a decomposition, which is what the
round-trip suites rely on.
"""

from __future__ import annotations

import numpy as np

from .space import AdaptedProcess, FilteredSpace, Measure, MeasureFamily, build_space

__all__ = [
    "random_space",
    "random_family",
    "random_martingale",
    "random_nondecreasing",
    "random_supermartingale",
    "product_family",
]


def random_space(
    rng: np.random.Generator, max_atoms: int = 8, max_periods: int = 3
) -> FilteredSpace:
    """A space with 2..max_atoms atoms and 1..max_periods refining splits."""
    n_atoms = int(rng.integers(2, max_atoms + 1))
    horizon = int(rng.integers(1, max_periods + 1))
    atoms = list(range(n_atoms))
    partitions: list[list[list[int]]] = [[atoms]]
    for m in range(1, horizon + 1):
        prev = partitions[-1]
        level: list[list[int]] = []
        for cell in prev:
            # the first level must split so the filtration is not all-trivial
            must_split = m == 1 and len(prev) == 1
            if len(cell) >= 2 and (must_split or rng.random() < 0.7):
                n_parts = int(rng.integers(2, len(cell) + 1))
                labels = rng.integers(0, n_parts, size=len(cell))
                # guarantee every part is hit
                labels[rng.permutation(len(cell))[:n_parts]] = np.arange(n_parts)
                for part in range(n_parts):
                    sub = [cell[i] for i in range(len(cell)) if labels[i] == part]
                    if sub:
                        level.append(sub)
            else:
                level.append(list(cell))
        partitions.append(level)
    return build_space(n_atoms, partitions)


def random_family(
    rng: np.random.Generator, space: FilteredSpace, max_extremes: int = 3
) -> MeasureFamily:
    """1..max_extremes strictly positive measures, kept well away from zero."""
    k = int(rng.integers(1, max_extremes + 1))
    n = space.n_atoms
    extremes = []
    for _ in range(k):
        p = rng.dirichlet(np.full(n, 2.0))
        p = 0.9 * p + 0.1 / n  # floor of 0.1/n on every atom
        extremes.append(Measure(p / p.sum()))
    return MeasureFamily(space=space, extremes=tuple(extremes))


def product_family(
    rng: np.random.Generator,
    space: FilteredSpace,
    max_extremes: int = 8,
) -> MeasureFamily:
    """A family stable under pasting of conditional pieces.

    Every node (cell of one partition looking at its children in the next)
    gets its own small set of conditional laws, drawn independently; the
    extremes are all combinations of one choice per node.  Atoms inside a
    terminal cell share a single conditional law across the whole family.
    Combining the conditional pieces of two members again lands in the
    family, which is the structural hypothesis under which the envelope
    identities hold.
    """
    from itertools import product as iter_product

    nodes: list[tuple[int, np.ndarray, list[np.ndarray]]] = []
    total = 1
    for m in range(1, space.horizon + 1):
        parent = space.parent_cell(m)
        for b in range(space.n_cells(m - 1)):
            children = np.where(parent == b)[0]
            if children.shape[0] == 1:
                nodes.append((m, children, [np.ones(1)]))
                continue
            n_choices = 2 if total * 2 <= max_extremes and rng.random() < 0.8 else 1
            laws = []
            for _ in range(n_choices):
                v = rng.dirichlet(np.full(children.shape[0], 2.0))
                v = 0.9 * v + 0.1 / children.shape[0]
                laws.append(v / v.sum())
            total *= n_choices
            nodes.append((m, children, laws))
    terminal_laws = []
    for cell in space.cells(space.horizon):
        v = rng.dirichlet(np.full(len(cell), 2.0))
        v = 0.9 * v + 0.1 / len(cell)
        terminal_laws.append(v / v.sum())

    extremes = []
    for picks in iter_product(*[range(len(laws)) for _, _, laws in nodes]):
        cell_prob = {0: np.ones(1)}
        for (m, children, laws), pick in zip(nodes, picks):
            probs = cell_prob.setdefault(m, np.zeros(space.n_cells(m)))
            parent = space.parent_cell(m)
            probs[children] = cell_prob[m - 1][parent[children[0]]] * laws[pick]
        atom_probs = np.zeros(space.n_atoms)
        for c, cell in enumerate(space.cells(space.horizon)):
            atom_probs[list(cell)] = cell_prob[space.horizon][c] * terminal_laws[c]
        extremes.append(Measure(atom_probs / atom_probs.sum()))
    # duplicate extremes can only arise from degenerate draws; keep the first
    unique = []
    for p in extremes:
        if not any(np.array_equal(p.probs, q.probs) for q in unique):
            unique.append(p)
    return MeasureFamily(space=space, extremes=tuple(unique))


def random_martingale(
    rng: np.random.Generator,
    space: FilteredSpace,
    family: MeasureFamily,
    start: float = 1.0,
    spread: float = 0.5,
) -> AdaptedProcess:
    """A process with zero one-step drift under every extreme.

    Per node the child values must satisfy one linear equation per extreme;
    a random nullspace direction is added to the constant continuation.
    """
    levels = [np.array([float(start)])]
    for m in range(1, space.horizon + 1):
        prev = levels[-1]
        parent = space.parent_cell(m)
        vals = np.empty(space.n_cells(m))
        for b in range(space.n_cells(m - 1)):
            children = np.where(parent == b)[0]
            rows = []
            for p in family:
                mass = np.array([p.probs[list(space.cells(m)[c])].sum() for c in children])
                rows.append(mass / mass.sum())
            rmat = np.vstack(rows)
            x = np.full(children.shape[0], prev[b])
            # nullspace of the conditional-probability rows
            _, s, vt = np.linalg.svd(rmat, full_matrices=True)
            rank = int(np.sum(s > 1e-12))
            null = vt[rank:]
            if null.shape[0]:
                coeffs = rng.normal(scale=spread, size=null.shape[0])
                x = x + null.T @ coeffs
            vals[children] = x
        levels.append(vals)
    return AdaptedProcess(space=space, per_time=tuple(levels))


def random_nondecreasing(
    rng: np.random.Generator, space: FilteredSpace, max_step: float = 0.5
) -> AdaptedProcess:
    """Adapted, non-decreasing, starting at zero."""
    levels = [np.zeros(1)]
    for m in range(1, space.horizon + 1):
        parent = space.parent_cell(m)
        inc = rng.uniform(0.0, max_step, size=space.n_cells(m))
        levels.append(levels[-1][parent] + inc)
    return AdaptedProcess(space=space, per_time=tuple(levels))


def random_supermartingale(
    rng: np.random.Generator,
    space: FilteredSpace,
    family: MeasureFamily,
    margin: float = 0.1,
) -> tuple[AdaptedProcess, AdaptedProcess, AdaptedProcess]:
    """A nonnegative family-supermartingale built as martingale minus
    non-decreasing compensator, shifted up by ``margin``.

    Returns (f, martingale, compensator) with f = martingale - compensator.
    """
    mart = random_martingale(rng, space, family)
    comp = random_nondecreasing(rng, space)
    f_levels = [mart.at_cells(m) - comp.at_cells(m) for m in range(space.horizon + 1)]
    lowest = min(float(lvl.min()) for lvl in f_levels)
    shift = margin - lowest if lowest < margin else 0.0
    mart_shifted = tuple(mart.at_cells(m) + shift for m in range(space.horizon + 1))
    f = tuple(lvl + shift for lvl in f_levels)
    return (
        AdaptedProcess(space=space, per_time=f),
        AdaptedProcess(space=space, per_time=mart_shifted),
        comp,
    )
