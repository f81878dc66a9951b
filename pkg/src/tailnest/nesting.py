"""Iterated tail nestings of vertex copulas and their exact finite-depth laws.

A :class:`NestSequence` holds vertex copulas ``z_1, ..., z_N`` sharing a
dimension ``r`` and an order ``k``.  It stands for the box copula ``c^N``:
below level ``N`` the remaining o-boxes are filled uniformly, so every answer
computed here is exact rather than an approximation of the infinite limit.

Two nesting schemes are supported:

``"tail"``
    Level ``l`` is nested into the o-boxes with respect to each vertex: a box
    whose coordinates in a set ``A`` are still at the origin receives the
    projection of ``z_l`` onto ``A`` times the uniform measure on the other
    coordinates.  Once at most ``k`` coordinates remain, nothing changes any
    more and the rest is uniform.
``"full"``
    Every box of the current grid receives a full copy of the next level.
    This is the construction behind the base-2 parity copula and its binary
    digit structure.  It shares the o-box masses with ``"tail"``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .vertex_algebra import (
    MAX_DIM,
    PROB_TOL,
    VertexCopula,
    check_order,
    check_dimension,
    complement,
    format_vertex,
    full_mask,
    popcount,
    uniform_weights,
    zero_counts,
)

SCHEMES = ("tail", "full")
GRID_BUDGET = 1 << 24


class SequenceError(ValueError):
    """A nest sequence violates the order condition at some level."""

    def __init__(self, message: str, report: list[str] | None = None):
        super().__init__(message)
        self.report = report or []


class BudgetExceeded(ValueError):
    """A dense grid would exceed the configured cell budget."""


def _submasks(v: int):
    s = v
    while True:
        yield s
        if s == 0:
            return
        s = (s - 1) & v


def _fold_outside(z: np.ndarray, keep: int, r: int) -> np.ndarray:
    """Marginalise the bits outside ``keep`` onto their 0 position.

    Entry ``m`` of the result, for ``m`` a submask of ``keep``, is the mass of
    the projection of ``z`` onto ``keep`` at ``m``.
    """
    out = np.array(z, dtype=float, copy=True)
    for i in range(r):
        if not (keep >> i) & 1:
            view = out.reshape(-1, 2, 1 << i)
            view[:, 0, :] += view[:, 1, :]
            view[:, 1, :] = 0.0
    return out


class NestSequence:
    """Finite sequence of vertex copulas read as an iterated nesting.

    Parameters
    ----------
    levels : sequence of VertexCopula
        ``z_1, ..., z_N``, all of dimension ``r``.  May be empty when ``r``
        is given, which yields the uniform copula.
    k : int
        Common order; each level must be a vertex copula of order ``k``.
    scheme : {"tail", "full"}
        How the levels are nested, see the module docstring.
    r : int, optional
        Dimension, required only for an empty sequence.
    validate : bool
        Check every level with :func:`check_order` and raise
        :class:`SequenceError` on failure.
    """

    def __init__(
        self,
        levels: Sequence[VertexCopula],
        k: int,
        scheme: str = "tail",
        r: int | None = None,
        validate: bool = True,
    ):
        levels = tuple(levels)
        if r is None:
            if not levels:
                raise ValueError("dimension is required for an empty sequence")
            r = levels[0].r
        self.r = check_dimension(r, MAX_DIM)
        if scheme not in SCHEMES:
            raise ValueError(f"unknown nesting scheme {scheme!r}; expected one of {SCHEMES}")
        self.scheme = scheme
        k = int(k)
        if not 0 <= k <= self.r:
            raise ValueError(f"order must lie in [0, {self.r}], got {k}")
        self.k = k
        for n, level in enumerate(levels, 1):
            if level.r != self.r:
                raise ValueError(f"level {n} has dimension {level.r}, expected {self.r}")
        self.levels = levels
        if validate:
            report = self.validation_report()
            if report:
                raise SequenceError(f"{len(report)} order violations", report)

        n = len(levels)
        self.splits = np.array([lv.u for lv in levels], dtype=float).reshape(n, self.r)
        corners = np.ones((n + 1, self.r))
        for l in range(n):
            corners[l + 1] = corners[l] * self.splits[l]
        self.corners = corners
        self.splits.setflags(write=False)
        self.corners.setflags(write=False)
        self._proj_cache: dict[tuple[int, int], np.ndarray] = {}

    @property
    def depth(self) -> int:
        return len(self.levels)

    def __len__(self) -> int:
        return len(self.levels)

    def __repr__(self) -> str:
        return f"NestSequence(r={self.r}, k={self.k}, depth={self.depth}, scheme={self.scheme!r})"

    def validation_report(self, tol: float = PROB_TOL) -> list[str]:
        out = []
        for n, level in enumerate(self.levels, 1):
            res = check_order(level.z, level.u, self.k, tol)
            out.extend(f"level {n}: {msg}" for msg in res.violations)
        return out

    def truncated(self, n: int) -> "NestSequence":
        if not 0 <= n <= self.depth:
            raise ValueError(f"truncation depth {n} outside [0, {self.depth}]")
        return NestSequence(self.levels[:n], self.k, self.scheme, r=self.r, validate=False)

    def projected_weights(self, level: int, keep: int) -> np.ndarray:
        """Projection of level ``level`` (0-based) onto the coordinates in ``keep``.

        Indexed by full-width masks: entry ``m`` for ``m`` a submask of ``keep``.
        """
        key = (level, keep)
        cached = self._proj_cache.get(key)
        if cached is None:
            cached = _fold_outside(self.levels[level].z, keep, self.r)
            cached.setflags(write=False)
            if len(self._proj_cache) < 1 << 14:
                self._proj_cache[key] = cached
        return cached

    def continuation_mass(self) -> np.ndarray:
        """Per level, the mass of vertices with more than ``k`` zero bits."""
        if self.scheme == "full":
            return np.ones(self.depth)
        deep = zero_counts(self.r) > self.k
        return np.array([float(lv.z[deep].sum()) for lv in self.levels])

    def p_max(self) -> float:
        cont = self.continuation_mass()
        return float(cont.max()) if cont.size else 0.0

    def same_as(self, other: "NestSequence") -> bool:
        """Bitwise equality of all stored weights and splits."""
        if (self.r, self.k, self.scheme, self.depth) != (other.r, other.k, other.scheme, other.depth):
            return False
        return all(
            a.u.tobytes() == b.u.tobytes() and a.x.tobytes() == b.x.tobytes()
            for a, b in zip(self.levels, other.levels)
        )


def constant_sequence(level: VertexCopula, depth: int, k: int | None = None, scheme: str = "tail") -> NestSequence:
    return NestSequence([level] * depth, level.k if k is None else k, scheme, r=level.r)


def _check_point(seq: NestSequence, w: Sequence[float]) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != seq.r:
        raise ValueError(f"point has {w.size} coordinates, sequence has dimension {seq.r}")
    if not np.all((w >= 0.0) & (w <= 1.0)):
        raise ValueError(f"point {w.tolist()} lies outside the unit cube")
    return w


def _check_depth(seq: NestSequence, depth: int | None) -> int:
    if depth is None:
        return seq.depth
    if not 0 <= depth <= seq.depth:
        raise ValueError(f"depth {depth} exceeds the {seq.depth} stored levels")
    return int(depth)


def exact_cdf(seq: NestSequence, w: Sequence[float], depth: int | None = None) -> float:
    """``c^n([0, w])`` for the sequence truncated at ``depth`` (all levels by default)."""
    w = _check_point(seq, w)
    n = _check_depth(seq, depth)
    if np.any(w <= 0.0):
        return 0.0
    if seq.scheme == "full":
        return _cdf_full(seq, w, n)
    return _cdf_tail(seq, w, n)


def _uniform_box(w: np.ndarray, scale: np.ndarray, mask: int) -> float:
    out = 1.0
    i = 0
    while mask >> i:
        if (mask >> i) & 1:
            out *= w[i] / scale[i]
        i += 1
    return out


def _cdf_tail(seq: NestSequence, w: np.ndarray, n: int) -> float:
    # States are active coordinate sets still confined to [0, d^(l-1)] and
    # still cut by the query; weights are accumulated probabilities.
    r, k = seq.r, seq.k
    corners = seq.corners
    start = sum(1 << i for i in range(r) if w[i] < 1.0)
    states: dict[int, float] = {start: 1.0}
    total = 0.0
    for l in range(1, n + 1):
        prev, cur = corners[l - 1], corners[l]
        nxt: dict[int, float] = defaultdict(float)
        for active, weight in states.items():
            if active == 0:
                total += weight
                continue
            if popcount(active) <= k:
                total += weight * _uniform_box(w, prev, active)
                continue
            lifted = seq.projected_weights(l - 1, active)
            upper = 0
            low = 0
            rel = {}
            for i in range(r):
                if not (active >> i) & 1:
                    continue
                if w[i] > cur[i]:
                    upper |= 1 << i
                    rel[i] = min(1.0, (w[i] - cur[i]) / (prev[i] - cur[i]))
                elif w[i] < cur[i]:
                    low |= 1 << i
            for mu in _submasks(upper):
                p = lifted[mu]
                if p == 0.0:
                    continue
                f = weight * p
                j = 0
                while mu >> j:
                    if (mu >> j) & 1:
                        f *= rel[j]
                    j += 1
                nxt[active & ~mu & low] += f
        states = nxt
    last = corners[n]
    for active, weight in states.items():
        total += weight * _uniform_box(w, last, active)
    return total


def _cdf_full(seq: NestSequence, w: np.ndarray, n: int) -> float:
    # States are the coordinates whose current cell is cut by the query; the
    # cell containing w_i at each level does not depend on the state.
    r = seq.r
    lo = np.zeros(r)
    ln = np.ones(r)
    start = sum(1 << i for i in range(r) if w[i] < 1.0)
    states: dict[int, float] = {start: 1.0}
    total = 0.0
    for l in range(1, n + 1):
        u = seq.splits[l - 1]
        cut = lo + u * ln
        upper = sum(1 << i for i in range(r) if w[i] > cut[i])
        lower = sum(1 << i for i in range(r) if w[i] < cut[i])
        nxt: dict[int, float] = defaultdict(float)
        for part, weight in states.items():
            if part == 0:
                total += weight
                continue
            lifted = seq.projected_weights(l - 1, part)
            for mu in _submasks(part & upper):
                p = lifted[mu]
                if p == 0.0:
                    continue
                nxt[(part & lower) | mu] += weight * p
        states = nxt
        up = w > cut
        lo = np.where(up, cut, lo)
        ln = np.where(up, ln * (1.0 - u), ln * u)
    for part, weight in states.items():
        f = weight
        for i in range(r):
            if (part >> i) & 1:
                f *= (w[i] - lo[i]) / ln[i]
        total += f
    return total


def obox_mass(seq: NestSequence, n: int, nu: int) -> float:
    """Mass of the o-box ``[0, d^(n)(nu)]`` of the projection along ``F(nu)``.

    Equals the product of the raw masses ``x_l[nu]`` over the first ``n`` levels.
    """
    n = _check_depth(seq, n)
    if not 0 <= nu <= full_mask(seq.r):
        raise ValueError(f"vertex {nu} out of range for r={seq.r}")
    out = 1.0
    for level in seq.levels[:n]:
        out *= float(level.x[nu])
    return out


def obox_corner(seq: NestSequence, n: int, nu: int = 0) -> np.ndarray:
    """Corner of ``[0, d^(n)(nu)]`` lifted to the cube: coordinates in ``nu`` are set to 1."""
    n = _check_depth(seq, n)
    d = seq.corners[n].copy()
    for i in range(seq.r):
        if (nu >> i) & 1:
            d[i] = 1.0
    return d


def lift_point(w: Sequence[float], nu: int, r: int) -> np.ndarray:
    """Embed a point on the zero coordinates of ``nu`` into the cube, with 1 elsewhere."""
    w = list(np.asarray(w, dtype=float).reshape(-1))
    out = np.ones(r)
    j = 0
    for i in range(r):
        if not (nu >> i) & 1:
            out[i] = w[j]
            j += 1
    if j != len(w):
        raise ValueError(f"point has {len(w)} coordinates, vertex {format_vertex(nu, r)} keeps {j}")
    return out


def project_sequence(seq: NestSequence, nu: int) -> NestSequence:
    """Levelwise projection along ``F(nu)`` onto the coordinates where ``nu`` is zero."""
    if not 0 <= nu <= full_mask(seq.r):
        raise ValueError(f"vertex {nu} out of range for r={seq.r}")
    keep = complement(nu, seq.r)
    if keep == 0:
        raise ValueError("projecting along the full cube leaves an empty target")
    r_new = popcount(keep)
    k_new = min(seq.k, r_new)
    levels = [lv.project(nu) for lv in seq.levels]
    levels = [VertexCopula(lv.u, lv.x, k_new) for lv in levels]
    return NestSequence(levels, k_new, seq.scheme, r=r_new, validate=False)


# --------------------------------------------------------------------------
# dense grid oracle


@dataclass(eq=False)
class GridMeasure:
    """Box measure on the level-``n`` refinement of a sequence of vertex splits.

    Cells are indexed by one vertex per level, level 1 most significant:
    ``index = sum_l mu_l * 2**(r * (n - l))``.  Every cell carries the uniform
    measure with the stored mass.
    """

    r: int
    splits: np.ndarray  # (n, r)
    masses: np.ndarray  # (2**(r*n),)

    def __post_init__(self) -> None:
        self.splits = np.asarray(self.splits, dtype=float).reshape(-1, self.r)
        self.masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if self.masses.size != 1 << (self.r * self.depth):
            raise ValueError(
                f"{self.masses.size} masses do not fit a depth-{self.depth} grid in dimension {self.r}"
            )

    @property
    def depth(self) -> int:
        return self.splits.shape[0]

    @classmethod
    def from_vertex_weights(cls, u: Sequence[float], z: Sequence[float]) -> "GridMeasure":
        u = np.asarray(u, dtype=float).reshape(-1)
        return cls(u.size, u.reshape(1, -1), np.asarray(z, dtype=float))

    @classmethod
    def uniform(cls, splits: np.ndarray) -> "GridMeasure":
        splits = np.asarray(splits, dtype=float)
        g = cls(splits.shape[1], splits, np.ones(1 << (splits.shape[1] * splits.shape[0])))
        g.masses = g.volumes()
        return g

    def volumes(self) -> np.ndarray:
        out = np.ones(1)
        for u in self.splits:
            out = np.kron(out, uniform_weights(u))
        return out

    def total(self) -> float:
        return float(self.masses.sum())

    def is_probability(self, tol: float = PROB_TOL) -> bool:
        return bool(np.all(self.masses >= -tol) and abs(self.total() - 1.0) <= tol)

    def multi_index(self, flat: int) -> tuple[int, ...]:
        size = 1 << self.r
        out = []
        for _ in range(self.depth):
            out.append(flat % size)
            flat //= size
        return tuple(reversed(out))

    def flat_index(self, cell: Sequence[int]) -> int:
        cell = tuple(int(c) for c in cell)
        if len(cell) != self.depth:
            raise ValueError(
                f"target must be a single cell at the stored resolution: got {len(cell)} "
                f"levels, grid has {self.depth}"
            )
        flat = 0
        for mu in cell:
            if not 0 <= mu < 1 << self.r:
                raise ValueError(f"vertex {mu} out of range for r={self.r}")
            flat = (flat << self.r) | mu
        return flat

    def cell_bounds(self, cell: Sequence[int] | int) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(cell, (int, np.integer)):
            cell = self.multi_index(int(cell))
        lo = np.zeros(self.r)
        ln = np.ones(self.r)
        for u, mu in zip(self.splits, cell):
            bit = np.array([(mu >> i) & 1 for i in range(self.r)], dtype=bool)
            lo = np.where(bit, lo + u * ln, lo)
            ln = np.where(bit, ln * (1.0 - u), ln * u)
        return lo, lo + ln

    def project(self, keep: int) -> "GridMeasure":
        """Marginal grid measure on the coordinates in ``keep``."""
        r, n = self.r, self.depth
        if keep == 0 or keep > full_mask(r):
            raise ValueError(f"invalid coordinate mask {keep}")
        if keep == full_mask(r):
            return GridMeasure(r, self.splits.copy(), self.masses.copy())
        axes = tuple(
            l * r + (r - 1 - i) for l in range(n) for i in range(r) if not (keep >> i) & 1
        )
        masses = self.masses.reshape((2,) * (r * n)).sum(axis=axes).reshape(-1)
        cols = [i for i in range(r) if (keep >> i) & 1]
        return GridMeasure(len(cols), self.splits[:, cols], masses)

    def is_order(self, k: int, tol: float = PROB_TOL) -> bool:
        """Brute-force order test: every k-dimensional marginal is uniform."""
        if not self.is_probability(tol):
            return False
        if k == 0:
            return True
        for cols in combinations(range(self.r), k):
            keep = sum(1 << i for i in cols)
            marg = self.project(keep)
            if np.max(np.abs(marg.masses - marg.volumes())) > tol:
                return False
        return True

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Flat cell index for each row of ``points`` (half-open cells, 1 in the last)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.r)
        lo = np.zeros_like(pts)
        ln = np.ones_like(pts)
        idx = np.zeros(pts.shape[0], dtype=np.int64)
        weights = 1 << np.arange(self.r, dtype=np.int64)
        for u in self.splits:
            cut = lo + u * ln
            bit = pts >= cut
            lo = np.where(bit, cut, lo)
            ln = np.where(bit, ln * (1.0 - u), ln * u)
            idx = (idx << self.r) | (bit.astype(np.int64) @ weights)
        return idx

    def box_mass(self, lo: Sequence[float], hi: Sequence[float]) -> float:
        """Mass of an axis-aligned box, using uniformity inside each cell."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        frac = np.ones(self.masses.size)
        for i in range(self.r):
            a, b = self._edges(i)
            overlap = np.clip(np.minimum(b, hi[i]) - np.maximum(a, lo[i]), 0.0, None) / (b - a)
            frac *= overlap
        return float(self.masses @ frac)

    def _edges(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        # per-cell interval of coordinate i, in flat cell order
        lo = np.zeros(1)
        ln = np.ones(1)
        r = self.r
        for u in self.splits:
            bit = (np.arange(1 << r) >> i) & 1
            lo = (lo[:, None] + np.where(bit, u[i], 0.0)[None, :] * ln[:, None]).reshape(-1)
            ln = (ln[:, None] * np.where(bit, 1.0 - u[i], u[i])[None, :]).reshape(-1)
        return lo, lo + ln


def grid_cells(r: int, depth: int) -> int:
    return 1 << (r * depth)


def refine_to_grid(seq: NestSequence, depth: int | None = None, budget: int = GRID_BUDGET) -> GridMeasure:
    """Exact masses of ``c^n`` on the full level-``n`` refinement."""
    n = _check_depth(seq, depth)
    r = seq.r
    if grid_cells(r, n) > budget:
        raise BudgetExceeded(f"depth-{n} grid in dimension {r} has 2**{r * n} cells, budget is {budget}")
    if seq.scheme == "full":
        masses = np.ones(1)
        for level in seq.levels[:n]:
            masses = np.kron(masses, level.z)
        return GridMeasure(r, seq.splits[:n].copy(), masses)

    verts = np.arange(1 << r, dtype=np.int64)
    masses = np.ones(1)
    active = np.array([full_mask(r)], dtype=np.int64)
    for l in range(n):
        uw = uniform_weights(seq.splits[l])
        keys, inv = np.unique(active, return_inverse=True)
        factors = np.empty((keys.size, 1 << r))
        for j, a in enumerate(keys):
            a = int(a)
            if popcount(a) <= seq.k:
                factors[j] = uw
                continue
            # projected level on the active bits times uniform on the rest
            lifted = seq.projected_weights(l, a)
            released = complement(a, r)
            factors[j] = lifted[verts & a] * _fold_outside(uw, released, r)[verts & released]
        masses = (masses[:, None] * factors[inv]).reshape(-1)
        new_active = active[:, None] & ~verts[None, :]
        still = np.bitwise_count(new_active.astype(np.uint64)) > seq.k
        active = np.where(still, new_active, 0).reshape(-1)
    return GridMeasure(r, seq.splits[:n].copy(), masses)


def nest_grid(outer: GridMeasure, inner: GridMeasure, cell: Sequence[int] | int) -> GridMeasure:
    """Replace one cell of ``outer`` by a rescaled copy of ``inner``.

    The result lives on the refinement whose extra levels are those of
    ``inner``; cells other than the target keep their uniform content.
    """
    if outer.r != inner.r:
        raise ValueError(f"dimensions differ: {outer.r} vs {inner.r}")
    flat = int(cell) if isinstance(cell, (int, np.integer)) else outer.flat_index(cell)
    if not 0 <= flat < outer.masses.size:
        raise ValueError(f"cell {flat} does not exist in a grid of {outer.masses.size} cells")
    if not math.isclose(inner.total(), 1.0, abs_tol=PROB_TOL):
        raise ValueError("inner measure must be a probability measure")
    fill = GridMeasure.uniform(inner.splits).masses
    masses = np.kron(outer.masses, fill)
    size = fill.size
    masses[flat * size:(flat + 1) * size] = outer.masses[flat] * inner.masses
    return GridMeasure(outer.r, np.vstack([outer.splits, inner.splits]), masses)


def cdf_from_grid(grid: GridMeasure, w: Sequence[float]) -> float:
    return grid.box_mass(np.zeros(grid.r), w)


def corner_masses(seq: NestSequence, grid: GridMeasure, cells: Iterable[int], depth: int | None = None) -> np.ndarray:
    """Cell masses by inclusion-exclusion of :func:`exact_cdf` over the 2**r corners."""
    out = []
    r = seq.r
    for c in cells:
        lo, hi = grid.cell_bounds(int(c))
        m = 0.0
        for v in range(1 << r):
            corner = np.where([(v >> i) & 1 for i in range(r)], hi, lo)
            sign = -1.0 if (r - popcount(v)) % 2 else 1.0
            m += sign * exact_cdf(seq, np.clip(corner, 0.0, 1.0), depth)
        out.append(m)
    return np.array(out)
