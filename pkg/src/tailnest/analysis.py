"""Tail scans, tail fits, reference copulas and sampler goodness of fit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .nesting import GRID_BUDGET, NestSequence, exact_cdf, refine_to_grid

REFERENCE_KINDS = ("clayton", "gumbel", "independence")
MIN_PER_CELL = 50
POOL_BELOW = 5.0


class InsufficientSamples(ValueError):
    pass


def reference_cdf(kind: str, theta: float | None, u: Sequence[float] | np.ndarray) -> np.ndarray | float:
    """Closed-form CDF of a Clayton, Gumbel or independence copula.

    ``u`` may be a single point or an array of points along the last axis.
    Points with a zero coordinate get mass 0.
    """
    kind = kind.lower()
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise ValueError("copula arguments must lie in [0, 1]")
    zero = np.any(u == 0.0, axis=-1)
    safe = np.where(u == 0.0, 1.0, u)
    if kind == "independence":
        out = np.prod(safe, axis=-1)
    elif kind == "clayton":
        if theta is None or not theta > 0:
            raise ValueError(f"Clayton needs theta > 0, got {theta}")
        r = u.shape[-1]
        out = (np.sum(safe ** -theta, axis=-1) - r + 1.0) ** (-1.0 / theta)
    elif kind == "gumbel":
        if theta is None or not theta >= 1:
            raise ValueError(f"Gumbel needs theta >= 1, got {theta}")
        out = np.exp(-np.sum((-np.log(safe)) ** theta, axis=-1) ** (1.0 / theta))
    else:
        raise ValueError(f"unknown reference copula {kind!r}; expected one of {REFERENCE_KINDS}")
    out = np.where(zero, 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Reference:
    """An analytic copula usable wherever a sequence is scanned."""

    kind: str
    r: int
    theta: float | None = None

    def cdf(self, w: Sequence[float]) -> float:
        return reference_cdf(self.kind, self.theta, w)


@dataclass
class TailScan:
    """Masses of ``s * [0, 1]^F`` for decreasing ``s``."""

    face: tuple[int, ...]
    s: np.ndarray
    mass: np.ndarray
    degree: float | None = None
    source: str = "exact"

    @property
    def ratio(self) -> np.ndarray | None:
        """``mass / s**degree`` when a degree was supplied."""
        if self.degree is None:
            return None
        return self.mass / self.s ** self.degree

    def rows(self) -> list[tuple[float, float, float | None]]:
        rat = self.ratio
        return [
            (float(s), float(m), None if rat is None else float(q))
            for s, m, q in zip(self.s, self.mass, rat if rat is not None else [None] * self.s.size)
        ]


@dataclass
class TailFit:
    degree: float
    coefficient: float
    residual: float
    s_range: tuple[float, float]
    liminf_coefficient: float = 0.0
    spread: float = math.inf

    def summary(self) -> str:
        return (
            f"degree={self.degree:.6f} coefficient={self.coefficient:.6f} "
            f"liminf~{self.liminf_coefficient:.6f} spread={self.spread:.4f} "
            f"residual={self.residual:.3g} s in [{self.s_range[0]:.3g}, {self.s_range[1]:.3g}]"
        )


def _face_point(face: Sequence[int], r: int, s: float) -> np.ndarray:
    w = np.ones(r)
    for c in face:
        if not 1 <= c <= r:
            raise ValueError(f"face coordinate {c} out of range 1..{r}")
        w[c - 1] = s
    return w


def tail_scan(
    target: NestSequence | Reference,
    face: Sequence[int],
    s_grid: Sequence[float],
    degree: float | None = None,
    depth: int | None = None,
) -> TailScan:
    """Mass of ``s`` times the unit cube of ``face`` for each ``s``.

    Sequences are evaluated with :func:`exact_cdf`; references in closed form.
    """
    face = tuple(sorted(int(c) for c in face))
    if not face:
        raise ValueError("face must contain at least one coordinate")
    s = np.asarray(s_grid, dtype=float)
    if np.any(s <= 0) or np.any(s > 1):
        raise ValueError("scan points must lie in (0, 1]")
    order = np.argsort(-s)
    s = s[order]
    if np.any(np.diff(s) == 0):
        raise ValueError("scan points must be distinct")
    r = target.r
    if isinstance(target, Reference):
        mass = np.array([target.cdf(_face_point(face, r, si)) for si in s])
        source = "analytic"
    else:
        mass = np.array([exact_cdf(target, _face_point(face, r, si), depth) for si in s])
        source = "exact"
    return TailScan(face, s, mass, degree, source)


def fit_tail(scan: TailScan) -> TailFit:
    """Least-squares degree and a geometric-mean coefficient over the smallest half."""
    s, m = scan.s, scan.mass
    if s.size < 4:
        raise ValueError(f"need at least 4 scan points, got {s.size}")
    if math.log10(s.max() / s.min()) < 3 - 1e-9:
        raise ValueError("scan must span at least 3 decades")
    rng = (float(s.min()), float(s.max()))
    if np.any(m <= 0):
        return TailFit(math.inf, 0.0, 0.0, rng, 0.0, math.inf)
    ls, lm = np.log(s), np.log(m)
    slope, icpt = np.polyfit(ls, lm, 1)
    resid = float(np.sqrt(np.mean((lm - (slope * ls + icpt)) ** 2)))
    ratio = m / s ** slope
    tail = np.argsort(s)[: (s.size + 1) // 2]
    coef = float(np.exp(np.mean(np.log(ratio[tail]))))
    decade = s <= s.min() * 10
    return TailFit(
        float(slope),
        coef,
        resid,
        rng,
        float(ratio[decade].min()),
        float(ratio[tail].max() / ratio[tail].min()),
    )


@dataclass
class GofReport:
    chi2: float
    dof: int
    p_value: float
    max_deviation: float
    samples: int
    cells: int
    forbidden: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.forbidden == 0

    def ok(self, alpha: float = 1e-3, max_dev: float = 4.0) -> bool:
        return self.passed and self.p_value > alpha and self.max_deviation <= max_dev

    def summary(self) -> str:
        return (
            f"chi2={self.chi2:.3f} dof={self.dof} p={self.p_value:.4g} "
            f"max_dev={self.max_deviation:.3f} forbidden={self.forbidden} N={self.samples}"
        )


def gof_report(
    samples: np.ndarray,
    seq: NestSequence,
    depth: int,
    budget: int = GRID_BUDGET,
    zero_tol: float = 1e-15,
) -> GofReport:
    """Chi-square test of samples against the exact level-``depth`` cell masses.

    Cells whose expected count is below 5 are pooled into one bin.  Any sample
    in a cell of probability zero is counted as ``forbidden`` and fails the
    report.
    """
    pts = np.asarray(samples, dtype=float).reshape(-1, seq.r)
    n = pts.shape[0]
    grid = refine_to_grid(seq, depth, budget)
    p = np.clip(grid.masses, 0.0, None)
    p /= p.sum()
    nonzero = p > zero_tol
    if n < MIN_PER_CELL * int(nonzero.sum()):
        raise InsufficientSamples(
            f"{n} samples for {int(nonzero.sum())} cells with positive mass; need {MIN_PER_CELL} per cell"
        )
    obs = np.bincount(grid.cell_of(pts), minlength=p.size).astype(float)
    forbidden = int(obs[~nonzero].sum())
    exp = n * p
    sd = np.sqrt(exp * (1.0 - p))
    dev = np.abs(obs - exp)[nonzero] / np.where(sd[nonzero] > 0, sd[nonzero], 1.0)
    big = nonzero & (exp >= POOL_BELOW)
    small = nonzero & ~big
    o_bins, e_bins = list(obs[big]), list(exp[big])
    notes = []
    if small.any():
        o_bins.append(obs[small].sum())
        e_bins.append(exp[small].sum())
        notes.append(f"pooled {int(small.sum())} cells with expected count below {POOL_BELOW:g}")
    o_bins, e_bins = np.array(o_bins), np.array(e_bins)
    chi2 = float(np.sum((o_bins - e_bins) ** 2 / e_bins))
    dof = max(o_bins.size - 1, 1)
    pval = float(stats.chi2.sf(chi2, dof))
    if forbidden:
        notes.append(f"{forbidden} samples fell into cells of probability zero")
    return GofReport(chi2, dof, pval, float(dev.max()) if dev.size else 0.0, n, int(nonzero.sum()), forbidden, notes)
