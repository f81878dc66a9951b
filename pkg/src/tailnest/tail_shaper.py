"""Build nest sequences with prescribed tail characteristics.

Targets ``a`` (coefficients) and ``b`` (degrees) are maps on front faces.  They
are stored on vertices: entry ``v`` describes the face spanned by the zero
bits of ``v``, so ``dim F = number of zero bits``.  A larger face corresponds
to a submask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .margins import MarginSpec
from .nesting import NestSequence
from .vertex_algebra import (
    PROB_TOL,
    VertexCopula,
    check_dimension,
    check_order,
    full_mask,
    popcount,
    s_transform,
    zero_counts,
)

T_FLOOR = 1e-3


class ShapingError(ValueError):
    """Targets are inconsistent or no valid schedule was found."""


def face_vertex(coords: Sequence[int], r: int) -> int:
    """Vertex of the face spanned by 1-based ``coords``."""
    face = 0
    for c in coords:
        c = int(c)
        if not 1 <= c <= r:
            raise ValueError(f"coordinate {c} out of range 1..{r}")
        face |= 1 << (c - 1)
    return full_mask(r) & ~face


def face_coords(v: int, r: int) -> tuple[int, ...]:
    return tuple(i + 1 for i in range(r) if not (v >> i) & 1)


def face_label(v: int, r: int) -> str:
    return "F{" + ",".join(map(str, face_coords(v, r))) + "}"


def parse_face(key: str | Sequence[int]) -> tuple[int, ...]:
    if isinstance(key, str):
        key = key.strip().strip("{}()[]")
        return tuple(int(p) for p in key.replace(" ", "").split(",") if p)
    return tuple(int(p) for p in key)


def _strict_super(v: int):
    # strict submasks of v, i.e. strictly larger faces
    s = (v - 1) & v
    while True:
        if s != v:
            yield s
        if s == 0:
            return
        s = (s - 1) & v


@dataclass
class TailSpec:
    """Target coefficients ``a`` and degrees ``b`` for every front face."""

    r: int
    k: int
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        self.r = check_dimension(self.r)
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        n = 1 << self.r
        if self.a.size != n or self.b.size != n:
            raise ValueError(f"a and b need {n} entries, got {self.a.size} and {self.b.size}")
        if not 0 <= self.k <= self.r:
            raise ValueError(f"order must lie in [0, {self.r}], got {self.k}")

    @classmethod
    def from_faces(
        cls,
        r: int,
        k: int,
        b: Mapping,
        a: Mapping | None = None,
    ) -> "TailSpec":
        """Faces of dimension at most ``k`` default to ``(1, dim F)``; higher faces
        need ``b`` and default to ``a = 1``."""
        zc = zero_counts(r)
        bv = np.where(zc <= k, zc, np.nan).astype(float)
        av = np.ones(1 << r)
        for key, val in b.items():
            bv[face_vertex(parse_face(key), r)] = float(val)
        for key, val in (a or {}).items():
            av[face_vertex(parse_face(key), r)] = float(val)
        missing = [face_label(int(v), r) for v in np.flatnonzero(np.isnan(bv))]
        if missing:
            raise ValueError(f"no tail degree given for faces {', '.join(missing)}")
        return cls(r, k, av, bv)

    @classmethod
    def independence(cls, r: int, k: int) -> "TailSpec":
        return cls(r, k, np.ones(1 << r), zero_counts(r).astype(float))

    def dims(self) -> np.ndarray:
        return zero_counts(self.r)


@dataclass
class NCReport:
    """Per-condition violations of the necessary conditions."""

    monotone: list[str] = field(default_factory=list)
    pinned: list[str] = field(default_factory=list)
    alternating: list[str] = field(default_factory=list)
    boundary: list[str] | None = None
    other: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.monotone or self.pinned or self.alternating or self.boundary or self.other)

    def messages(self) -> list[str]:
        out = [f"NC_k (i) {m}" for m in self.monotone]
        out += [f"NC_k (ii) {m}" for m in self.pinned]
        out += [f"NC_k (iii) {m}" for m in self.alternating]
        out += [f"NC_k (iii)' {m}" for m in self.boundary or []]
        out += list(self.other)
        return out


def eventually_constant(b: np.ndarray, v: int, tol: float = 1e-12) -> bool:
    return all(abs(b[m] - b[v]) <= tol for m in _strict_super(v))


def increasing_at(b: np.ndarray, v: int) -> bool:
    return all(b[m] > b[v] for m in _strict_super(v))


def validate_nc_k(spec: TailSpec, tol: float = PROB_TOL) -> NCReport:
    r, k, a, b = spec.r, spec.k, spec.a, spec.b
    rep = NCReport()
    zc = zero_counts(r)
    if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)):
        rep.other.append("a and b must be finite")
        return rep
    if np.any(a < 0):
        bad = ", ".join(face_label(int(v), r) for v in np.flatnonzero(a < 0))
        rep.other.append(f"coefficients must be non-negative (at {bad})")

    for v in range(1 << r):
        for i in range(r):
            if (v >> i) & 1:
                bigger = v & ~(1 << i)
                if b[bigger] < b[v] - tol:
                    rep.monotone.append(
                        f"b is not non-decreasing: b({face_label(v, r)}) = {b[v]:.6g} > "
                        f"b({face_label(bigger, r)}) = {b[bigger]:.6g}"
                    )
    for v in np.flatnonzero(zc <= k):
        v = int(v)
        if abs(a[v] - 1.0) > tol or abs(b[v] - zc[v]) > tol:
            rep.pinned.append(
                f"({face_label(v, r)}) must have (a, b) = (1, {zc[v]}), got ({a[v]:.6g}, {b[v]:.6g})"
            )
    sa = s_transform(a)
    for v in range(1, 1 << r):
        if eventually_constant(b, v) and sa[v] < -tol:
            rep.alternating.append(
                f"alternating sum at {face_label(v, r)} is {sa[v]:.6g} < 0 where b is eventually constant"
            )
    if k >= 1 and np.all(np.abs(b[zc >= k] - k) <= tol):
        rep.boundary = []
        for v in np.flatnonzero(zc == k):
            v = int(v)
            subs = [m for m in range(v + 1) if m & v == m]
            vals = sa[subs]
            if np.any(vals < -tol) or abs(vals.sum() - 1.0) > tol:
                rep.boundary.append(
                    f"S(a) on the vertices of {face_label(v, r)} "
                    f"is not a probability measure (min {vals.min():.6g}, sum {vals.sum():.6g})"
                )
    return rep


@dataclass
class Schedule:
    """Level splits ``t_n`` and multiplicative perturbations ``1 + delta_n``."""

    t: np.ndarray  # (N,)
    factors: np.ndarray  # (N, 2**r), 1 + delta_n

    @property
    def depth(self) -> int:
        return self.t.size

    @property
    def s(self) -> np.ndarray:
        """Schedule points ``s_n = t_1 * ... * t_n``."""
        return np.cumprod(self.t)

    def partial_products(self) -> np.ndarray:
        return np.cumprod(self.factors, axis=0)


@dataclass
class Built:
    seq: NestSequence
    schedule: Schedule
    t: float | None = None
    retained: list[int] | None = None
    margins: MarginSpec | None = None
    notes: list[str] = field(default_factory=list)


def geometric_factors(a: np.ndarray, depth: int) -> np.ndarray:
    """``1 + delta_n = a ** (w_n / sum w)`` with ``w_n = 2**-n``; the product is ``a``."""
    a = np.asarray(a, dtype=float)
    w = 0.5 ** np.arange(1, depth + 1)
    w /= w.sum()
    with np.errstate(divide="ignore"):
        loga = np.log(a)
    f = np.exp(np.outer(w, loga))
    # hit the target exactly at full depth
    f[-1] = a / np.prod(f[:-1], axis=0) if depth > 1 else a
    return f


def _level(u: np.ndarray, x: np.ndarray, k: int) -> tuple[VertexCopula, list[str]]:
    level = VertexCopula(u, x, k)
    return level, check_order(level.z, level.u, k).violations


def _require_valid(spec: TailSpec) -> None:
    rep = validate_nc_k(spec)
    if not rep.ok:
        raise ShapingError("; ".join(rep.messages()))


def build_increasing(spec: TailSpec, t: float = 0.5, depth: int = 32, t_floor: float = T_FLOOR) -> Built:
    """Constant split ``t``, ``x_n = (1 + delta_n) * t**b``, product of factors ``= a``.

    ``t`` is halved until every level is a valid vertex copula of order ``k``.
    """
    _require_valid(spec)
    r, k = spec.r, spec.k
    for v in range(1 << r):
        for m in _strict_super(v):
            if not spec.b[m] > spec.b[v]:
                raise ShapingError(
                    f"b must be increasing: b({face_label(m, r)}) = {spec.b[m]:.6g} is not above "
                    f"b({face_label(v, r)}) = {spec.b[v]:.6g}"
                )
    if not 0 < t < 1:
        raise ShapingError(f"base split must lie in (0, 1), got {t}")
    factors = geometric_factors(spec.a, depth)
    notes = []
    while t >= t_floor:
        u = np.full(r, t)
        levels = []
        failed = None
        for n in range(depth):
            level, bad = _level(u, factors[n] * t ** spec.b, k)
            if bad:
                failed = f"t={t:g} fails at level {n + 1}: {bad[0]}"
                break
            levels.append(level)
        if failed is None:
            seq = NestSequence(levels, k, r=r)
            return Built(seq, Schedule(np.full(depth, t), factors), t=t, notes=notes)
        notes.append(failed)
        t /= 2.0
    raise ShapingError(f"no valid split above {t_floor:g}; last failure: {notes[-1]}")


def _thin(
    spec_k: int,
    r: int,
    b: np.ndarray,
    s: Sequence[float],
    coeff: Sequence[np.ndarray],
) -> tuple[list[VertexCopula], list[int], list[float], list[np.ndarray], list[str]]:
    """Greedy common subsequence: keep index ``m`` once the level it induces is valid."""
    levels, kept, ts, hs, notes = [], [], [], [], []
    prev_s, prev_a = 1.0, np.ones(1 << r)
    for m, (sm, am) in enumerate(zip(s, coeff)):
        t = sm / prev_s
        if not 0 < t < 1:
            notes.append(f"index {m + 1}: ratio {t:.6g} outside (0, 1), skipped")
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(prev_a > 0, am / prev_a, 1.0)
        level, bad = _level(np.full(r, t), h * t ** b, spec_k)
        if bad:
            notes.append(f"index {m + 1}: t={t:.6g} invalid ({bad[0]}), thinned out")
            continue
        levels.append(level)
        kept.append(m)
        ts.append(t)
        hs.append(h)
        prev_s, prev_a = sm, np.asarray(am, dtype=float)
    return levels, kept, ts, hs, notes


def build_subsequence_targets(
    spec: TailSpec,
    a_seq: Sequence[np.ndarray],
    s_seq: Sequence[float],
) -> Built:
    """Hit ``a_n(F) * s_n**b(F)`` exactly at the retained schedule points.

    ``spec`` supplies ``r``, ``k`` and ``b``; ``a_seq[m]`` is the coefficient
    map at ``s_seq[m]``.
    """
    r, k = spec.r, spec.k
    if len(a_seq) != len(s_seq) or not s_seq:
        raise ShapingError("a and s sequences must be non-empty and of equal length")
    s = np.asarray(s_seq, dtype=float)
    if np.any(np.diff(s) >= 0) or s[0] >= 1 or s[-1] <= 0:
        raise ShapingError("s must decrease strictly inside (0, 1)")
    a_seq = [np.asarray(a, dtype=float).reshape(-1) for a in a_seq]
    for m, am in enumerate(a_seq):
        rep = validate_nc_k(TailSpec(r, k, am, spec.b))
        if not rep.ok:
            raise ShapingError(f"a_{m + 1}: " + "; ".join(rep.messages()))
    levels, kept, ts, hs, notes = _thin(k, r, spec.b, s, a_seq)
    if not levels:
        raise ShapingError(
            "ratios s_(m+1)/s_m never fell below the largest admissible split; "
            "a sparser s sequence is required (" + "; ".join(notes[-3:]) + ")"
        )
    if kept[-1] != len(s) - 1:
        notes.append(f"trailing indices after {kept[-1] + 1} could not be placed")
    seq = NestSequence(levels, k, r=r)
    return Built(seq, Schedule(np.array(ts), np.array(hs)), retained=kept, notes=notes)


def build_eventually_constant(spec: TailSpec, s_seq: Sequence[float]) -> Built:
    """``x_1 = a * t_1**b`` then ``x_n = t_n**b`` with ``t_n = s_n / s_(n-1)``."""
    _require_valid(spec)
    r, k, b = spec.r, spec.k, spec.b
    for v in range(1, 1 << r):
        if not (increasing_at(b, v) or eventually_constant(b, v)):
            raise ShapingError(f"b is neither increasing nor eventually constant at {face_label(v, r)}")
    s = np.asarray(s_seq, dtype=float)
    if s.size == 0 or np.any(np.diff(s) >= 0) or s[0] >= 1 or s[-1] <= 0:
        raise ShapingError("s must be non-empty and decrease strictly inside (0, 1)")
    coeff = [spec.a] + [spec.a] * (s.size - 1)
    levels, kept, ts, hs, notes = _thin(k, r, b, s, coeff)
    if not levels:
        raise ShapingError("positivity fails for every schedule point; start from smaller s")
    const = [v for v in range(1, 1 << r) if eventually_constant(b, v)]
    for n, level in enumerate(levels[1:], 2):
        worst = max((abs(level.z[v]) for v in const), default=0.0)
        if worst > 1e-12:
            notes.append(f"level {n}: box mass {worst:.3g} at an eventually constant vertex")
    seq = NestSequence(levels, k, r=r)
    return Built(seq, Schedule(np.array(ts), np.array(hs)), retained=kept, notes=notes)


def degree_one_spec(a: np.ndarray | Mapping, r: int | None = None) -> TailSpec:
    if isinstance(a, Mapping):
        if r is None:
            raise ValueError("dimension is required when a is given per face")
        av = np.ones(1 << r)
        for key, val in a.items():
            av[face_vertex(parse_face(key), r)] = float(val)
    else:
        av = np.asarray(a, dtype=float).reshape(-1)
        r = int(av.size).bit_length() - 1
    b = np.ones(1 << r)
    b[-1] = 0.0
    return TailSpec(r, 1, av, b)


def build_degree_one(a: np.ndarray | Mapping, depth: int, r: int | None = None, t1: float = 0.5) -> Built:
    """Tail degree 1 everywhere with coefficients ``a``; ``t_n = n / (n + 1)`` for ``n >= 2``."""
    spec = degree_one_spec(a, r)
    r = spec.r
    if np.any((spec.a < 0) | (spec.a > 1)):
        raise ShapingError("degree-one coefficients must lie in [0, 1]")
    _require_valid(spec)
    if depth < 1:
        raise ShapingError("depth must be at least 1")
    b = spec.b
    notes = []
    while True:
        first, bad = _level(np.full(r, t1), spec.a * t1 ** b, 1)
        if not bad:
            break
        notes.append(f"t_1={t1:g} invalid: {bad[0]}")
        t1 /= 2.0
        if t1 < T_FLOOR:
            raise ShapingError(f"no valid first split above {T_FLOOR:g}")
    ts = [t1] + [n / (n + 1.0) for n in range(2, depth + 1)]
    levels = [first] + [VertexCopula(np.full(r, t), t ** b, 1) for t in ts[1:]]
    factors = np.ones((depth, 1 << r))
    factors[0] = spec.a
    seq = NestSequence(levels, 1, r=r)
    return Built(seq, Schedule(np.array(ts), factors), t=t1, notes=notes)


def check_pareto_degrees(alpha: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> list[str]:
    """Strict growth of ``b`` towards larger faces and ``max alpha <= b <= sum alpha``."""
    r = alpha.size
    out = []
    for v in range(1 << r):
        for m in _strict_super(v):
            if not b[m] > b[v]:
                out.append(
                    f"b must grow towards larger faces: b({face_label(m, r)}) = {b[m]:.6g} <= "
                    f"b({face_label(v, r)}) = {b[v]:.6g}"
                )
    for v in range((1 << r) - 1):
        zs = [alpha[i] for i in range(r) if not (v >> i) & 1]
        lo, hi = max(zs), sum(zs)
        if b[v] < lo - tol or b[v] > hi + tol:
            out.append(f"b({face_label(v, r)}) = {b[v]:.6g} outside [{lo:.6g}, {hi:.6g}]")
    return out


def pareto_degrees(alpha: Sequence[float], b: Mapping | np.ndarray) -> np.ndarray:
    """Vertex array of degrees; 1-dim faces default to their ``alpha_i``."""
    alpha = np.asarray(alpha, dtype=float)
    r = alpha.size
    if not isinstance(b, Mapping):
        return np.asarray(b, dtype=float).reshape(-1)
    out = np.full(1 << r, np.nan)
    out[-1] = 0.0
    for i in range(r):
        out[full_mask(r) & ~(1 << i)] = alpha[i]
    for key, val in b.items():
        out[face_vertex(parse_face(key), r)] = float(val)
    missing = [face_label(int(v), r) for v in np.flatnonzero(np.isnan(out))]
    if missing:
        raise ShapingError(f"no tail degree given for faces {', '.join(missing)}")
    return out


def build_pareto(
    alpha: Sequence[float],
    b: Mapping | np.ndarray,
    t: float,
    depth: int,
    delta: np.ndarray | None = None,
    a: np.ndarray | None = None,
) -> Built:
    """Constant split ``u_i = t**-alpha_i`` and ``x_n = (1 + delta_n) * t**-b``.

    With Pareto margins ``F_i(s) = (-s)**-alpha_i`` the returned pair gives
    ``P(X_i <= -t**n for i in F) = prod_l (1 + delta_l) * t**(-n b(F))``.
    Perturbations come either explicitly (``delta``, shape ``(depth, 2**r)``)
    or from a coefficient target ``a`` via geometric weights; default none.
    """
    alpha = np.asarray(alpha, dtype=float)
    r = alpha.size
    check_dimension(r)
    if np.any(alpha <= 0):
        raise ShapingError("Pareto indices must be positive")
    if not t > 1:
        raise ShapingError(f"Pareto base must exceed 1, got {t}")
    bv = pareto_degrees(alpha, b)
    problems = check_pareto_degrees(alpha, bv)
    if problems:
        raise ShapingError("; ".join(problems))
    zc = zero_counts(r)
    if delta is not None:
        factors = 1.0 + np.asarray(delta, dtype=float).reshape(depth, 1 << r)
    elif a is not None:
        factors = geometric_factors(np.asarray(a, dtype=float), depth)
    else:
        factors = np.ones((depth, 1 << r))
    if np.any(np.abs(factors[:, zc <= 1] - 1.0) > 0):
        raise ShapingError("perturbations must vanish on faces of dimension <= 1")
    if np.any(factors <= 0):
        raise ShapingError("1 + delta must stay positive")
    u = t ** -alpha
    levels = []
    for n in range(depth):
        level, bad = _level(u, factors[n] * t ** -bv, 1)
        if bad:
            raise ShapingError(f"positivity fails at level {n + 1} for t={t:g}: {bad[0]}")
        levels.append(level)
    seq = NestSequence(levels, 1, r=r)
    return Built(seq, Schedule(np.full(depth, 1.0 / t), factors), t=t, margins=MarginSpec.pareto(alpha))
