"""Exact linear algebra on the 2**r boxes of a vertex decomposition.

A vertex of the unit r-cube is an integer bit mask: bit ``i`` holds the
coordinate ``i + 1``.  Weight vectors have length ``2**r`` and are indexed by
that mask.  Two readings of such a vector are used throughout:

* ``x`` -- raw o-box masses, ``x[v]`` is the mass of the origin box of the
  projection along the front face spanned by the set bits of ``v``;
* ``z`` -- box masses of the vertex measure, ``z[v]`` is the mass of the box
  containing vertex ``v``.

``s_transform`` maps ``x`` to ``z`` and ``s_inverse`` goes back.  Both are the
subset-sum (zeta / Moebius) transforms and run in ``O(r 2**r)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

MAX_DIM = 20
DEFAULT_MAX_DIM = 16

PROB_TOL = 1e-9
ALGEBRA_TOL = 1e-12


def dimension_of(weights: np.ndarray) -> int:
    """Return ``r`` for a weight array whose last axis has length ``2**r``."""
    n = np.shape(weights)[-1]
    r = int(n).bit_length() - 1
    if n < 2 or (1 << r) != n:
        raise ValueError(f"weight vector length {n} is not 2**r with r >= 1")
    if r > MAX_DIM:
        raise ValueError(f"dimension {r} exceeds the hard cap {MAX_DIM}")
    return r


def check_dimension(r: int, cap: int = DEFAULT_MAX_DIM) -> int:
    r = int(r)
    if not 1 <= r <= min(cap, MAX_DIM):
        raise ValueError(f"dimension must lie in [1, {min(cap, MAX_DIM)}], got {r}")
    return r


def full_mask(r: int) -> int:
    return (1 << r) - 1


def popcount(v: int) -> int:
    return bin(v).count("1")


def n_zeros(v: int, r: int) -> int:
    """Stratum index: number of zero coordinates of ``v``."""
    return r - popcount(v)


def complement(v: int, r: int) -> int:
    return full_mask(r) & ~v


def submasks(v: int) -> Iterator[int]:
    """All submasks of ``v``, including 0 and ``v`` itself."""
    s = v
    while True:
        yield s
        if s == 0:
            return
        s = (s - 1) & v


def bits_of(v: int, r: int) -> tuple[int, ...]:
    return tuple((v >> i) & 1 for i in range(r))


def from_bits(bits: Sequence[int]) -> int:
    return sum((int(b) & 1) << i for i, b in enumerate(bits))


def format_vertex(v: int, r: int) -> str:
    return "(" + ",".join(str(b) for b in bits_of(v, r)) + ")"


def zero_counts(r: int) -> np.ndarray:
    """``n_zeros`` for every vertex, as an array of length ``2**r``."""
    v = np.arange(1 << r, dtype=np.uint32)
    return r - np.bitwise_count(v).astype(np.int64)


def compress(v: int, keep: int) -> int:
    """Pack the bits of ``v`` selected by ``keep`` into a dense mask."""
    out = 0
    j = 0
    i = 0
    while keep >> i:
        if (keep >> i) & 1:
            out |= ((v >> i) & 1) << j
            j += 1
        i += 1
    return out


def expand(v: int, keep: int) -> int:
    """Inverse of :func:`compress`: spread dense bits onto the positions of ``keep``."""
    out = 0
    j = 0
    i = 0
    while keep >> i:
        if (keep >> i) & 1:
            out |= ((v >> j) & 1) << i
            j += 1
        i += 1
    return out


def s_transform(x: np.ndarray) -> np.ndarray:
    """Raw o-box masses to vertex box masses.

    ``z[v] = sum over submasks m of v of (-1)**popcount(v ^ m) * x[m]``.
    Works on the last axis, so a stack of vectors is transformed at once.
    """
    z = np.array(x, dtype=float, copy=True)
    r = dimension_of(z)
    lead = z.shape[:-1]
    for i in range(r):
        view = z.reshape(lead + (-1, 2, 1 << i))
        view[..., 1, :] -= view[..., 0, :]
    return z


def s_inverse(z: np.ndarray) -> np.ndarray:
    """Vertex box masses to raw o-box masses (submask sums)."""
    x = np.array(z, dtype=float, copy=True)
    r = dimension_of(x)
    lead = x.shape[:-1]
    for i in range(r):
        view = x.reshape(lead + (-1, 2, 1 << i))
        view[..., 1, :] += view[..., 0, :]
    return x


def project(z: np.ndarray, nu: int) -> np.ndarray:
    """Push ``z`` forward along the front face spanned by the set bits of ``nu``.

    The result lives on the coordinates where ``nu`` is zero, with their bits
    packed densely in increasing coordinate order.
    """
    z = np.asarray(z, dtype=float)
    r = dimension_of(z)
    if nu < 0 or nu > full_mask(r):
        raise ValueError(f"vertex {nu} out of range for r={r}")
    if nu == 0:
        return z.copy()
    # axis j of the (2,)*r view carries bit r-1-j
    axes = tuple(r - 1 - i for i in range(r) if (nu >> i) & 1)
    out = z.reshape((2,) * r).sum(axis=axes)
    return np.asarray(out, dtype=float).reshape(-1)


def raw_uniform(u: Sequence[float]) -> np.ndarray:
    """``x_u`` with ``x_u[v] = prod of u_i over the zero bits of v``."""
    u = np.asarray(u, dtype=float)
    x = np.ones(1, dtype=float)
    for ui in u:
        # new bit i: 0 -> factor u_i, 1 -> factor 1
        x = np.concatenate([x * ui, x])
    return x


def uniform_weights(u: Sequence[float]) -> np.ndarray:
    """Box masses of the uniform measure on the vertex decomposition of ``u``."""
    u = np.asarray(u, dtype=float)
    z = np.ones(1, dtype=float)
    for ui in u:
        z = np.concatenate([z * ui, z * (1.0 - ui)])
    return z


def _as_split(u: Sequence[float]) -> np.ndarray:
    u = np.array(u, dtype=float).reshape(-1)
    if u.size == 0:
        raise ValueError("split point must have at least one coordinate")
    if not np.all((u > 0.0) & (u < 1.0)):
        raise ValueError(f"split point must lie strictly inside (0,1)^r, got {u.tolist()}")
    return u


@dataclass(frozen=True)
class OrderCheck:
    """Outcome of :func:`check_order`; ``violations`` is empty iff ``ok``."""

    ok: bool
    violations: list[str] = field(default_factory=list)
    bad_vertices: list[int] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def check_order(z: np.ndarray, u: Sequence[float], k: int, tol: float = PROB_TOL) -> OrderCheck:
    """Is ``z`` a vertex copula of order ``k`` for the split ``u``?

    True iff ``z`` is a probability vector and ``s_inverse(z)[v]`` equals the
    uniform value ``prod_{v_i = 0} u_i`` for every ``v`` with at most ``k``
    zero bits.  Failures are returned, not raised.
    """
    z = np.asarray(z, dtype=float)
    r = dimension_of(z)
    u = _as_split(u)
    if u.size != r:
        raise ValueError(f"split point has {u.size} coordinates, weights need {r}")
    if not 0 <= k <= r:
        raise ValueError(f"order must lie in [0, {r}], got {k}")

    violations: list[str] = []
    bad: set[int] = set()
    for v in np.flatnonzero(z < -tol):
        violations.append(f"S(x){format_vertex(int(v), r)} < 0 (value {z[v]:.12g})")
        bad.add(int(v))
    for v in np.flatnonzero(z > 1.0 + tol):
        violations.append(f"S(x){format_vertex(int(v), r)} > 1 (value {z[v]:.12g})")
        bad.add(int(v))
    total = float(z.sum())
    if abs(total - 1.0) > tol:
        violations.append(f"total mass {total:.12g} != 1")

    x = s_inverse(z)
    target = raw_uniform(u)
    zc = zero_counts(r)
    pinned = zc <= k
    off = np.flatnonzero(pinned & (np.abs(x - target) > tol))
    for v in off:
        violations.append(
            f"x{format_vertex(int(v), r)} = {x[v]:.12g} but order {k} needs {target[v]:.12g}"
        )
        bad.add(int(v))
    return OrderCheck(not violations, violations, sorted(bad))


def gk_member(z: np.ndarray, k: int, tol: float = ALGEBRA_TOL) -> bool:
    """Does ``z`` project to zero on every k-dimensional front face?"""
    z = np.asarray(z, dtype=float)
    r = dimension_of(z)
    if k < 0:
        return True
    if k > r:
        raise ValueError(f"order {k} exceeds dimension {r}")
    scale = max(1.0, float(np.abs(z).sum()))
    for nu in range(1 << r):
        if popcount(nu) == r - k:
            if np.max(np.abs(project(z, nu))) > tol * scale:
                return False
    return True


def positivity_bounds(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cheap lower/upper bounds on ``s_transform(x)`` from the dominant term.

    ``x[v] - sum_{m < v} |x[m]| <= S(x)[v] <= x[v] + sum_{m < v} |x[m]|``.
    """
    x = np.asarray(x, dtype=float)
    rest = s_inverse(np.abs(x)) - np.abs(x)
    return x - rest, x + rest


@dataclass(frozen=True, eq=False)
class VertexCopula:
    """Split point ``u`` plus raw masses ``x``; box masses are ``z = S(x)``.

    ``x`` is the stored representation so that serialisation round-trips are
    exact.  Construction does not enforce the order condition; use
    :meth:`check`.
    """

    u: np.ndarray
    x: np.ndarray
    k: int

    def __post_init__(self) -> None:
        u = _as_split(self.u)
        x = np.array(self.x, dtype=float).reshape(-1)
        r = dimension_of(x)
        if u.size != r:
            raise ValueError(f"split point has {u.size} coordinates, weights need {r}")
        if not 0 <= int(self.k) <= r:
            raise ValueError(f"order must lie in [0, {r}], got {self.k}")
        u.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", int(self.k))

    @classmethod
    def from_z(cls, u: Sequence[float], z: Sequence[float], k: int) -> "VertexCopula":
        return cls(np.asarray(u, dtype=float), s_inverse(np.asarray(z, dtype=float)), k)

    @property
    def r(self) -> int:
        return self.u.size

    @cached_property
    def z(self) -> np.ndarray:
        z = s_transform(self.x)
        z.setflags(write=False)
        return z

    def check(self, tol: float = PROB_TOL) -> OrderCheck:
        return check_order(self.z, self.u, self.k, tol)

    def project(self, nu: int) -> "VertexCopula":
        """Vertex copula on the coordinates where ``nu`` is zero."""
        keep = complement(nu, self.r)
        if keep == 0:
            raise ValueError("projection along the full cube leaves no coordinates")
        u = self.u[[i for i in range(self.r) if (keep >> i) & 1]]
        # x of the projection is x restricted to vertices with all released bits set
        idx = [expand(m, keep) | nu for m in range(1 << popcount(keep))]
        x = self.x[idx]
        return VertexCopula(u, x, min(self.k, u.size))

    def __repr__(self) -> str:
        return f"VertexCopula(r={self.r}, k={self.k}, u={self.u.tolist()})"


def uniform_copula(u: Sequence[float]) -> VertexCopula:
    u = _as_split(u)
    return VertexCopula(u, raw_uniform(u), u.size)


def parity_copula(r: int) -> VertexCopula:
    """Even vertices carry ``2**(1-r)`` each, odd vertices nothing; order ``r - 1``."""
    if r < 2:
        raise ValueError(f"parity copula needs r >= 2, got {r}")
    check_dimension(r, MAX_DIM)
    parity = np.bitwise_count(np.arange(1 << r, dtype=np.uint32)) % 2
    z = np.where(parity == 0, 2.0 ** (1 - r), 0.0)
    return VertexCopula.from_z(np.full(r, 0.5), z, r - 1)
