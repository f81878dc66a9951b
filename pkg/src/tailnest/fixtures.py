"""Ready-made sequences: uniform, parity, the 2-d self-nesting and random ones."""

from __future__ import annotations

import numpy as np

from .nesting import NestSequence
from .vertex_algebra import (
    VertexCopula,
    parity_copula,
    raw_uniform,
    s_transform,
    uniform_copula,
    uniform_weights,
    zero_counts,
)


def uniform_sequence(r: int, depth: int, k: int = 1, u: float = 0.5) -> NestSequence:
    level = uniform_copula(np.full(r, u))
    return NestSequence([level] * depth, k, r=r)


def parity_sequence(r: int, depth: int, scheme: str = "tail") -> NestSequence:
    level = parity_copula(r)
    return NestSequence([level] * depth, r - 1, scheme, r=r)


def square_sequence(p: float, depth: int) -> NestSequence:
    """r = 2, u = (1/2, 1/2), o-box mass ``p`` at every level (``p`` in [0, 1/2])."""
    x = raw_uniform([0.5, 0.5])
    x[0] = p
    return NestSequence([VertexCopula([0.5, 0.5], x, 1)] * depth, 1, r=2)


def random_vertex_copula(
    r: int,
    k: int,
    rng: np.random.Generator,
    u: np.ndarray | None = None,
    strength: tuple[float, float] = (0.3, 0.95),
) -> VertexCopula:
    """A random point of ``C_k(u)``: uniform plus a scaled order-k generator.

    The raw masses are ``x_u + eps * y`` with ``y`` supported on vertices with
    more than ``k`` zero bits; ``eps`` is a random fraction of the largest
    step that keeps every box mass in [0, 1].
    """
    if u is None:
        u = rng.uniform(0.2, 0.8, size=r)
    u = np.asarray(u, dtype=float)
    free = zero_counts(r) > k
    y = np.where(free, rng.normal(size=1 << r), 0.0)
    base = raw_uniform(u)
    if not free.any():
        return VertexCopula(u, base, k)
    g = s_transform(y)
    unif = uniform_weights(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        room = np.where(g > 0, (1.0 - unif) / g, np.where(g < 0, unif / -g, np.inf))
    eps = float(room.min()) * rng.uniform(*strength)
    return VertexCopula(u, base + eps * y, k)


def random_sequence(
    r: int,
    k: int,
    depth: int,
    rng: np.random.Generator,
    scheme: str = "tail",
    split_range: tuple[float, float] = (0.2, 0.8),
) -> NestSequence:
    levels = [random_vertex_copula(r, k, rng, rng.uniform(*split_range, size=r)) for _ in range(depth)]
    return NestSequence(levels, k, scheme, r=r)
