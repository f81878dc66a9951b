"""Recursive-descent sampling of nest sequences.

Each draw walks down the levels.  At level ``l`` a vertex ``mu`` is drawn from
``z_l`` projected onto the still-active coordinates; coordinates whose bit is
1 are released uniformly into the upper part of their window, the others
shrink to the lower part and stay active.  The walk stops once at most ``k``
coordinates are active or the levels run out, and the active coordinates are
then filled uniformly.

Randomness comes from Philox, a counter-based generator keyed by
``(seed, stream)``.  :func:`sample` cuts the requested count into fixed-size
chunks and gives chunk ``c`` the stream ``stream + c``, so the output depends
only on the seed and never on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .margins import MarginSpec
from .nesting import NestSequence
from .vertex_algebra import popcount

CHUNK = 1 << 16


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class WorkStats:
    """Multinomial vertex draws spent on a batch of samples."""

    samples: int = 0
    draws: int = 0
    p_max: float = 0.0

    @property
    def average_draws(self) -> float:
        return self.draws / self.samples if self.samples else 0.0

    @property
    def bound(self) -> float:
        """Expected-work bound ``1 / (1 - p_max)``; infinite when ``p_max >= 1``."""
        return math.inf if self.p_max >= 1.0 else 1.0 / (1.0 - self.p_max)

    def merge(self, other: "WorkStats") -> "WorkStats":
        return WorkStats(self.samples + other.samples, self.draws + other.draws, max(self.p_max, other.p_max))

    def summary(self) -> str:
        return (
            f"samples={self.samples} draws={self.draws} "
            f"avg_draws={self.average_draws:.6f} p_max={self.p_max:.6f}"
        )


@dataclass
class SamplerState:
    """Generator plus counters for one-at-a-time drawing."""

    seed: int
    stream: int = 0
    samples: int = 0
    draws: int = 0
    rng: np.random.Generator = field(init=False, repr=False)
    _prefix: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        self.rng = philox(self.seed, self.stream)

    def stats(self, seq: NestSequence) -> WorkStats:
        return WorkStats(self.samples, self.draws, seq.p_max())


def _projected_prefix(seq: NestSequence, state: SamplerState, level: int, active: int):
    # vertices of the active face in submask order, with cumulative weights
    key = (id(seq), level, active)
    hit = state._prefix.get(key)
    if hit is None:
        lifted = seq.projected_weights(level, active)
        verts = []
        s = active
        while True:
            verts.append(s)
            if s == 0:
                break
            s = (s - 1) & active
        verts = np.array(verts[::-1], dtype=np.int64)
        cum = np.cumsum(np.clip(lifted[verts], 0.0, None))
        cum /= cum[-1]
        cum[-1] = 1.0
        hit = (verts, cum)
        state._prefix[key] = hit
    return hit


def draw_one(seq: NestSequence, state: SamplerState) -> np.ndarray:
    """One point of ``c^N``, drawn level by level."""
    r, rng = seq.r, state.rng
    out = np.empty(r)
    state.samples += 1
    if seq.scheme == "full":
        lo = np.zeros(r)
        ln = np.ones(r)
        for l in range(seq.depth):
            verts, cum = _projected_prefix(seq, state, l, (1 << r) - 1)
            mu = int(verts[np.searchsorted(cum, rng.random(), side="right")])
            state.draws += 1
            u = seq.splits[l]
            for i in range(r):
                if (mu >> i) & 1:
                    lo[i] += u[i] * ln[i]
                    ln[i] *= 1.0 - u[i]
                else:
                    ln[i] *= u[i]
        for i in range(r):
            out[i] = lo[i] + ln[i] * rng.random()
        return out

    active = (1 << r) - 1
    level = 0
    while level < seq.depth and popcount(active) > seq.k:
        verts, cum = _projected_prefix(seq, state, level, active)
        mu = int(verts[np.searchsorted(cum, rng.random(), side="right")])
        state.draws += 1
        prev, cur = seq.corners[level], seq.corners[level + 1]
        for i in range(r):
            if (mu >> i) & 1:
                out[i] = cur[i] + (prev[i] - cur[i]) * rng.random()
        active &= ~mu
        level += 1
    corner = seq.corners[level]
    for i in range(r):
        if (active >> i) & 1:
            out[i] = corner[i] * rng.random()
    return out


def _cumulative(z: np.ndarray) -> np.ndarray:
    cum = np.cumsum(np.clip(z, 0.0, None))
    cum /= cum[-1]
    cum[-1] = 1.0
    return cum


def _chunk_tail(seq: NestSequence, n: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    r, k = seq.r, seq.k
    shifts = np.arange(r, dtype=np.int64)
    fill = rng.random((n, r))
    out = np.empty((n, r))
    idx = np.arange(n)
    active = np.full(n, (1 << r) - 1, dtype=np.int64)
    draws = 0
    level = 0
    for level in range(seq.depth + 1):
        corner = seq.corners[level]
        go = np.bitwise_count(active) > k
        if level == seq.depth:
            go[:] = False
        if not go.all():
            stop, act = idx[~go], active[~go]
            bits = ((act[:, None] >> shifts) & 1).astype(bool)
            out[stop] = np.where(bits, corner * fill[stop], out[stop])
            idx, active = idx[go], active[go]
        if idx.size == 0:
            break
        m = idx.size
        draws += m
        # drawing from the full level and masking equals drawing from its projection
        mu = np.searchsorted(_cumulative(seq.levels[level].z), rng.random(m), side="right")
        released = mu & active
        bits = ((released[:, None] >> shifts) & 1).astype(bool)
        prev, cur = corner, seq.corners[level + 1]
        out[idx] = np.where(bits, cur + (prev - cur) * fill[idx], out[idx])
        active = active & ~mu
    return out, draws


def _chunk_full(seq: NestSequence, n: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    r = seq.r
    shifts = np.arange(r, dtype=np.int64)
    fill = rng.random((n, r))
    lo = np.zeros((n, r))
    ln = np.ones((n, r))
    for level in range(seq.depth):
        mu = np.searchsorted(_cumulative(seq.levels[level].z), rng.random(n), side="right")
        bits = ((mu[:, None] >> shifts) & 1).astype(bool)
        u = seq.splits[level]
        lo = np.where(bits, lo + u * ln, lo)
        ln = np.where(bits, ln * (1.0 - u), ln * u)
    return lo + ln * fill, n * seq.depth


def sample(
    seq: NestSequence,
    count: int,
    seed: int,
    workers: int = 1,
    stream: int = 0,
    chunk: int = CHUNK,
) -> tuple[np.ndarray, WorkStats]:
    """``count`` i.i.d. points of ``c^N`` plus the work they cost.

    Output is bit-identical for a fixed ``(seed, stream, chunk)`` whatever
    ``workers`` is.
    """
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    kernel = _chunk_full if seq.scheme == "full" else _chunk_tail
    sizes = [min(chunk, count - start) for start in range(0, count, chunk)]

    def run(c: int) -> tuple[np.ndarray, int]:
        return kernel(seq, sizes[c], philox(seed, stream + c))

    if workers == 1 or len(sizes) == 1:
        parts = [run(c) for c in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    points = np.concatenate([p for p, _ in parts], axis=0)
    stats = WorkStats(count, sum(d for _, d in parts), seq.p_max())
    return points, stats


def transform_margins(points: np.ndarray, margins: MarginSpec, eps: float = 1e-15) -> np.ndarray:
    """Apply the quantile function of each margin to its column."""
    return margins.quantiles(points, eps)
