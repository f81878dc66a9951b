"""Marginal distributions attached to copula samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Margin:
    """One marginal law, described by ``kind``.

    ``uniform``
        identity on [0, 1].
    ``pareto``
        ``F(s) = (-s)**(-alpha)`` on ``(-inf, -1]``; losses are negative and
        the left tail is heavy.
    ``scipy``
        any continuous distribution of :mod:`scipy.stats` by name.
    """

    kind: str = "uniform"
    alpha: float | None = None
    name: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind == "pareto":
            if self.alpha is None or not self.alpha > 0:
                raise ValueError(f"pareto margin needs alpha > 0, got {self.alpha}")
        elif self.kind == "scipy":
            dist = getattr(stats, str(self.name), None)
            if not isinstance(dist, stats.rv_continuous):
                raise ValueError(f"{self.name!r} is not a continuous scipy.stats distribution")
        elif self.kind != "uniform":
            raise ValueError(f"unknown margin kind {self.kind!r}")

    def quantile(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "uniform":
            return p
        if self.kind == "pareto":
            return -(p ** (-1.0 / self.alpha))
        return getattr(stats, self.name)(**self.params).ppf(p)

    def cdf(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "uniform":
            return np.clip(s, 0.0, 1.0)
        if self.kind == "pareto":
            with np.errstate(divide="ignore"):
                return np.where(s <= -1.0, np.abs(s) ** (-self.alpha), 1.0)
        return getattr(stats, self.name)(**self.params).cdf(s)

    def to_config(self) -> dict[str, Any]:
        if self.kind == "pareto":
            return {"kind": "pareto", "alpha": self.alpha}
        if self.kind == "scipy":
            return {"kind": "scipy", "name": self.name, "params": dict(self.params)}
        return {"kind": "uniform"}


@dataclass(frozen=True)
class MarginSpec:
    margins: tuple[Margin, ...]

    @classmethod
    def identity(cls, r: int) -> "MarginSpec":
        return cls(tuple(Margin() for _ in range(r)))

    @classmethod
    def pareto(cls, alphas: Sequence[float]) -> "MarginSpec":
        return cls(tuple(Margin("pareto", float(a)) for a in alphas))

    @classmethod
    def from_config(cls, items: Sequence[dict[str, Any]]) -> "MarginSpec":
        return cls(tuple(Margin(**dict(it)) for it in items))

    def to_config(self) -> list[dict[str, Any]]:
        return [m.to_config() for m in self.margins]

    @property
    def r(self) -> int:
        return len(self.margins)

    def is_identity(self) -> bool:
        return all(m.kind == "uniform" for m in self.margins)

    def quantiles(self, points: np.ndarray, eps: float = 1e-15) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.r:
            raise ValueError(f"points have {pts.shape[-1]} columns, margins describe {self.r}")
        out = np.empty_like(pts)
        for i, m in enumerate(self.margins):
            col = pts[..., i]
            if m.kind != "uniform":
                col = np.clip(col, eps, 1.0 - eps)
            q = m.quantile(col)
            if not np.all(np.isfinite(q)):
                raise ValueError(f"margin {i + 1} ({m.kind}) produced non-finite values")
            out[..., i] = q
        return out
