"""Closed subsets of the real line stored as finite unions of closed components."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

from .errors import EmptyRegion

Component = Tuple[float, float]


def _normalize(components: Iterable[Component]) -> tuple:
    comps = sorted((float(lo), float(hi)) for lo, hi in components)
    out = []
    for lo, hi in comps:
        if lo > hi or math.isnan(lo) or math.isnan(hi):
            raise ValueError(f"invalid component ({lo}, {hi})")
        if lo == math.inf or hi == -math.inf:
            raise ValueError("component endpoints must be finite or open rays")
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return tuple(out)


@dataclass(frozen=True, init=False)
class ConfidenceRegion:
    """Sorted, pairwise disjoint, non-adjacent closed components.

    Each component is ``(lo, hi)`` with ``lo == hi`` for a singleton and
    ``-inf``/``inf`` endpoints for rays. Overlapping or touching input
    components are merged.
    """

    components: tuple

    def __init__(self, components: Iterable[Component] = ()):
        object.__setattr__(self, "components", _normalize(components))

    @classmethod
    def real_line(cls) -> "ConfidenceRegion":
        return cls([(-math.inf, math.inf)])

    def __bool__(self) -> bool:
        return bool(self.components)

    def __iter__(self):
        return iter(self.components)

    def __len__(self) -> int:
        return len(self.components)

    @property
    def is_empty(self) -> bool:
        return not self.components

    @property
    def is_bounded(self) -> bool:
        return all(math.isfinite(lo) and math.isfinite(hi) for lo, hi in self.components)

    @property
    def singletons(self) -> list:
        return [lo for lo, hi in self.components if lo == hi]

    def endpoints(self) -> list:
        return [v for comp in self.components for v in comp if math.isfinite(v)]

    def contains(self, z: float) -> bool:
        return any(lo <= z <= hi for lo, hi in self.components)

    def hull_width(self) -> float:
        if not self.components:
            raise EmptyRegion("hull width of an empty region")
        return self.components[-1][1] - self.components[0][0]

    def intersect(self, other: "ConfidenceRegion") -> "ConfidenceRegion":
        a, b = self.components, other.components
        out = []
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return ConfidenceRegion(out)

    def __and__(self, other):
        return self.intersect(other)

    def issubset(self, other: "ConfidenceRegion") -> bool:
        return all(
            any(olo <= lo and hi <= ohi for olo, ohi in other.components)
            for lo, hi in self.components
        )

    def __str__(self) -> str:
        if not self.components:
            return "empty"
        return " U ".join(format_component(c) for c in self.components)


def _fmt(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return f"{v:.6f}"


def format_component(comp: Component) -> str:
    lo, hi = comp
    if lo == hi:
        return "{" + _fmt(lo) + "}"
    left = "(" if lo == -math.inf else "["
    right = ")" if hi == math.inf else "]"
    return f"{left}{_fmt(lo)}, {_fmt(hi)}{right}"


def region_contains(r: ConfidenceRegion, z: float) -> bool:
    return r.contains(z)


def region_hull_width(r: ConfidenceRegion) -> float:
    """Length of the smallest interval containing ``r``; ``inf`` if unbounded."""
    return r.hull_width()
