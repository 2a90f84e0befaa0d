"""Closed convex product cones described coordinate by coordinate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np


class Tag(str, Enum):
    NONPOS = "nonpos"
    NONNEG = "nonneg"
    ZERO = "zero"
    FREE = "free"


class ConeDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ConeSpec:
    """Product cone ``C = C_1 x ... x C_m`` with each factor given by a tag."""

    tags: tuple[Tag, ...]

    def __init__(self, tags: Iterable[Tag | str]):
        tags = tuple(Tag(t) if not isinstance(t, Tag) else t for t in tags)
        if not tags:
            raise ConeDimensionError("a cone needs at least one coordinate")
        object.__setattr__(self, "tags", tags)

    @property
    def m(self) -> int:
        return len(self.tags)

    def names(self) -> list[str]:
        return [t.value for t in self.tags]

    def _check(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != self.m:
            raise ConeDimensionError(f"expected {self.m} coordinates, got {y.shape[0]}")
        return y

    def componentwise_violation(self, y) -> np.ndarray:
        y = self._check(y)
        out = np.zeros(self.m)
        for i, tag in enumerate(self.tags):
            if tag is Tag.NONPOS:
                out[i] = max(y[i], 0.0)
            elif tag is Tag.NONNEG:
                out[i] = max(-y[i], 0.0)
            elif tag is Tag.ZERO:
                out[i] = abs(y[i])
        return out


def contains(cone: ConeSpec, y, tol: float = 0.0) -> bool:
    """Whether every coordinate of ``y`` meets its tag within ``tol``."""
    return bool(np.all(cone.componentwise_violation(y) <= tol))


def violation(cone: ConeSpec, y) -> float:
    """Euclidean distance from ``y`` to the cone."""
    # hypot rescales, so tiny violations do not underflow to zero
    return math.hypot(*cone.componentwise_violation(y))
