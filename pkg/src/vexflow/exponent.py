"""Variable exponent fields p(t,x) with a genuine critical set Y = [p = 1].

The continuum requirement that p cannot approach 1 off its critical set is
discretized as a uniform gap: every cell value is either exactly 1 or at
least 1 + gap.  Constructors enforce the gap so Y is always an exact,
testable cell set.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .grid import Grid2D, VectorField, gradient_values

DEFAULT_GAP = 0.1


@dataclass(frozen=True)
class ExponentField:
    """Per-cell exponent values in {1} union [1+gap, p_plus]."""

    grid: Grid2D
    values: np.ndarray
    p_plus: float
    gap: float = DEFAULT_GAP

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(
                f"exponent values must have shape {self.grid.shape}, got {v.shape}"
            )
        if not np.isfinite(self.p_plus):
            raise ValueError("p_plus must be finite")
        if not (self.gap > 0):
            raise ValueError(f"gap must be positive, got {self.gap}")
        if not np.all(np.isfinite(v)):
            raise ValueError("exponent values must be finite")
        if v.min() < 1.0 or v.max() > self.p_plus:
            raise ValueError(
                f"exponent values must lie in [1, p_plus={self.p_plus}], "
                f"got range [{v.min()}, {v.max()}]"
            )
        off = v[v != 1.0]
        if off.size and off.min() < 1.0 + self.gap:
            raise ValueError(
                f"gap condition violated: value {off.min()} in (1, 1+{self.gap})"
            )
        object.__setattr__(self, "values", v)

    @property
    def p_minus(self) -> float:
        return float(self.values.min())

    @property
    def dual_exponent(self) -> float:
        if self.p_plus == 1.0:
            return np.inf
        return self.p_plus / (self.p_plus - 1.0)

    @classmethod
    def constant(cls, grid: Grid2D, p: float, gap: float = DEFAULT_GAP) -> "ExponentField":
        return cls(grid, np.full(grid.shape, float(p)), p_plus=float(p), gap=gap)


def critical_mask(p: ExponentField) -> np.ndarray:
    """Boolean mask of the critical set Y, true exactly where p = 1."""
    return p.values == 1.0


def validate_gap(p: ExponentField, gap: float) -> bool:
    """True iff every value lies in {1} union [1+gap, p_plus]."""
    if not (gap > 0):
        raise ValueError(f"gap must be positive, got {gap}")
    v = p.values
    return bool(np.all((v == 1.0) | (v >= 1.0 + gap)))


def edge_adaptive_exponent(
    u0: VectorField,
    sigma: float,
    k: float,
    p_max: float,
    gap: float = DEFAULT_GAP,
) -> ExponentField:
    """Exponent map from image content: diffusive off edges, critical on them.

    s(x) is the Frobenius gradient magnitude of the Gaussian-presmoothed
    image; raw(x) = 1 + (p_max - 1)/(1 + k s(x)^2) is thresholded to exactly
    1 where it falls below 1 + gap (strong edges) and clamped to
    [1+gap, p_max] elsewhere, so the gap condition holds by construction.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if not (k > 0):
        raise ValueError(f"k must be positive, got {k}")
    if not (p_max > 1.0 + gap):
        raise ValueError(f"p_max must exceed 1+gap={1.0 + gap}, got {p_max}")
    v = u0.values
    if sigma > 0:
        v = gaussian_filter(v, sigma=(sigma, sigma, 0), mode="nearest")
    g = gradient_values(v, u0.grid.h)
    s2 = np.einsum("xycd,xycd->xy", g, g)
    raw = 1.0 + (p_max - 1.0) / (1.0 + k * s2)
    p = np.where(raw < 1.0 + gap, 1.0, np.clip(raw, 1.0 + gap, p_max))
    return ExponentField(u0.grid, p, p_plus=p_max, gap=gap)


@dataclass
class ExponentSchedule:
    """Exponent field per time t, produced by a rule and cached per time key.

    All slices share p_plus and gap (validated on first access).
    """

    rule: Callable[[float], ExponentField]
    p_plus: float
    gap: float
    _cache: dict = field(default_factory=dict, repr=False)
    _constant: Optional[ExponentField] = None

    def at(self, t: float) -> ExponentField:
        if self._constant is not None:
            return self._constant
        key = float(t)
        if key not in self._cache:
            sl = self.rule(key)
            if not isinstance(sl, ExponentField):
                raise ValueError("schedule rule must return an ExponentField")
            if sl.p_plus != self.p_plus or sl.gap != self.gap:
                raise ValueError(
                    "schedule slices must share p_plus and gap: "
                    f"got ({sl.p_plus}, {sl.gap}), expected ({self.p_plus}, {self.gap})"
                )
            self._cache[key] = sl
        return self._cache[key]

    @property
    def is_constant(self) -> bool:
        return self._constant is not None

    @classmethod
    def constant(cls, p: ExponentField) -> "ExponentSchedule":
        return cls(rule=lambda t: p, p_plus=p.p_plus, gap=p.gap, _constant=p)


def schedule_from_rule(rule: Callable[[float], ExponentField], times) -> ExponentSchedule:
    """Build a schedule from a rule, eagerly validating the slices at `times`."""
    times = [float(t) for t in times]
    if not times:
        raise ValueError("at least one time is required")
    first = rule(times[0])
    sched = ExponentSchedule(rule=rule, p_plus=first.p_plus, gap=first.gap)
    sched._cache[times[0]] = first
    for t in times[1:]:
        sched.at(t)
    return sched
