"""Shared numerical substrate: boxes, grids, quadrature, root finding.

All tolerances used by the library live in one frozen record so runs are
reproducible and reports can state the configuration they used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DomainError
from .expr import Dual, Expression

__all__ = [
    "Box",
    "Grid",
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "integrate_1d",
    "find_roots",
    "fd_check",
    "FdCheck",
]

_MACHINE_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class Tolerances:
    """Central tolerance record; defaults are the documented contract."""

    root_value: float = 1e-13       # bisection stops when |f| drops below this
    root_width: float = 1e-14       # ... or the bracket is narrower than this
    phi_scan_cutoff: float = 1e-12  # lower scan bound where exp(-1/x) underflows
    exactness: float = 1e-8         # mixed-partial residual considered exact
    sequence_limit: float = 1e-6    # coefficient sequence limit match


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed box with nonempty interior, dimension 1 to 4.

    Dimension 4 exists for (t, x, y, z) sampling in the mechanics checks;
    point-cloud geometry stays in dimensions 1 to 3.
    """

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        if not 1 <= len(ivs) <= 4:
            raise ValueError(f"box dimension must be 1..4, got {len(ivs)}")
        for lo, hi in ivs:
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("box bounds must be finite")
            if not lo < hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Box":
        return cls(tuple((lo, hi) for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def lows(self) -> tuple[float, ...]:
        return tuple(lo for lo, _ in self.intervals)

    @property
    def highs(self) -> tuple[float, ...]:
        return tuple(hi for _, hi in self.intervals)

    def contains(self, points: np.ndarray, atol: float = 1e-9) -> bool:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.array(self.lows) - atol
        hi = np.array(self.highs) + atol
        return bool(np.all(pts >= lo) and np.all(pts <= hi))

    def strictly_contains_point(self, point: Sequence[float]) -> bool:
        return all(lo < float(p) < hi for p, (lo, hi) in zip(point, self.intervals))


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid with the same point count on every axis.

    Spacing on axis i is (hi_i - lo_i) / (m - 1); corner points are always
    included and the grid has exactly m^d points.
    """

    box: Box
    points_per_axis: int

    def __post_init__(self):
        if self.points_per_axis < 2:
            raise ValueError("grid needs at least 2 points per axis")

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        m = self.points_per_axis
        return tuple((hi - lo) / (m - 1) for lo, hi in self.box.intervals)

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def count(self) -> int:
        return self.points_per_axis**self.dim

    def axes(self) -> tuple[np.ndarray, ...]:
        m = self.points_per_axis
        return tuple(np.linspace(lo, hi, m) for lo, hi in self.box.intervals)

    def meshes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def points(self) -> np.ndarray:
        mesh = self.meshes()
        return np.stack([m.ravel() for m in mesh], axis=1)


def integrate_1d(
    fn: Callable,
    a: float,
    b: float,
    panels: int,
    *,
    vectorized: bool = False,
) -> float:
    """Composite Simpson estimate of the integral of fn over [a, b].

    ``panels`` is the (even, positive) number of subintervals.  Doubling the
    panel count gives the Richardson delta callers may report.  A vectorized
    ``fn`` receives the whole sample array at once.
    """
    if not a < b:
        raise ValueError(f"integration bounds must satisfy a < b, got [{a}, {b}]")
    if panels <= 0 or panels % 2 != 0:
        raise ValueError(f"panels must be an even positive integer, got {panels}")
    xs = np.linspace(a, b, panels + 1)
    if vectorized:
        ys = np.broadcast_to(np.asarray(fn(xs), dtype=float), xs.shape)
    else:
        ys = np.array([float(fn(float(x))) for x in xs])
    bad = ~np.isfinite(ys)
    if np.any(bad):
        where = xs[bad][0]
        raise DomainError(f"non-finite integrand value at x={where!r}")
    weights = np.ones(panels + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    total = math.fsum((weights * ys).tolist())
    return (b - a) * total / (3.0 * panels)


def richardson_delta(
    fn: Callable, a: float, b: float, panels: int, *, vectorized: bool = False
) -> float:
    """Change in the Simpson estimate when the panel count is doubled."""
    coarse = integrate_1d(fn, a, b, panels, vectorized=vectorized)
    fine = integrate_1d(fn, a, b, 2 * panels, vectorized=vectorized)
    return fine - coarse


def _bisect(fn, lo, hi, flo, value_tol, width_tol):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if abs(fm) <= value_tol or (hi - lo) <= width_tol:
            return mid
        if flo * fm < 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def find_roots(
    fn: Callable[[float], float],
    interval: tuple[float, float],
    scan_points: int,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> list[float]:
    """Roots of a continuous function found by scan plus bisection.

    The interval is scanned at ``scan_points`` subintervals; every sign
    change is bisected until |fn| <= root_value or the bracket is narrower
    than root_width.  Tangential zeros that do not change sign can be
    missed; an empty result is valid.  Non-finite samples simply never
    bracket.  Roots come back sorted ascending.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError(f"interval must satisfy a < b, got [{a}, {b}]")
    if scan_points < 1:
        raise ValueError("scan_points must be positive")
    xs = np.linspace(a, b, scan_points + 1)
    fs = [fn(float(x)) for x in xs]
    roots: list[float] = []
    for x, f in zip(xs, fs):
        if f == 0.0:
            roots.append(float(x))
    for i in range(scan_points):
        flo, fhi = fs[i], fs[i + 1]
        if not (math.isfinite(flo) and math.isfinite(fhi)):
            continue
        if flo * fhi < 0.0:
            roots.append(
                _bisect(
                    fn,
                    float(xs[i]),
                    float(xs[i + 1]),
                    flo,
                    tolerances.root_value,
                    tolerances.root_width,
                )
            )
    return sorted(roots)


class FdCheck(NamedTuple):
    ad_value: float
    fd_value: float
    abs_diff: float


def fd_check(e: Expression, var: str, point: Mapping[str, float]) -> FdCheck:
    """Cross-check a dual-number partial against a central difference.

    Step size is eps^(1/3) * max(1, |coordinate|); the point must be at
    least one step inside the expression's domain of validity.
    """
    if var not in e.vars:
        raise ValueError(f"{var!r} is not a declared variable")
    x0 = float(point[var])
    step = _MACHINE_EPS ** (1.0 / 3.0) * max(1.0, abs(x0))
    hi = dict(point)
    lo = dict(point)
    hi[var] = x0 + step
    lo[var] = x0 - step
    f_hi = e.evaluate(hi)
    f_lo = e.evaluate(lo)
    fd = (f_hi - f_lo) / (2.0 * step)
    seeded = {k: Dual(float(v), 1.0 if k == var else 0.0) for k, v in point.items()}
    ad = e.evaluate_dual(seeded).deriv
    return FdCheck(ad, fd, abs(ad - fd))
