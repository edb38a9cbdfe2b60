"""Secant intersection sets of C1 graphs and their limit behavior.

For a scalar field f on a box Omega with interior base point b, the secant
set with coefficients A is the zero set in Omega of

    g(p) = f(p) - f(b) - sum_i A_i (p_i - b_i),

i.e. the projection of the intersection of the graph of f with the affine
plane of slope A through the base graph point.  At A = grad f(b) the plane
is tangent.  This module extracts those sets on grids, forms the
approximate upper limit of a converging family, and reports whether the
limit set is contained in the tangent set (and how far the reverse
containment fails, which detects proper inclusion).

Extraction keeps a grid point when |g| falls below a slope-aware fat-zero
tolerance, so genuinely flat zero regions (where g vanishes on an open
set) are captured in full while transversal zero curves inflate by at
most about one cell.  Sign-change edges contribute one extra point each
after a single bisection refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .compact_sets import (
    PointCloudSet,
    SetSequence,
    _directed_with_witness,
    approx_upper_limit,
)
from .errors import DomainError
from .expr import Dual, Expression, const, mul, parse, phi, sub, variable
from .numerics import Box, Grid, DEFAULT_TOLERANCES, find_roots

__all__ = [
    "SurfaceSpec",
    "HypersurfaceSpec",
    "SecantCoefficients",
    "secant_residual",
    "tangent_coefficients",
    "extract_secant_set",
    "verify_upper_limit_inclusion",
    "InclusionReport",
    "phi_counterexample",
    "CounterexampleDescription",
    "coefficient_sequence",
]

_SQRT_EPS = math.sqrt(float(np.finfo(float).eps))
_VARS = {2: ("x", "y"), 3: ("x", "y", "z")}


def _validate_spec(omega: Box, f: Expression, base: tuple[float, ...], dim: int) -> None:
    if omega.dim != dim:
        raise ValueError(f"omega must be {dim}-dimensional, got {omega.dim}")
    if tuple(f.vars) != _VARS[dim]:
        raise ValueError(
            f"field must be declared over {_VARS[dim]}, got {tuple(f.vars)}"
        )
    if len(base) != dim or not all(math.isfinite(v) for v in base):
        raise ValueError(f"base point must be {dim} finite coordinates")
    if not omega.strictly_contains_point(base):
        raise ValueError(f"base point {base} must lie strictly inside omega")


@dataclass(frozen=True)
class SurfaceSpec:
    """A C1 scalar field on a 2D box with an interior base point."""

    omega: Box
    f: Expression
    base: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        _validate_spec(self.omega, self.f, self.base, 2)

    @classmethod
    def from_source(cls, f_source: str, omega: Box, base: Sequence[float]) -> "SurfaceSpec":
        return cls(omega, parse(f_source, _VARS[2]), tuple(base))

    @property
    def dim(self) -> int:
        return 2

    @property
    def var_names(self) -> tuple[str, ...]:
        return _VARS[2]


@dataclass(frozen=True)
class HypersurfaceSpec:
    """A C1 scalar field on a 3D box with an interior base point."""

    omega: Box
    f: Expression
    base: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        _validate_spec(self.omega, self.f, self.base, 3)

    @classmethod
    def from_source(cls, f_source: str, omega: Box, base: Sequence[float]) -> "HypersurfaceSpec":
        return cls(omega, parse(f_source, _VARS[3]), tuple(base))

    @property
    def dim(self) -> int:
        return 3

    @property
    def var_names(self) -> tuple[str, ...]:
        return _VARS[3]


GraphSpec = Union[SurfaceSpec, HypersurfaceSpec]


@dataclass(frozen=True)
class SecantCoefficients:
    """Plane/hyperplane slope coefficients (A, B) or (A, B, Gamma)."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) not in (2, 3):
            raise ValueError("coefficients must have 2 or 3 components")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"coefficients must be finite, got {vals}")

    @property
    def dim(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, idx):
        return self.values[idx]


def _coerce_coeffs(coeffs, dim: int) -> SecantCoefficients:
    if not isinstance(coeffs, SecantCoefficients):
        coeffs = SecantCoefficients(tuple(coeffs))
    if coeffs.dim != dim:
        raise ValueError(f"expected {dim} coefficients, got {coeffs.dim}")
    return coeffs


def secant_residual(spec: GraphSpec, coeffs) -> Expression:
    """The residual g whose zero set in omega is the secant set.

    g(p) = f(p) - f(base) - sum_i A_i (p_i - base_i); g(base) is exactly 0.
    """
    coeffs = _coerce_coeffs(coeffs, spec.dim)
    f_base = spec.f.evaluate(dict(zip(spec.var_names, spec.base)))
    root = sub(spec.f.root, const(f_base))
    for a, name, b in zip(coeffs, spec.var_names, spec.base):
        root = sub(root, mul(const(a), sub(variable(name), const(b))))
    return Expression(root, spec.var_names)


def tangent_coefficients(spec: GraphSpec) -> SecantCoefficients:
    """Gradient of f at the base point, computed by dual evaluation."""
    out = []
    for name in spec.var_names:
        seeded = {
            v: Dual(b, 1.0 if v == name else 0.0)
            for v, b in zip(spec.var_names, spec.base)
        }
        d = spec.f.evaluate_dual(seeded).deriv
        if not math.isfinite(d):
            raise DomainError(f"non-finite partial derivative in {name} at base")
        out.append(float(d))
    return SecantCoefficients(tuple(out))


class _FieldOnGrid:
    """f, its partials, and coordinate offsets evaluated once per grid.

    Extracting many secant sets of the same field only differs in the
    affine part, so everything expensive is shared here.
    """

    def __init__(self, spec: GraphSpec, grid: Grid):
        if grid.box != spec.omega:
            raise ValueError("grid box must coincide with the spec's omega")
        self.spec = spec
        self.grid = grid
        self.h = grid.h
        self.spacing = grid.spacing
        self.meshes = grid.meshes()
        self.shape = self.meshes[0].shape
        names = spec.var_names
        bindings = dict(zip(names, self.meshes))
        f_vals = spec.f.evaluate_array(bindings)
        self.f_values = np.broadcast_to(np.asarray(f_vals, dtype=float), self.shape)
        if not np.all(np.isfinite(self.f_values)):
            bad = np.argwhere(~np.isfinite(self.f_values))[0]
            where = tuple(float(m[tuple(bad)]) for m in self.meshes)
            raise DomainError(f"field is non-finite at grid point {where}")
        self.partials = []
        for name in names:
            env = {
                v: Dual(m, np.ones(self.shape) if v == name else 0.0)
                for v, m in zip(names, self.meshes)
            }
            d = spec.f.evaluate_dual(env).deriv
            self.partials.append(np.broadcast_to(np.asarray(d, dtype=float), self.shape))
        self.f_base = spec.f.evaluate(dict(zip(names, spec.base)))
        self.deltas = [m - b for m, b in zip(self.meshes, spec.base)]

    def residual_values(self, coeffs: SecantCoefficients) -> np.ndarray:
        g = self.f_values - self.f_base
        for a, delta in zip(coeffs, self.deltas):
            if a != 0.0:
                g = g - a * delta
        return g

    def residual_at(self, points: np.ndarray, coeffs: SecantCoefficients) -> np.ndarray:
        names = self.spec.var_names
        bindings = {v: points[:, i] for i, v in enumerate(names)}
        vals = self.spec.f.evaluate_array(bindings)
        g = np.broadcast_to(np.asarray(vals, dtype=float), (points.shape[0],)).copy()
        g -= self.f_base
        for i, a in enumerate(coeffs):
            if a != 0.0:
                g -= a * (points[:, i] - self.spec.base[i])
        return g

    def gradient_magnitude(self, coeffs: SecantCoefficients) -> np.ndarray:
        acc = np.zeros(self.shape)
        for a, part in zip(coeffs, self.partials):
            diff = part - a
            acc += diff * diff
        return np.sqrt(acc)

    def fat_zero_tolerance(self, coeffs: SecantCoefficients) -> np.ndarray:
        # sqrt(machine eps) floor captures exactly-flat regions; the slope
        # term admits points within about one cell of a transversal zero.
        return _SQRT_EPS + self.h * self.gradient_magnitude(coeffs)


def _edge_refinements(field: _FieldOnGrid, g: np.ndarray, coeffs: SecantCoefficients) -> list[np.ndarray]:
    """One bisection refinement per sign-change grid edge.

    The midpoint of the edge is evaluated once; the returned point is the
    midpoint of whichever half-bracket still changes sign.
    """
    out = []
    dim = field.spec.dim
    for axis in range(dim):
        lo_sl = tuple(slice(None, -1) if i == axis else slice(None) for i in range(dim))
        hi_sl = tuple(slice(1, None) if i == axis else slice(None) for i in range(dim))
        lo_vals = g[lo_sl]
        hi_vals = g[hi_sl]
        mask = lo_vals * hi_vals < 0.0
        if not np.any(mask):
            continue
        corner = np.stack([m[lo_sl][mask] for m in field.meshes], axis=1)
        step = field.spacing[axis]
        mids = corner.copy()
        mids[:, axis] += 0.5 * step
        g_mid = field.residual_at(mids, coeffs)
        flo = lo_vals[mask]
        offset = np.where(
            g_mid == 0.0,
            0.5 * step,
            np.where(flo * g_mid < 0.0, 0.25 * step, 0.75 * step),
        )
        refined = corner.copy()
        refined[:, axis] += offset
        out.append(refined)
    return out


def _extract_on_field(field: _FieldOnGrid, coeffs: SecantCoefficients) -> PointCloudSet:
    g = field.residual_values(coeffs)
    keep = np.abs(g) <= field.fat_zero_tolerance(coeffs)
    chunks = [np.stack([m[keep] for m in field.meshes], axis=1)]
    chunks.extend(_edge_refinements(field, g, coeffs))
    # The base point solves g = 0 identically for every coefficient choice,
    # so it belongs to the set even when it is not a grid node.
    chunks.append(np.asarray(field.spec.base, dtype=float).reshape(1, -1))
    points = np.vstack([c for c in chunks if c.size])
    return PointCloudSet(
        field.spec.dim,
        points,
        field.h,
        box=field.spec.omega,
        allow_empty=True,
    )


def extract_secant_set(spec: GraphSpec, coeffs, grid: Grid) -> PointCloudSet:
    """Grid extraction of the secant set for one coefficient choice."""
    coeffs = _coerce_coeffs(coeffs, spec.dim)
    return _extract_on_field(_FieldOnGrid(spec, grid), coeffs)


def coefficient_sequence(
    spec: GraphSpec, direction: Sequence[float], count: int
) -> list[SecantCoefficients]:
    """tangent + (1/n) * direction for n = 1..count."""
    tangent = tangent_coefficients(spec)
    direction = tuple(float(v) for v in direction)
    if len(direction) != spec.dim:
        raise ValueError("direction dimension mismatch")
    return [
        SecantCoefficients(
            tuple(t + d / n for t, d in zip(tangent, direction))
        )
        for n in range(1, count + 1)
    ]


@dataclass
class InclusionReport:
    """Result of checking limsup(secant sets) against the tangent set.

    ``inclusion`` is the directed test d(limsup -> tangent) <= 2h + eps;
    ``proper_gap`` is the reverse directed distance, which stays large when
    the inclusion is proper.
    """

    n_list: list[int]
    coefficients: list[tuple[float, ...]]
    tangent: tuple[float, ...]
    eps: float
    tail_fraction: float
    h: float
    grid_points_per_axis: int
    threshold: float
    d_limsup_to_tangent: float
    d_tangent_to_limsup: float
    inclusion: bool
    proper_gap: float
    witnesses: list[dict]
    sets: list[PointCloudSet] = field(repr=False, default_factory=list)
    limsup_set: PointCloudSet | None = field(repr=False, default=None)
    tangent_set: PointCloudSet | None = field(repr=False, default=None)

    def to_json_dict(self) -> dict:
        return {
            "n_list": self.n_list,
            "coefficients": [list(c) for c in self.coefficients],
            "tangent_coefficients": list(self.tangent),
            "eps": self.eps,
            "tail_fraction": self.tail_fraction,
            "h": self.h,
            "grid_points_per_axis": self.grid_points_per_axis,
            "inclusion_threshold": self.threshold,
            "d_limsup_to_tangent": self.d_limsup_to_tangent,
            "d_tangent_to_limsup": self.d_tangent_to_limsup,
            "inclusion": self.inclusion,
            "proper_gap": self.proper_gap,
            "witnesses": self.witnesses,
        }


def _check_convergence(
    coeffs: list[SecantCoefficients], tangent: SecantCoefficients, tol: float
) -> None:
    """The sequence must head to the tangent coefficients.

    Accepts either a final element already within ``tol`` or a sequence
    whose Richardson extrapolation (assuming an error of order 1/n, the
    canonical approach family) lands within ``tol``.  Sequences aimed at a
    different limit are rejected.
    """
    last = np.array(coeffs[-1].values)
    mid = np.array(coeffs[len(coeffs) // 2 - 1].values)
    tgt = np.array(tangent.values)
    direct = float(np.max(np.abs(last - tgt)))
    # c_n ~ limit + d/n gives 2 c_{2m} - c_m = limit exactly.
    extrapolated = float(np.max(np.abs(2.0 * last - mid - tgt)))
    if min(direct, extrapolated) > tol:
        raise ValueError(
            "coefficient sequence does not converge to the tangent "
            f"coefficients (final error {direct:.3e}, extrapolated error "
            f"{extrapolated:.3e}, tolerance {tol:.1e})"
        )


def verify_upper_limit_inclusion(
    spec: GraphSpec,
    coeff_sequence: Iterable,
    grid: Grid,
    eps: float | None = None,
    tail_fraction: float = 0.5,
) -> InclusionReport:
    """Extract the family, form its upper limit, and test the inclusion.

    ``eps`` (default 2h) is both the membership tolerance of the
    approximate upper limit and the slack added to 2h for the inclusion
    test.  The report carries both directed distances so proper inclusion
    shows up as a large ``proper_gap`` with ``inclusion`` still true.
    """
    coeffs = [_coerce_coeffs(c, spec.dim) for c in coeff_sequence]
    if len(coeffs) < 8:
        raise ValueError(f"need at least 8 coefficient sets, got {len(coeffs)}")
    tangent = tangent_coefficients(spec)
    _check_convergence(coeffs, tangent, DEFAULT_TOLERANCES.sequence_limit)
    field_cache = _FieldOnGrid(spec, grid)
    if eps is None:
        eps = 2.0 * field_cache.h
    sets = [_extract_on_field(field_cache, c) for c in coeffs]
    seq = SetSequence(tuple(sets))
    limsup = approx_upper_limit(seq, eps=eps, tail_fraction=tail_fraction)
    if limsup.is_empty:
        raise ValueError(
            "approximate upper limit came out empty; increase eps or the tail"
        )
    tangent_set = _extract_on_field(field_cache, tangent)
    d_lt, wit_lt = _directed_with_witness(limsup, tangent_set)
    d_tl, wit_tl = _directed_with_witness(tangent_set, limsup)
    threshold = 2.0 * field_cache.h + eps
    witnesses = [
        {
            "kind": "limsup_point_farthest_from_tangent_set",
            "point": [float(v) for v in wit_lt],
            "distance": d_lt,
        },
        {
            "kind": "tangent_point_farthest_from_limsup",
            "point": [float(v) for v in wit_tl],
            "distance": d_tl,
        },
    ]
    return InclusionReport(
        n_list=list(range(1, len(coeffs) + 1)),
        coefficients=[c.values for c in coeffs],
        tangent=tangent.values,
        eps=float(eps),
        tail_fraction=float(tail_fraction),
        h=field_cache.h,
        grid_points_per_axis=grid.points_per_axis,
        threshold=threshold,
        d_limsup_to_tangent=d_lt,
        d_tangent_to_limsup=d_tl,
        inclusion=d_lt <= threshold,
        proper_gap=d_tl,
        witnesses=witnesses,
        sets=sets,
        limsup_set=limsup,
        tangent_set=tangent_set,
    )


@dataclass(frozen=True)
class CounterexampleDescription:
    """Closed-form structure of the built-in flat-exponential secant set."""

    dim: int
    n: int
    slope: float
    zero_face: str
    positive_branch_root: float | None

    @property
    def has_positive_branch(self) -> bool:
        return self.positive_branch_root is not None

    @property
    def text(self) -> str:
        cross = "[-1,1]" if self.dim == 2 else "[-1,1]^2"
        body = f"{{0}} x {cross}"
        if self.positive_branch_root is not None:
            body += f" U {{{self.positive_branch_root:.12f}}} x {cross}"
        return body

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.n,
            "slope": self.slope,
            "zero_face": self.zero_face,
            "positive_branch_root": self.positive_branch_root,
            "has_positive_branch": self.has_positive_branch,
            "description": self.text,
        }


def phi_counterexample(
    dim: int, n: int, grid: Grid
) -> tuple[PointCloudSet, CounterexampleDescription]:
    """Secant set of f = phi(x) on [-1,1]^dim at coefficients (1/n, 0, ...).

    The set is the x = 0 face of the cube together with, when
    exp(-1/x) = x/n has a solution on (0,1], one more parallel face at
    that root.  The root search scans x >= 1e-12 because exp(-1/x)
    underflows below that; this is part of the approximation contract.
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if n < 1:
        raise ValueError("n must be a positive integer")
    omega = Box.cube(-1.0, 1.0, dim)
    if grid.box != omega:
        raise ValueError("counterexample grid must cover [-1, 1]^dim")
    names = _VARS[dim]
    f = Expression(phi(variable("x")), names)
    spec_cls = SurfaceSpec if dim == 2 else HypersurfaceSpec
    spec = spec_cls(omega, f, tuple(0.0 for _ in range(dim)))
    coeffs = SecantCoefficients((1.0 / n,) + (0.0,) * (dim - 1))
    cloud = extract_secant_set(spec, coeffs, grid)

    def branch_fn(x: float) -> float:
        return math.exp(-1.0 / x) - x / n

    roots = find_roots(
        branch_fn, (DEFAULT_TOLERANCES.phi_scan_cutoff, 1.0), scan_points=2000
    )
    root = roots[0] if roots else None
    cross = "[-1,1]" if dim == 2 else "[-1,1]^2"
    description = CounterexampleDescription(
        dim=dim,
        n=n,
        slope=1.0 / n,
        zero_face=f"{{0}} x {cross}",
        positive_branch_root=root,
    )
    return cloud, description
