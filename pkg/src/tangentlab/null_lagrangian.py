"""Separable Lagrangians that make every C2 curve stationary.

A Lagrangian of the form

    L(t, x, y, z, x', y', z') = P(t,x,y,z) + Q1(t,x) x' + Q2(t,y) y' + Q3(t,z) z'

satisfies the Euler-Lagrange equations identically along every C2 curve
whenever the exactness conditions dP/dq_i = dQ_i/dt hold, because the time
derivative of dL/dq_i' expands to dQ_i/dt + dQ_i/dq_i q_i' and the
velocity terms cancel.  Any triple of C2 generators f(t,x), g(t,y),
h(t,z) produces such an L as a total time derivative, so the action only
sees curve endpoints.  Each exact pair (P_i, Q_i) integrates to a
potential u_i with du_i/dt = P_i and du_i/dq = Q_i.

Everything here is symbolic-first: partial derivatives come from the
expression ASTs, curves are expressions of t, and quadrature only enters
for action values and potentials.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import Dual, Expression, parse, sub
from .numerics import (
    Box,
    DEFAULT_TOLERANCES,
    Grid,
    integrate_1d,
    richardson_delta,
)

__all__ = [
    "GeneratorTriple",
    "SeparableLagrangian",
    "Curve",
    "KineticEnergy",
    "PotentialFunction",
    "build_from_generators",
    "exactness_residuals",
    "ExactnessReport",
    "euler_lagrange_residual",
    "max_euler_lagrange_residual",
    "ElScan",
    "action",
    "action_richardson_delta",
    "endpoint_action",
    "potential_from_exact_pair",
    "velocity_dependence_report",
    "VelocityDependenceReport",
    "EXAMPLE_GENERATORS",
    "example_lagrangian",
    "DEFAULT_SAMPLE_GRID",
]

_POSITIONS = ("x", "y", "z")
_VELOCITIES = ("x'", "y'", "z'")
_FULL_VARS = ("t",) + _POSITIONS + _VELOCITIES
_P_VARS = ("t", "x", "y", "z")
_Q_VARS = {"x": ("t", "x"), "y": ("t", "y"), "z": ("t", "z")}

# Ready-made generator triple with a fully polynomial Lagrangian; handy for
# demos, docs and tests.
EXAMPLE_GENERATORS = (
    "t^2 + (3/2)*t^2*x^2",
    "t^2*y - y^3/3",
    "z^2/2 - 2*t*z",
)

DEFAULT_SAMPLE_GRID = Grid(Box.cube(-1.0, 1.0, 4), 9)


def _require_vars(e: Expression, expected: tuple[str, ...], label: str) -> None:
    if tuple(e.vars) != expected:
        raise ValueError(f"{label} must be declared over {expected}, got {tuple(e.vars)}")


@dataclass(frozen=True)
class GeneratorTriple:
    """C2 generators f(t,x), g(t,y), h(t,z) of a separable null Lagrangian."""

    f: Expression
    g: Expression
    h: Expression

    def __post_init__(self):
        _require_vars(self.f, _Q_VARS["x"], "generator f")
        _require_vars(self.g, _Q_VARS["y"], "generator g")
        _require_vars(self.h, _Q_VARS["z"], "generator h")

    @classmethod
    def from_sources(cls, f_src: str, g_src: str, h_src: str) -> "GeneratorTriple":
        return cls(
            parse(f_src, _Q_VARS["x"]),
            parse(g_src, _Q_VARS["y"]),
            parse(h_src, _Q_VARS["z"]),
        )


@dataclass
class SeparableLagrangian:
    """The data (P, Q1, Q2, Q3), optionally with its generator triple.

    The full Lagrangian is P + Q1 x' + Q2 y' + Q3 z'; velocity dependence
    is affine and separable by construction.
    """

    P: Expression
    Q1: Expression
    Q2: Expression
    Q3: Expression
    generators: GeneratorTriple | None = None
    _partials: dict = field(default_factory=dict, repr=False, compare=False)
    _exactness_max: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        _require_vars(self.P, _P_VARS, "P")
        _require_vars(self.Q1, _Q_VARS["x"], "Q1")
        _require_vars(self.Q2, _Q_VARS["y"], "Q2")
        _require_vars(self.Q3, _Q_VARS["z"], "Q3")

    @classmethod
    def from_sources(
        cls, p_src: str, q1_src: str, q2_src: str, q3_src: str
    ) -> "SeparableLagrangian":
        return cls(
            parse(p_src, _P_VARS),
            parse(q1_src, _Q_VARS["x"]),
            parse(q2_src, _Q_VARS["y"]),
            parse(q3_src, _Q_VARS["z"]),
        )

    def q_terms(self) -> tuple[Expression, Expression, Expression]:
        return (self.Q1, self.Q2, self.Q3)

    def partial(self, which: str, var: str) -> Expression:
        """Cached symbolic partial, e.g. partial('P', 'x') or partial('Q1', 't')."""
        key = (which, var)
        if key not in self._partials:
            self._partials[key] = getattr(self, which).differentiate(var)
        return self._partials[key]

    def full_expression(self) -> Expression:
        """L as a single expression over (t, x, y, z, x', y', z')."""
        from .expr import add, mul, variable

        root = self.P.root
        for q, vel in zip(self.q_terms(), _VELOCITIES):
            root = add(root, mul(q.root, variable(vel)))
        return Expression(root, _FULL_VARS)


def build_from_generators(generators: GeneratorTriple) -> SeparableLagrangian:
    """Total-time-derivative Lagrangian of f(t,x) + g(t,y) + h(t,z).

    P = f_t + g_t + h_t and Q_i is the spatial partial of the matching
    generator; the exactness conditions then hold identically by symmetry
    of second partials.
    """
    from .expr import add

    f_t = generators.f.differentiate("t")
    g_t = generators.g.differentiate("t")
    h_t = generators.h.differentiate("t")
    p_root = add(add(f_t.root, g_t.root), h_t.root)
    return SeparableLagrangian(
        P=Expression(p_root, _P_VARS),
        Q1=generators.f.differentiate("x"),
        Q2=generators.g.differentiate("y"),
        Q3=generators.h.differentiate("z"),
        generators=generators,
    )


def example_lagrangian() -> SeparableLagrangian:
    """The ready-made polynomial example built from EXAMPLE_GENERATORS."""
    return build_from_generators(GeneratorTriple.from_sources(*EXAMPLE_GENERATORS))


@dataclass(frozen=True)
class ExactnessReport:
    """Max-abs mixed-partial residuals |dP/dq_i - dQ_i/dt| over a sample grid."""

    residuals: tuple[float, float, float]
    witnesses: tuple[tuple[float, ...], ...]
    points_per_axis: int
    box: Box

    @property
    def max_residual(self) -> float:
        return max(self.residuals)

    def to_json_dict(self) -> dict:
        return {
            "residuals": list(self.residuals),
            "max_residual": self.max_residual,
            "witnesses": [list(w) for w in self.witnesses],
            "points_per_axis": self.points_per_axis,
            "box": [list(iv) for iv in self.box.intervals],
        }


def _dual_partial_on_arrays(
    e: Expression, bindings: Mapping[str, np.ndarray], var: str, shape
) -> np.ndarray:
    env = {}
    for name in e.vars:
        mesh = bindings[name]
        seed = np.ones(np.shape(mesh)) if name == var else 0.0
        env[name] = Dual(mesh, seed)
    out = e.evaluate_dual(env).deriv
    return np.broadcast_to(np.asarray(out, dtype=float), shape)


def exactness_residuals(
    lagrangian: SeparableLagrangian, sample: Grid | None = None
) -> ExactnessReport:
    """Evaluate the three exactness conditions on a (t,x,y,z) sample grid.

    Partials are taken with dual numbers at every grid point; the report
    carries the arg-max witnesses so violations are easy to locate.
    """
    grid = sample if sample is not None else DEFAULT_SAMPLE_GRID
    if grid.dim != 4:
        raise ValueError("exactness sampling needs a 4-dimensional (t,x,y,z) grid")
    meshes = grid.meshes()
    shape = meshes[0].shape
    bindings = dict(zip(_P_VARS, meshes))
    residuals = []
    witnesses = []
    for q, pos in zip(lagrangian.q_terms(), _POSITIONS):
        dp = _dual_partial_on_arrays(lagrangian.P, bindings, pos, shape)
        dq = _dual_partial_on_arrays(q, bindings, "t", shape)
        diff = np.abs(dp - dq)
        if not np.all(np.isfinite(diff)):
            bad = np.argwhere(~np.isfinite(diff))[0]
            where = tuple(float(m[tuple(bad)]) for m in meshes)
            from .errors import DomainError

            raise DomainError(f"non-finite exactness residual at {where}")
        idx = np.unravel_index(int(np.argmax(diff)), shape)
        residuals.append(float(diff[idx]))
        witnesses.append(tuple(float(m[idx]) for m in meshes))
    return ExactnessReport(
        residuals=tuple(residuals),
        witnesses=tuple(witnesses),
        points_per_axis=grid.points_per_axis,
        box=grid.box,
    )


@dataclass(frozen=True)
class Curve:
    """C2 path t -> (x(t), y(t), z(t)) on an open interval (a, b).

    Components are expressions of t, so velocities and accelerations come
    from symbolic differentiation rather than numerical time stepping.
    """

    x: Expression
    y: Expression
    z: Expression
    a: float
    b: float

    def __post_init__(self):
        for name, comp in zip("xyz", (self.x, self.y, self.z)):
            _require_vars(comp, ("t",), f"curve component {name}")
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise ValueError(f"curve interval must satisfy a < b, got ({self.a}, {self.b})")

    @classmethod
    def from_sources(
        cls, x_src: str, y_src: str, z_src: str, a: float, b: float
    ) -> "Curve":
        t = ("t",)
        return cls(parse(x_src, t), parse(y_src, t), parse(z_src, t), float(a), float(b))

    def components(self) -> tuple[Expression, Expression, Expression]:
        return (self.x, self.y, self.z)

    def velocity(self) -> tuple[Expression, Expression, Expression]:
        return tuple(c.differentiate("t") for c in self.components())

    def acceleration(self) -> tuple[Expression, Expression, Expression]:
        return tuple(c.differentiate("t").differentiate("t") for c in self.components())

    def position_at(self, t: float) -> tuple[float, float, float]:
        return tuple(c.evaluate({"t": t}) for c in self.components())


def _warn_if_inexact(lagrangian: SeparableLagrangian) -> None:
    if lagrangian._exactness_max is None:
        report = exactness_residuals(lagrangian)
        lagrangian._exactness_max = report.max_residual
    if lagrangian._exactness_max > DEFAULT_TOLERANCES.exactness:
        warnings.warn(
            "Lagrangian violates the exactness conditions "
            f"(max residual {lagrangian._exactness_max:.3e}); Euler-Lagrange "
            "residuals will generally not vanish",
            stacklevel=3,
        )


def euler_lagrange_residual(
    lagrangian: SeparableLagrangian,
    curve: Curve,
    t: float,
    *,
    check_exactness: bool = True,
) -> np.ndarray:
    """The three Euler-Lagrange residual components along the curve at t.

    Component i is dL/dq_i - d/dt(dL/dq_i') with the time derivative
    expanded as dQ_i/dt + dQ_i/dq_i q_i', so only first derivatives of the
    curve enter.  A warning (not an error) is issued when the Lagrangian is
    not exact; the residual is still computed.
    """
    if not curve.a < t < curve.b:
        raise ValueError(f"t={t} outside the open curve interval ({curve.a}, {curve.b})")
    if check_exactness:
        _warn_if_inexact(lagrangian)
    pos = curve.position_at(t)
    vel = tuple(v.evaluate({"t": t}) for v in curve.velocity())
    p_bind = dict(zip(_P_VARS, (t,) + pos))
    out = np.empty(3)
    for i, (q, name) in enumerate(zip(lagrangian.q_terms(), _POSITIONS)):
        q_bind = {"t": t, name: pos[i]}
        dl_dq = lagrangian.partial("P", name).evaluate(p_bind) + lagrangian.partial(
            f"Q{i + 1}", name
        ).evaluate(q_bind) * vel[i]
        ddt = lagrangian.partial(f"Q{i + 1}", "t").evaluate(q_bind) + lagrangian.partial(
            f"Q{i + 1}", name
        ).evaluate(q_bind) * vel[i]
        out[i] = dl_dq - ddt
    return out


@dataclass(frozen=True)
class ElScan:
    """Max Euler-Lagrange residual over an interior sample of the interval."""

    max_abs: float
    t_at_max: float
    component_maxima: tuple[float, float, float]
    samples: int

    def to_json_dict(self) -> dict:
        return {
            "max_abs": self.max_abs,
            "t_at_max": self.t_at_max,
            "component_maxima": list(self.component_maxima),
            "samples": self.samples,
        }


def max_euler_lagrange_residual(
    lagrangian: SeparableLagrangian,
    curve: Curve,
    samples: int = 1000,
    *,
    check_exactness: bool = True,
) -> ElScan:
    """Vectorized residual scan over ``samples`` interior time points."""
    if samples < 1:
        raise ValueError("samples must be positive")
    if check_exactness:
        _warn_if_inexact(lagrangian)
    ts = np.linspace(curve.a, curve.b, samples + 2)[1:-1]
    pos = [
        np.broadcast_to(np.asarray(c.evaluate_array({"t": ts}), dtype=float), ts.shape)
        for c in curve.components()
    ]
    vel = [
        np.broadcast_to(np.asarray(v.evaluate_array({"t": ts}), dtype=float), ts.shape)
        for v in curve.velocity()
    ]
    p_bind = dict(zip(_P_VARS, [ts] + pos))
    comp_max = []
    worst_val = -1.0
    worst_t = float(ts[0])
    for i, (q, name) in enumerate(zip(lagrangian.q_terms(), _POSITIONS)):
        q_bind = {"t": ts, name: pos[i]}
        dp = lagrangian.partial("P", name).evaluate_array(p_bind)
        dq_dq = lagrangian.partial(f"Q{i + 1}", name).evaluate_array(q_bind)
        dq_dt = lagrangian.partial(f"Q{i + 1}", "t").evaluate_array(q_bind)
        residual = (dp + dq_dq * vel[i]) - (dq_dt + dq_dq * vel[i])
        residual = np.broadcast_to(np.asarray(residual, dtype=float), ts.shape)
        mags = np.abs(residual)
        idx = int(np.argmax(mags))
        comp_max.append(float(mags[idx]))
        if comp_max[-1] > worst_val:
            worst_val = comp_max[-1]
            worst_t = float(ts[idx])
    return ElScan(
        max_abs=max(comp_max),
        t_at_max=worst_t,
        component_maxima=tuple(comp_max),
        samples=samples,
    )


def _lagrangian_along_curve(lagrangian: SeparableLagrangian, curve: Curve):
    components = curve.components()
    velocity = curve.velocity()

    def integrand(ts: np.ndarray) -> np.ndarray:
        pos = [
            np.broadcast_to(np.asarray(c.evaluate_array({"t": ts}), dtype=float), ts.shape)
            for c in components
        ]
        vel = [
            np.broadcast_to(np.asarray(v.evaluate_array({"t": ts}), dtype=float), ts.shape)
            for v in velocity
        ]
        p_bind = dict(zip(_P_VARS, [ts] + pos))
        total = np.broadcast_to(
            np.asarray(lagrangian.P.evaluate_array(p_bind), dtype=float), ts.shape
        ).copy()
        for i, (q, name) in enumerate(zip(lagrangian.q_terms(), _POSITIONS)):
            q_vals = q.evaluate_array({"t": ts, name: pos[i]})
            total += np.broadcast_to(np.asarray(q_vals, dtype=float), ts.shape) * vel[i]
        return total

    return integrand


def action(lagrangian: SeparableLagrangian, curve: Curve, panels: int = 1024) -> float:
    """Simpson quadrature of L along the curve with the configured panels."""
    integrand = _lagrangian_along_curve(lagrangian, curve)
    return integrate_1d(integrand, curve.a, curve.b, panels, vectorized=True)


def action_richardson_delta(
    lagrangian: SeparableLagrangian, curve: Curve, panels: int = 1024
) -> float:
    """Change in the action estimate when the panel count doubles."""
    integrand = _lagrangian_along_curve(lagrangian, curve)
    return richardson_delta(integrand, curve.a, curve.b, panels, vectorized=True)


def endpoint_action(generators: GeneratorTriple, curve: Curve) -> float:
    """Action of a generator-built Lagrangian from curve endpoints alone.

    L is the total time derivative of F(t) = f(t,x(t)) + g(t,y(t)) +
    h(t,z(t)), so the action telescopes to F(b) - F(a).
    """

    def total(t: float) -> float:
        x, y, z = curve.position_at(t)
        return (
            generators.f.evaluate({"t": t, "x": x})
            + generators.g.evaluate({"t": t, "y": y})
            + generators.h.evaluate({"t": t, "z": z})
        )

    return total(curve.b) - total(curve.a)


@dataclass(frozen=True)
class PotentialFunction:
    """Potential u with du/dt = p and du/ds = q, anchored at a reference point.

    u(t, s) is realized by quadrature:
    u(t,s) = int_{t1}^{t} p(tau, s) dtau + int_{s1}^{s} q(t1, sigma) dsigma,
    so u(t1, s1) is exactly 0.
    """

    p: Expression
    q: Expression
    ref: tuple[float, float]
    panels: int = 256

    @property
    def t_var(self) -> str:
        return self.p.vars[0]

    @property
    def s_var(self) -> str:
        return self.p.vars[1]

    def _oriented(self, expr_fn, lo: float, hi: float) -> float:
        if hi == lo:
            return 0.0
        if hi > lo:
            return integrate_1d(expr_fn, lo, hi, self.panels, vectorized=True)
        return -integrate_1d(expr_fn, hi, lo, self.panels, vectorized=True)

    def __call__(self, t: float, s: float) -> float:
        t1, s1 = self.ref

        def p_of_tau(taus):
            vals = self.p.evaluate_array({self.t_var: taus, self.s_var: float(s)})
            return np.broadcast_to(np.asarray(vals, dtype=float), np.shape(taus))

        def q_of_sigma(sigmas):
            vals = self.q.evaluate_array({self.t_var: float(t1), self.s_var: sigmas})
            return np.broadcast_to(np.asarray(vals, dtype=float), np.shape(sigmas))

        return self._oriented(p_of_tau, t1, float(t)) + self._oriented(
            q_of_sigma, s1, float(s)
        )


def potential_from_exact_pair(
    p: Expression,
    q: Expression,
    ref: Sequence[float],
    *,
    check_box: Box | None = None,
    check_points: int = 9,
    panels: int = 256,
    tol: float | None = None,
) -> PotentialFunction:
    """Reconstruct the potential of an exact pair (p, q).

    Exactness dp/ds = dq/dt is verified on a sample box first; a violation
    raises with the worst-offending sample point named.
    """
    if len(p.vars) != 2 or tuple(p.vars) != tuple(q.vars):
        raise ValueError("p and q must share one (t, s) variable pair")
    t_var, s_var = p.vars
    tol = DEFAULT_TOLERANCES.exactness if tol is None else tol
    box = check_box if check_box is not None else Box.cube(-1.0, 1.0, 2)
    if box.dim != 2:
        raise ValueError("exactness check box must be 2-dimensional")
    grid = Grid(box, check_points)
    t_mesh, s_mesh = grid.meshes()
    bindings = {t_var: t_mesh, s_var: s_mesh}
    dp_ds = _dual_partial_on_arrays(p, bindings, s_var, t_mesh.shape)
    dq_dt = _dual_partial_on_arrays(q, bindings, t_var, t_mesh.shape)
    diff = np.abs(dp_ds - dq_dt)
    idx = np.unravel_index(int(np.argmax(diff)), diff.shape)
    worst = float(diff[idx])
    if not worst <= tol:
        raise ValueError(
            "pair is not exact: max |dp/ds - dq/dt| = "
            f"{worst:.3e} at ({t_var}, {s_var}) = "
            f"({float(t_mesh[idx])}, {float(s_mesh[idx])})"
        )
    t1, s1 = (float(v) for v in ref)
    return PotentialFunction(p=p, q=q, ref=(t1, s1), panels=panels)


@dataclass(frozen=True)
class KineticEnergy:
    """Kinetic energy as an expression of velocities (and optionally t, q)."""

    expr: Expression

    def __post_init__(self):
        extra = set(self.expr.vars) - set(_FULL_VARS)
        if extra:
            raise ValueError(f"kinetic energy uses unknown variables {sorted(extra)}")

    @classmethod
    def from_source(cls, source: str) -> "KineticEnergy":
        return cls(parse(source, _FULL_VARS))

    @classmethod
    def standard(cls) -> "KineticEnergy":
        return cls.from_source("(x'^2 + y'^2 + z'^2)/2")


@dataclass(frozen=True)
class VelocityDependenceReport:
    """Whether U = T - L depends on any velocity variable.

    A nonzero dU/dq_i' anywhere means U is not a classical
    position-dependent potential.  Each component records whether the
    kinetic term, the Lagrangian's Q term, or both contribute.
    """

    velocity_dependent: bool
    components: dict

    def to_json_dict(self) -> dict:
        return {
            "velocity_dependent": self.velocity_dependent,
            "components": self.components,
        }


def velocity_dependence_report(
    kinetic: KineticEnergy,
    lagrangian: SeparableLagrangian,
    *,
    samples: int = 64,
    seed: int = 20080,
    tol: float = 1e-10,
) -> VelocityDependenceReport:
    """Form U = T - L symbolically and probe dU/dq' at random sample points.

    Sampling is seeded and therefore deterministic; the witness records the
    sample point with the largest |dU/dq'|.
    """
    u_root = sub(kinetic.expr.with_vars(_FULL_VARS).root, lagrangian.full_expression().root)
    u = Expression(u_root, _FULL_VARS)
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(samples, len(_FULL_VARS)))
    components = {}
    any_dependent = False
    t_expr = kinetic.expr.with_vars(_FULL_VARS)
    for i, vel in enumerate(_VELOCITIES):
        du = u.differentiate(vel)
        dt_term = t_expr.differentiate(vel)
        q_expr = lagrangian.q_terms()[i]
        worst_val = 0.0
        worst_point: tuple[float, ...] = tuple(points[0])
        kinetic_term = False
        q_term = False
        for row in points:
            bind = dict(zip(_FULL_VARS, (float(v) for v in row)))
            val = du.evaluate(bind)
            if abs(val) > abs(worst_val):
                worst_val = val
                worst_point = tuple(float(v) for v in row)
            if abs(dt_term.evaluate(bind)) > tol:
                kinetic_term = True
            if abs(q_expr.evaluate({k: bind[k] for k in q_expr.vars})) > tol:
                q_term = True
        depends = abs(worst_val) > tol
        any_dependent = any_dependent or depends
        components[vel] = {
            "depends": depends,
            "kinetic_term": kinetic_term,
            "lagrangian_term": q_term,
            "witness_point": list(worst_point),
            "witness_value": float(worst_val),
        }
    return VelocityDependenceReport(
        velocity_dependent=any_dependent, components=components
    )
