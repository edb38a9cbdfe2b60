"""Expression ASTs over named real variables.

Grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' '-'? number)?
    base   := number | ident | '(' expr ')' | ident '(' expr ')'
    ident  := [a-z][a-z0-9']*

Built-in functions are ``exp``, ``ln``, ``sin``, ``cos`` and the flat
exponential step ``phi`` with ``phi(x) = exp(-1/x)`` for x > 0 and exactly
0 for x <= 0.  Derivatives of ``phi`` are again named functions (``phi'``,
``phi''``, ...; the identifier charset allows apostrophes), so symbolic
differentiation is closed over the grammar and exact on the flat branch:
every ``phi``-derivative evaluates to exactly 0.0 for x <= 0.

A single recursive evaluator serves four numeric backends: plain floats,
NumPy arrays (vectorized evaluation over grids), and first/second order
dual numbers for forward-mode derivatives.  Because dual arithmetic
performs the same float operations on its value channel, evaluating with a
zero-seeded dual reproduces plain evaluation bit for bit.

Expressions are immutable after construction; evaluation is pure and safe
to call concurrently.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Union

import numpy as np

from .errors import DomainError, ParseError, UnboundVariableError

__all__ = [
    "Expression",
    "Dual",
    "Dual2",
    "parse",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "func",
    "phi",
    "const",
    "variable",
    "Const",
    "Var",
]

_MACHINE_EPS = float(np.finfo(float).eps)
# exp underflows to exactly 0.0 below this; used to keep phi free of 0 * inf.
_EXP_UNDERFLOW = -745.0

_FUNCTION_NAMES = ("exp", "ln", "sin", "cos")
_PHI_RE = re.compile(r"phi'*\Z")
_IDENT_RE = re.compile(r"[a-z][a-z0-9']*\Z")


# ---------------------------------------------------------------------------
# dual numbers


class Dual:
    """First-order forward-mode number ``value + deriv * eps``.

    Channels may be floats or equally-shaped NumPy arrays, which gives
    vectorized directional derivatives for free.
    """

    __slots__ = ("value", "deriv")
    # Force NumPy to defer binary ops to Dual instead of object-broadcasting.
    __array_ufunc__ = None

    def __init__(self, value, deriv=0.0):
        self.value = value
        self.deriv = deriv

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r})"

    @staticmethod
    def _lift(other):
        if isinstance(other, Dual):
            return other
        if isinstance(other, Dual2):
            raise TypeError("cannot mix Dual and Dual2 operands")
        return Dual(other, 0.0)

    def __add__(self, other):
        o = self._lift(other)
        return Dual(self.value + o.value, self.deriv + o.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual(self.value - o.value, self.deriv - o.deriv)

    def __rsub__(self, other):
        o = self._lift(other)
        return Dual(o.value - self.value, o.deriv - self.deriv)

    def __mul__(self, other):
        o = self._lift(other)
        return Dual(self.value * o.value, self.value * o.deriv + self.deriv * o.value)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        v = self.value / o.value
        return Dual(v, (self.deriv - v * o.deriv) / o.value)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return Dual(-self.value, -self.deriv)


class Dual2:
    """Second-order forward-mode number carrying value, first, second derivative."""

    __slots__ = ("value", "d1", "d2")
    __array_ufunc__ = None

    def __init__(self, value, d1=0.0, d2=0.0):
        self.value = value
        self.d1 = d1
        self.d2 = d2

    def __repr__(self):
        return f"Dual2({self.value!r}, {self.d1!r}, {self.d2!r})"

    @staticmethod
    def _lift(other):
        if isinstance(other, Dual2):
            return other
        if isinstance(other, Dual):
            raise TypeError("cannot mix Dual and Dual2 operands")
        return Dual2(other, 0.0, 0.0)

    def __add__(self, other):
        o = self._lift(other)
        return Dual2(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual2(self.value - o.value, self.d1 - o.d1, self.d2 - o.d2)

    def __rsub__(self, other):
        o = self._lift(other)
        return Dual2(o.value - self.value, o.d1 - self.d1, o.d2 - self.d2)

    def __mul__(self, other):
        o = self._lift(other)
        return Dual2(
            self.value * o.value,
            self.d1 * o.value + self.value * o.d1,
            self.d2 * o.value + 2.0 * self.d1 * o.d1 + self.value * o.d2,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        w = self.value / o.value
        w1 = (self.d1 - w * o.d1) / o.value
        w2 = (self.d2 - 2.0 * w1 * o.d1 - w * o.d2) / o.value
        return Dual2(w, w1, w2)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return Dual2(-self.value, -self.d1, -self.d2)


# ---------------------------------------------------------------------------
# numeric helpers dispatching over float / ndarray / Dual / Dual2


def _check_denominator(v):
    if isinstance(v, (Dual, Dual2)):
        _check_denominator(v.value)
    elif not isinstance(v, np.ndarray) and v == 0:
        raise DomainError("division by zero")


def _exp(v):
    if isinstance(v, Dual):
        ev = _exp(v.value)
        return Dual(ev, ev * v.deriv)
    if isinstance(v, Dual2):
        ev = _exp(v.value)
        return Dual2(ev, ev * v.d1, ev * (v.d1 * v.d1) + ev * v.d2)
    if isinstance(v, np.ndarray):
        return np.exp(v)
    try:
        return math.exp(v)
    except OverflowError as exc:
        raise DomainError(f"overflow in exp({v!r})") from exc


def _ln(v):
    if isinstance(v, Dual):
        return Dual(_ln(v.value), v.deriv / v.value)
    if isinstance(v, Dual2):
        lv = _ln(v.value)
        w1 = v.d1 / v.value
        return Dual2(lv, w1, v.d2 / v.value - w1 * w1)
    if isinstance(v, np.ndarray):
        return np.log(v)
    if v <= 0.0:
        raise DomainError(f"ln of non-positive value {v!r}")
    return math.log(v)


def _sin(v):
    if isinstance(v, Dual):
        return Dual(_sin(v.value), _cos(v.value) * v.deriv)
    if isinstance(v, Dual2):
        s, c = _sin(v.value), _cos(v.value)
        return Dual2(s, c * v.d1, -s * (v.d1 * v.d1) + c * v.d2)
    if isinstance(v, np.ndarray):
        return np.sin(v)
    return math.sin(v)


def _cos(v):
    if isinstance(v, Dual):
        return Dual(_cos(v.value), -(_sin(v.value)) * v.deriv)
    if isinstance(v, Dual2):
        s, c = _sin(v.value), _cos(v.value)
        return Dual2(c, -s * v.d1, -c * (v.d1 * v.d1) - s * v.d2)
    if isinstance(v, np.ndarray):
        return np.cos(v)
    return math.cos(v)


def _pow(v, n: float):
    if isinstance(v, Dual):
        if n == 0.0:
            return Dual(_pow(v.value, 0.0), 0.0 * v.deriv)
        if n == 1.0:
            return v
        return Dual(_pow(v.value, n), n * _pow(v.value, n - 1.0) * v.deriv)
    if isinstance(v, Dual2):
        if n == 0.0:
            return Dual2(_pow(v.value, 0.0), 0.0 * v.d1, 0.0 * v.d2)
        if n == 1.0:
            return v
        p = _pow(v.value, n)
        p1 = n * _pow(v.value, n - 1.0)
        p2 = n * (n - 1.0) * _pow(v.value, n - 2.0) if n != 1.0 else 0.0
        return Dual2(p, p1 * v.d1, p2 * (v.d1 * v.d1) + p1 * v.d2)
    if isinstance(v, np.ndarray):
        return v**n
    if v < 0.0 and not float(n).is_integer():
        raise DomainError(f"negative base {v!r} with non-integer exponent {n!r}")
    try:
        return v**n
    except ZeroDivisionError as exc:
        raise DomainError(f"zero raised to negative exponent {n!r}") from exc
    except OverflowError as exc:
        raise DomainError(f"overflow in {v!r} ^ {n!r}") from exc


@lru_cache(maxsize=64)
def _phi_poly(order: int) -> tuple[float, ...]:
    """Ascending coefficients of p_k with d^k/dx^k phi(x) = exp(-1/x) p_k(1/x).

    Recurrence: p_0 = 1 and p_{k+1}(u) = u^2 (p_k(u) - p_k'(u)).
    """
    coeffs = [1.0]
    for _ in range(order):
        derived = [j * coeffs[j] for j in range(1, len(coeffs))] + [0.0]
        diff = [c - d for c, d in zip(coeffs, derived)]
        coeffs = [0.0, 0.0] + diff
    return tuple(coeffs)


def _polyval(coeffs: tuple[float, ...], u):
    # Horner, identical operation order for scalar and array arguments.
    acc = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * u + c
    return acc


def _phi_scalar(x: float, order: int) -> float:
    if x <= 0.0:
        return 0.0
    t = -1.0 / x
    if t < _EXP_UNDERFLOW:
        # exp underflows to 0 before the polynomial factor can overflow.
        return 0.0
    return math.exp(t) * _polyval(_phi_poly(order), 1.0 / x)


def _phi_array(x: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros(x.shape, dtype=float)
    pos = x > 0.0
    if np.any(pos):
        u = 1.0 / x[pos]
        safe = u <= -_EXP_UNDERFLOW
        vals = np.zeros(u.shape, dtype=float)
        if np.any(safe):
            us = u[safe]
            vals[safe] = np.exp(-us) * _polyval(_phi_poly(order), us)
        out[pos] = vals
    return out


def _phi(v, order: int):
    if isinstance(v, Dual):
        return Dual(_phi(v.value, order), _phi(v.value, order + 1) * v.deriv)
    if isinstance(v, Dual2):
        p0 = _phi(v.value, order)
        p1 = _phi(v.value, order + 1)
        p2 = _phi(v.value, order + 2)
        return Dual2(p0, p1 * v.d1, p2 * (v.d1 * v.d1) + p1 * v.d2)
    if isinstance(v, np.ndarray):
        return _phi_array(v, order)
    return _phi_scalar(float(v), order)


_FUNC_IMPL: dict[str, Callable] = {"exp": _exp, "ln": _ln, "sin": _sin, "cos": _cos}


# ---------------------------------------------------------------------------
# AST nodes


@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Const(Node):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite constant {self.value!r}")


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    operand: Node


@dataclass(frozen=True)
class Add(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Sub(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Mul(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Div(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: float


@dataclass(frozen=True)
class Call(Node):
    name: str  # exp | ln | sin | cos
    arg: Node


@dataclass(frozen=True)
class PhiCall(Node):
    order: int  # 0 is phi itself, k is its k-th derivative
    arg: Node


# Smart constructors fold constants and drop algebraic no-ops.  This is
# deliberately local folding only (0+u, 1*u, const op const, ...), enough to
# keep derivative trees compact without becoming a simplifier.  Folding
# 0 * u to 0 can drop a domain error hidden in u; derivative construction
# accepts that.


def const(value: float) -> Const:
    return Const(float(value))


def variable(name: str) -> Var:
    return Var(name)


def add(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        folded = a.value + b.value
        if math.isfinite(folded):
            return Const(folded)
    return Add(a, b)


def sub(a: Node, b: Node) -> Node:
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        folded = a.value - b.value
        if math.isfinite(folded):
            return Const(folded)
    return Sub(a, b)


def mul(a: Node, b: Node) -> Node:
    if isinstance(a, Const):
        if a.value == 0.0:
            return Const(0.0)
        if a.value == 1.0:
            return b
    if isinstance(b, Const):
        if b.value == 0.0:
            return Const(0.0)
        if b.value == 1.0:
            return a
    if isinstance(a, Const) and isinstance(b, Const):
        folded = a.value * b.value
        if math.isfinite(folded):
            return Const(folded)
    return Mul(a, b)


def div(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and a.value == 0.0 and not (isinstance(b, Const) and b.value == 0.0):
        return Const(0.0)
    if isinstance(b, Const) and b.value == 1.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        folded = a.value / b.value
        if math.isfinite(folded):
            return Const(folded)
    return Div(a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def power(base: Node, exponent: float) -> Node:
    exponent = float(exponent)
    if exponent == 0.0:
        return Const(1.0)
    if exponent == 1.0:
        return base
    if isinstance(base, Const):
        try:
            return Const(_pow(base.value, exponent))
        except (DomainError, ValueError):
            pass
    return Pow(base, exponent)


def func(name: str, arg: Node) -> Node:
    if name not in _FUNC_IMPL:
        raise ValueError(f"unknown function {name!r}")
    return Call(name, arg)


def phi(arg: Node, order: int = 0) -> Node:
    if order < 0:
        raise ValueError("phi derivative order must be >= 0")
    return PhiCall(order, arg)


# ---------------------------------------------------------------------------
# evaluation


def _eval(node: Node, env: Mapping[str, object]):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Add):
        return _eval(node.left, env) + _eval(node.right, env)
    if isinstance(node, Sub):
        return _eval(node.left, env) - _eval(node.right, env)
    if isinstance(node, Mul):
        return _eval(node.left, env) * _eval(node.right, env)
    if isinstance(node, Div):
        num = _eval(node.left, env)
        den = _eval(node.right, env)
        _check_denominator(den)
        return num / den
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Pow):
        return _pow(_eval(node.base, env), node.exponent)
    if isinstance(node, Call):
        return _FUNC_IMPL[node.name](_eval(node.arg, env))
    if isinstance(node, PhiCall):
        return _phi(_eval(node.arg, env), node.order)
    raise TypeError(f"unknown node type {type(node).__name__}")


def _free_vars(node: Node, out: set[str]) -> None:
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, (Add, Sub, Mul, Div)):
        _free_vars(node.left, out)
        _free_vars(node.right, out)
    elif isinstance(node, Neg):
        _free_vars(node.operand, out)
    elif isinstance(node, Pow):
        _free_vars(node.base, out)
    elif isinstance(node, (Call, PhiCall)):
        _free_vars(node.arg, out)


# ---------------------------------------------------------------------------
# symbolic differentiation


def _diff(node: Node, var: str) -> Node:
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0) if node.name == var else Const(0.0)
    if isinstance(node, Add):
        return add(_diff(node.left, var), _diff(node.right, var))
    if isinstance(node, Sub):
        return sub(_diff(node.left, var), _diff(node.right, var))
    if isinstance(node, Mul):
        return add(
            mul(_diff(node.left, var), node.right),
            mul(node.left, _diff(node.right, var)),
        )
    if isinstance(node, Div):
        du = _diff(node.left, var)
        dv = _diff(node.right, var)
        return div(
            sub(mul(du, node.right), mul(node.left, dv)),
            power(node.right, 2.0),
        )
    if isinstance(node, Neg):
        return neg(_diff(node.operand, var))
    if isinstance(node, Pow):
        inner = _diff(node.base, var)
        return mul(mul(Const(node.exponent), power(node.base, node.exponent - 1.0)), inner)
    if isinstance(node, Call):
        inner = _diff(node.arg, var)
        if node.name == "exp":
            return mul(Call("exp", node.arg), inner)
        if node.name == "ln":
            return div(inner, node.arg)
        if node.name == "sin":
            return mul(Call("cos", node.arg), inner)
        if node.name == "cos":
            return neg(mul(Call("sin", node.arg), inner))
    if isinstance(node, PhiCall):
        return mul(PhiCall(node.order + 1, node.arg), _diff(node.arg, var))
    raise TypeError(f"unknown node type {type(node).__name__}")


# ---------------------------------------------------------------------------
# printing

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_POW = 3
_PREC_ATOM = 4


def _precedence(node: Node) -> int:
    if isinstance(node, (Add, Sub)):
        return _PREC_ADD
    if isinstance(node, (Mul, Div, Neg)):
        return _PREC_MUL
    if isinstance(node, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _format_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _wrap(node: Node, min_prec: int) -> str:
    src = _to_source(node)
    if _precedence(node) < min_prec:
        return f"({src})"
    return src


def _to_source(node: Node) -> str:
    # Right operands of -, / and + are parenthesized at equal precedence so
    # print-then-parse rebuilds the identical association.
    if isinstance(node, Const):
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Add):
        return f"{_wrap(node.left, _PREC_ADD)} + {_wrap(node.right, _PREC_ADD + 1)}"
    if isinstance(node, Sub):
        return f"{_wrap(node.left, _PREC_ADD)} - {_wrap(node.right, _PREC_ADD + 1)}"
    if isinstance(node, Mul):
        return f"{_wrap(node.left, _PREC_MUL)}*{_wrap(node.right, _PREC_MUL + 1)}"
    if isinstance(node, Div):
        return f"{_wrap(node.left, _PREC_MUL)}/{_wrap(node.right, _PREC_MUL + 1)}"
    if isinstance(node, Neg):
        return f"-{_wrap(node.operand, _PREC_MUL)}"
    if isinstance(node, Pow):
        base = _to_source(node.base)
        if _precedence(node.base) < _PREC_ATOM or (
            isinstance(node.base, Const) and node.base.value < 0
        ):
            base = f"({base})"
        return f"{base}^{_format_number(node.exponent)}"
    if isinstance(node, Call):
        return f"{node.name}({_to_source(node.arg)})"
    if isinstance(node, PhiCall):
        return f"phi{chr(39) * node.order}({_to_source(node.arg)})"
    raise TypeError(f"unknown node type {type(node).__name__}")


# ---------------------------------------------------------------------------
# the public Expression wrapper


@dataclass(frozen=True)
class Expression:
    """An immutable parsed expression with a declared, ordered variable list.

    ``vars`` lists the declared variables; the free variables actually used
    are always a subset.  Declared-but-unused variables matter for gradient
    style operations where a partial derivative in an absent variable is
    legitimately zero.
    """

    root: Node
    vars: tuple[str, ...]

    def __post_init__(self):
        missing = self.free_vars() - set(self.vars)
        if missing:
            raise ValueError(f"free variables {sorted(missing)} not declared")

    def free_vars(self) -> set[str]:
        out: set[str] = set()
        _free_vars(self.root, out)
        return out

    def _check_bindings(self, bindings: Mapping[str, object]) -> None:
        for name in self.free_vars():
            if name not in bindings:
                raise UnboundVariableError(f"unbound variable {name!r}")

    def evaluate(self, bindings: Mapping[str, float]) -> float:
        """Strict scalar evaluation; any non-finite value raises DomainError."""
        self._check_bindings(bindings)
        env = {k: float(v) for k, v in bindings.items()}
        try:
            out = float(_eval(self.root, env))
        except ZeroDivisionError as exc:  # backstop, normally pre-checked
            raise DomainError("division by zero") from exc
        if not math.isfinite(out):
            raise DomainError(f"non-finite result {out!r}")
        return out

    def evaluate_dual(self, bindings: Mapping[str, Union[Dual, float]]) -> Dual:
        """Forward-mode evaluation; unseeded bindings get a zero derivative."""
        self._check_bindings(bindings)
        env = {
            k: v if isinstance(v, Dual) else Dual(v, 0.0) for k, v in bindings.items()
        }
        with np.errstate(all="ignore"):
            out = _eval(self.root, env)
        if not isinstance(out, Dual):
            out = Dual(out, 0.0)
        return out

    def evaluate_dual2(self, bindings: Mapping[str, Union[Dual2, float]]) -> Dual2:
        self._check_bindings(bindings)
        env = {
            k: v if isinstance(v, Dual2) else Dual2(v, 0.0, 0.0)
            for k, v in bindings.items()
        }
        with np.errstate(all="ignore"):
            out = _eval(self.root, env)
        if not isinstance(out, Dual2):
            out = Dual2(out, 0.0, 0.0)
        return out

    def evaluate_array(self, bindings: Mapping[str, object]):
        """Vectorized evaluation over NumPy arrays.

        Domain violations produce NaN/inf in the result instead of raising;
        callers decide how to treat non-finite entries.  The result
        broadcasts to the common shape of the bound arrays (a plain scalar
        comes back for constant expressions).
        """
        self._check_bindings(bindings)
        env = {
            k: v if isinstance(v, np.ndarray) else float(v)
            for k, v in bindings.items()
        }
        with np.errstate(all="ignore"):
            return _eval(self.root, env)

    def derivative_at(self, var: str, bindings: Mapping[str, float]) -> float:
        """Partial derivative via a dual seed at a point."""
        if var not in self.vars:
            raise ValueError(f"{var!r} is not a declared variable")
        env = {
            k: Dual(float(v), 1.0 if k == var else 0.0) for k, v in bindings.items()
        }
        return self.evaluate_dual(env).deriv

    def differentiate(self, var: str) -> "Expression":
        """Symbolic partial derivative with the same declared variables."""
        if var not in self.vars:
            raise ValueError(f"{var!r} is not a declared variable")
        return Expression(_diff(self.root, var), self.vars)

    def with_vars(self, names: Iterable[str]) -> "Expression":
        """Re-declare the variable list (a superset of the free variables)."""
        return Expression(self.root, tuple(names))

    def to_source(self) -> str:
        return _to_source(self.root)

    def __str__(self) -> str:
        return self.to_source()


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[a-z][a-z0-9']*)"
    r"|(?P<op>[-+*/^()])"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos + 1)
        pos = m.end()
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), m.start() + 1))
    tokens.append(("eof", "", len(source) + 1))
    return tokens


class _Parser:
    def __init__(self, source: str, allowed_vars: tuple[str, ...]):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.allowed = allowed_vars

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, symbol: str) -> None:
        kind, text, at = self.peek()
        if kind != "op" or text != symbol:
            raise ParseError(f"expected {symbol!r}, found {text or 'end of input'!r}", at)
        self.advance()

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.parse_term()
                node = add(node, rhs) if text == "+" else sub(node, rhs)
            else:
                return node

    def parse_term(self) -> Node:
        node = self.parse_factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.parse_factor()
                node = mul(node, rhs) if text == "*" else div(node, rhs)
            else:
                return node

    def parse_factor(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return neg(self.parse_factor())
        base = self.parse_base()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            sign = 1.0
            kind, text, at = self.peek()
            if kind == "op" and text == "-":
                self.advance()
                sign = -1.0
                kind, text, at = self.peek()
            if kind != "num":
                raise ParseError("exponent must be a numeric constant", at)
            self.advance()
            return power(base, sign * float(text))
        return base

    def parse_base(self) -> Node:
        kind, text, at = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "op" and text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            nxt_kind, nxt_text, _ = self.peek()
            if nxt_kind == "op" and nxt_text == "(":
                self.advance()
                arg = self.parse_expr()
                self.expect_op(")")
                if text in _FUNC_IMPL:
                    return Call(text, arg)
                if _PHI_RE.match(text):
                    return PhiCall(text.count("'"), arg)
                raise ParseError(f"unknown function {text!r}", at)
            if text not in self.allowed:
                raise ParseError(f"unknown variable {text!r}", at)
            return Var(text)
        raise ParseError(f"unexpected token {text or 'end of input'!r}", at)


def parse(source: str, allowed_vars: Iterable[str]) -> Expression:
    """Parse ``source`` into an Expression over the declared variables.

    Raises ParseError (with a 1-based position) for syntax problems,
    unknown variables and unknown functions.
    """
    names = []
    for name in allowed_vars:
        if not _IDENT_RE.match(name):
            raise ValueError(f"invalid variable name {name!r}")
        if name in _FUNC_IMPL or _PHI_RE.match(name):
            raise ValueError(f"variable name {name!r} collides with a built-in function")
        if name not in names:
            names.append(name)
    parser = _Parser(source, tuple(names))
    root = parser.parse_expr()
    kind, text, at = parser.peek()
    if kind != "eof":
        raise ParseError(f"unexpected trailing input {text!r}", at)
    return Expression(root, tuple(names))
