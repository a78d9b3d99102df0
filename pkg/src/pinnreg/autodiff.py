"""Scalar automatic differentiation.

Three number types share one primitive set:

* :class:`Dual` carries a first directional derivative (forward mode).
* :class:`HyperDual` carries two first-order seeds and their cross term,
  which gives exact second directional derivatives.
* :class:`Var` records operations on a :class:`Tape` for reverse mode.

The module-level functions (:func:`sin`, :func:`cos`, ...) accept plain
floats as well as any of the three types, so code written against this
module works unchanged on all of them.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence


class DomainError(ArithmeticError):
    """Raised when a primitive is evaluated outside its domain.

    ``node`` names the offending operation (and, for tape variables, the
    node index) so failures inside long pipelines can be traced.
    """

    def __init__(self, op: str, value: float, node=None):
        self.op = op
        self.value = value
        self.node = node
        where = f" at node {node}" if node is not None else ""
        super().__init__(f"{op} undefined for argument {value!r}{where}")


def _check_tan(x: float, node=None) -> None:
    # odd multiples of pi/2, up to rounding of the float argument
    if abs(math.cos(x)) < 1e-15:
        raise DomainError("tan", x, node)


def _check_pow(base: float, expo: float, node=None) -> None:
    if base < 0.0 and not float(expo).is_integer():
        raise DomainError("pow", base, node)
    if base == 0.0 and expo < 1.0 and expo != 0.0:
        # value or slope unbounded at the origin
        raise DomainError("pow", base, node)


def _check_div(den: float, node=None) -> None:
    if den == 0.0:
        raise DomainError("div", den, node)


# ---------------------------------------------------------------------------
# scalar local rules shared by every number type: f, f', f''
# ---------------------------------------------------------------------------

def _rule_sin(x):
    s, c = math.sin(x), math.cos(x)
    return s, c, -s


def _rule_cos(x):
    s, c = math.sin(x), math.cos(x)
    return c, -s, -c


def _rule_tan(x):
    _check_tan(x)
    t = math.tan(x)
    d = 1.0 + t * t
    return t, d, 2.0 * t * d


def _rule_atan(x):
    d = 1.0 / (1.0 + x * x)
    return math.atan(x), d, -2.0 * x * d * d


def _rule_exp(x):
    e = math.exp(x)
    return e, e, e


def _rule_sqrt(x):
    if x < 0.0:
        raise DomainError("sqrt", x)
    r = math.sqrt(x)
    if r == 0.0:
        # derivative unbounded at 0; only the value is meaningful
        return 0.0, math.inf, -math.inf
    return r, 0.5 / r, -0.25 / (r * x)


def _rule_tanh(x):
    t = math.tanh(x)
    d = 1.0 - t * t
    return t, d, -2.0 * t * d


def _rule_abs(x):
    # derivative 0 at the kink
    if x > 0.0:
        return x, 1.0, 0.0
    if x < 0.0:
        return -x, -1.0, 0.0
    return 0.0, 0.0, 0.0


_RULES = {
    "sin": _rule_sin,
    "cos": _rule_cos,
    "tan": _rule_tan,
    "atan": _rule_atan,
    "exp": _rule_exp,
    "sqrt": _rule_sqrt,
    "tanh": _rule_tanh,
    "abs": _rule_abs,
}


# ---------------------------------------------------------------------------
# forward mode
# ---------------------------------------------------------------------------

class Dual:
    """Value plus one directional derivative."""

    __slots__ = ("value", "deriv")

    def __init__(self, value: float, deriv: float = 0.0):
        self.value = float(value)
        self.deriv = float(deriv)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r})"

    @staticmethod
    def _lift(x) -> "Dual":
        return x if isinstance(x, Dual) else Dual(x, 0.0)

    def _unary(self, f, d1, _d2):
        return Dual(f, d1 * self.deriv)

    def __add__(self, o):
        o = Dual._lift(o)
        return Dual(self.value + o.value, self.deriv + o.deriv)

    __radd__ = __add__

    def __sub__(self, o):
        o = Dual._lift(o)
        return Dual(self.value - o.value, self.deriv - o.deriv)

    def __rsub__(self, o):
        return Dual._lift(o) - self

    def __mul__(self, o):
        o = Dual._lift(o)
        return Dual(self.value * o.value, self.deriv * o.value + self.value * o.deriv)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = Dual._lift(o)
        _check_div(o.value)
        q = self.value / o.value
        return Dual(q, (self.deriv - q * o.deriv) / o.value)

    def __rtruediv__(self, o):
        return Dual._lift(o) / self

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("only real exponents are supported")
        _check_pow(self.value, p)
        if p == 0:
            return Dual(1.0, 0.0)
        v = self.value ** p
        return Dual(v, p * self.value ** (p - 1) * self.deriv)

    # comparisons act on the value so branching code works unchanged
    def __lt__(self, o):
        return self.value < _value(o)

    def __le__(self, o):
        return self.value <= _value(o)

    def __gt__(self, o):
        return self.value > _value(o)

    def __ge__(self, o):
        return self.value >= _value(o)

    def __float__(self):
        return self.value


class HyperDual:
    """Value, two first-order seeds and their mixed second derivative.

    Seeding both directions with the same vector ``v`` gives ``d12 = vᵀ H v``.
    With ``d2 = 0`` everywhere the type reduces to :class:`Dual`.
    """

    __slots__ = ("value", "d1", "d2", "d12")

    def __init__(self, value: float, d1: float = 0.0, d2: float = 0.0, d12: float = 0.0):
        self.value = float(value)
        self.d1 = float(d1)
        self.d2 = float(d2)
        self.d12 = float(d12)

    def __repr__(self):
        return f"HyperDual({self.value!r}, {self.d1!r}, {self.d2!r}, {self.d12!r})"

    @staticmethod
    def _lift(x) -> "HyperDual":
        return x if isinstance(x, HyperDual) else HyperDual(x)

    def _unary(self, f, d1, d2):
        return HyperDual(
            f,
            d1 * self.d1,
            d1 * self.d2,
            d1 * self.d12 + d2 * self.d1 * self.d2,
        )

    def __add__(self, o):
        o = HyperDual._lift(o)
        return HyperDual(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2, self.d12 + o.d12)

    __radd__ = __add__

    def __sub__(self, o):
        o = HyperDual._lift(o)
        return HyperDual(self.value - o.value, self.d1 - o.d1, self.d2 - o.d2, self.d12 - o.d12)

    def __rsub__(self, o):
        return HyperDual._lift(o) - self

    def __mul__(self, o):
        o = HyperDual._lift(o)
        return HyperDual(
            self.value * o.value,
            self.d1 * o.value + self.value * o.d1,
            self.d2 * o.value + self.value * o.d2,
            self.d12 * o.value + self.d1 * o.d2 + self.d2 * o.d1 + self.value * o.d12,
        )

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = HyperDual._lift(o)
        _check_div(o.value)
        inv = 1.0 / o.value
        return self * HyperDual(o.value, o.d1, o.d2, o.d12)._unary(inv, -inv * inv, 2.0 * inv ** 3)

    def __rtruediv__(self, o):
        return HyperDual._lift(o) / self

    def __neg__(self):
        return HyperDual(-self.value, -self.d1, -self.d2, -self.d12)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, HyperDual):
            raise TypeError("only real exponents are supported")
        _check_pow(self.value, p)
        if p == 0:
            return HyperDual(1.0)
        x = self.value
        if p == 1:
            return self
        return self._unary(x ** p, p * x ** (p - 1), p * (p - 1) * x ** (p - 2))

    def __lt__(self, o):
        return self.value < _value(o)

    def __le__(self, o):
        return self.value <= _value(o)

    def __gt__(self, o):
        return self.value > _value(o)

    def __ge__(self, o):
        return self.value >= _value(o)

    def __float__(self):
        return self.value


# ---------------------------------------------------------------------------
# reverse mode
# ---------------------------------------------------------------------------

class Tape:
    """Append-only record of scalar operations.

    Each node stores its parents and the local partial derivatives with
    respect to them. Parents always precede children, so one reverse sweep
    over the node list accumulates adjoints for every leaf.
    """

    def __init__(self):
        self.ops: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []
        self.values: list[float] = []

    def __len__(self):
        return len(self.values)

    def _push(self, op, value, parents=(), partials=()):
        self.ops.append(op)
        self.values.append(value)
        self.parents.append(parents)
        self.partials.append(partials)
        return Var(self, len(self.values) - 1)

    def variable(self, value: float) -> "Var":
        return self._push("leaf", float(value))

    def backward(self, out: "Var") -> list[float]:
        """Adjoints of ``out`` with respect to every node on the tape."""
        if out.tape is not self:
            raise ValueError("output belongs to a different tape")
        adj = [0.0] * len(self.values)
        adj[out.index] = 1.0
        parents, partials = self.parents, self.partials
        for i in range(out.index, -1, -1):
            a = adj[i]
            if a == 0.0:
                continue
            for j, d in zip(parents[i], partials[i]):
                adj[j] += a * d
        return adj


class Var:
    """A scalar living on a :class:`Tape`."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> float:
        return self.tape.values[self.index]

    def __repr__(self):
        return f"Var(#{self.index}, {self.value!r})"

    def _unary(self, f, d1, _d2, op="unary"):
        return self.tape._push(op, f, (self.index,), (d1,))

    def _binary(self, o, op):
        t = self.tape
        if isinstance(o, Var):
            a, b = self.value, o.value
            if op == "add":
                return t._push(op, a + b, (self.index, o.index), (1.0, 1.0))
            if op == "sub":
                return t._push(op, a - b, (self.index, o.index), (1.0, -1.0))
            if op == "mul":
                return t._push(op, a * b, (self.index, o.index), (b, a))
            if op == "div":
                _check_div(b, o.index)
                q = a / b
                return t._push(op, q, (self.index, o.index), (1.0 / b, -q / b))
        c = float(o)
        a = self.value
        if op == "add":
            return t._push(op, a + c, (self.index,), (1.0,))
        if op == "sub":
            return t._push(op, a - c, (self.index,), (1.0,))
        if op == "mul":
            return t._push(op, a * c, (self.index,), (c,))
        if op == "div":
            _check_div(c, self.index)
            return t._push(op, a / c, (self.index,), (1.0 / c,))
        raise ValueError(op)

    def __add__(self, o):
        return self._binary(o, "add")

    __radd__ = __add__

    def __sub__(self, o):
        return self._binary(o, "sub")

    def __rsub__(self, o):
        return (-self)._binary(o, "add")

    def __mul__(self, o):
        return self._binary(o, "mul")

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self._binary(o, "div")

    def __rtruediv__(self, o):
        a = self.value
        _check_div(a, self.index)
        c = float(o)
        return self.tape._push("rdiv", c / a, (self.index,), (-c / (a * a),))

    def __neg__(self):
        return self.tape._push("neg", -self.value, (self.index,), (-1.0,))

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Var):
            raise TypeError("only real exponents are supported")
        x = self.value
        _check_pow(x, p, self.index)
        if p == 0:
            return self.tape._push("pow", 1.0, (self.index,), (0.0,))
        return self.tape._push("pow", x ** p, (self.index,), (p * x ** (p - 1),))

    def __lt__(self, o):
        return self.value < _value(o)

    def __le__(self, o):
        return self.value <= _value(o)

    def __gt__(self, o):
        return self.value > _value(o)

    def __ge__(self, o):
        return self.value >= _value(o)

    def __float__(self):
        return self.value


_AD_TYPES = (Dual, HyperDual, Var)


def _value(x) -> float:
    return x.value if isinstance(x, _AD_TYPES) else float(x)


def _apply(name: str, x):
    rule = _RULES[name]
    if isinstance(x, _AD_TYPES):
        try:
            f, d1, d2 = rule(x.value)
        except DomainError as exc:
            node = x.index if isinstance(x, Var) else None
            raise DomainError(exc.op, exc.value, node) from None
        if isinstance(x, Var):
            return x._unary(f, d1, d2, name)
        return x._unary(f, d1, d2)
    return rule(float(x))[0]


def sin(x):
    return _apply("sin", x)


def cos(x):
    return _apply("cos", x)


def tan(x):
    return _apply("tan", x)


def atan(x):
    return _apply("atan", x)


def exp(x):
    return _apply("exp", x)


def sqrt(x):
    return _apply("sqrt", x)


def tanh(x):
    return _apply("tanh", x)


def abs(x):  # noqa: A001 - mirrors numpy/torch naming
    return _apply("abs", x)


def maximum(x, y):
    """Elementwise max; at a tie the first argument wins (zero slope for a constant)."""
    return x if _value(x) >= _value(y) else y


def where(cond, a, b):
    return a if cond else b


# ---------------------------------------------------------------------------
# array-valued second-order jets
# ---------------------------------------------------------------------------

class Jet:
    """Second-order Taylor coefficients of an array along a curve ``x(t)``.

    ``x`` is the value, ``dx`` the first and ``ddx`` the second time
    derivative. Arrays may be numpy or torch; only linear maps, bias
    shifts and ``tanh`` are needed to push a jet through a dense network.
    Seeding ``dx = v, ddx = a`` gives ``Df·v`` and ``vᵀD²f v + Df·a``.
    """

    __slots__ = ("x", "dx", "ddx")

    def __init__(self, x, dx, ddx):
        self.x = x
        self.dx = dx
        self.ddx = ddx

    def linear(self, W, b=None):
        """Apply ``y = x Wᵀ + b`` row-wise."""
        Wt = W.T
        y = self.x @ Wt
        if b is not None:
            y = y + b
        return Jet(y, self.dx @ Wt, self.ddx @ Wt)

    def tanh(self, xp):
        y = xp.tanh(self.x)
        s = 1.0 - y * y
        return Jet(y, s * self.dx, s * self.ddx - 2.0 * y * s * self.dx * self.dx)

    def __add__(self, o):
        return Jet(self.x + o.x, self.dx + o.dx, self.ddx + o.ddx)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def reverse_gradient(f: Callable, x: Sequence[float]) -> list[float]:
    """Gradient of scalar ``f`` at ``x`` by one reverse sweep."""
    tape = Tape()
    leaves = [tape.variable(xi) for xi in x]
    out = f(leaves)
    if not isinstance(out, Var):
        # f did not depend on its inputs
        return [0.0] * len(leaves)
    adj = tape.backward(out)
    return [adj[v.index] for v in leaves]


def directional(f: Callable, x: Sequence[float], v: Sequence[float]):
    """Return ``(f(x), Df(x)·v)``; ``f`` may return a scalar or a sequence."""
    out = f([Dual(xi, vi) for xi, vi in zip(x, v)])
    if isinstance(out, (list, tuple)):
        return [_value(o) for o in out], [_deriv(o) for o in out]
    return _value(out), _deriv(out)


def second_directional(f: Callable, x: Sequence[float], v: Sequence[float]):
    """Return ``(f(x), Df·v, vᵀ D²f v)`` via hyper-dual numbers seeded with v twice."""
    out = f([HyperDual(xi, vi, vi, 0.0) for xi, vi in zip(x, v)])

    def split(o):
        if isinstance(o, HyperDual):
            return o.value, o.d1, o.d12
        return float(o), 0.0, 0.0

    if isinstance(out, (list, tuple)):
        parts = [split(o) for o in out]
        return [p[0] for p in parts], [p[1] for p in parts], [p[2] for p in parts]
    return split(out)


def _deriv(o) -> float:
    return o.deriv if isinstance(o, Dual) else 0.0
