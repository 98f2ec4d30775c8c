"""Closed-form expressions in one variable ``x`` with named parameters.

Expressions are immutable trees. They are parsed from text, printed back in
a form that re-parses to the same tree, evaluated on floats or numpy arrays,
and differentiated symbolically.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := base ('^' factor)?
    base   := number | ident | ident '(' expr ')' | '(' expr ')'

Reserved identifiers are ``x``, ``pi`` and ``e``; the functions are
``sin cos tan cot exp log sqrt abs``. Any other identifier is a parameter.
Unary minus binds looser than ``^``, so ``-x^2`` is ``-(x^2)``.

Only constant folding is done: operations whose operands are all numeric
literals are evaluated, and the neutral elements ``0`` and ``1`` are
dropped from sums and products.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .errors import (
    DomainError,
    ExprSyntaxError,
    UnboundParameterError,
    UnknownFunctionError,
)

FUNCTIONS = ("sin", "cos", "tan", "cot", "exp", "log", "sqrt", "abs")
CONSTANTS = {"pi": math.pi, "e": math.e}
RESERVED = {"x", *CONSTANTS, *FUNCTIONS}

ParamBinding = Mapping[str, float]


class Expr:
    """Base node. Subclasses are frozen dataclasses, so ``==`` is structural."""

    def __str__(self):
        return to_string(self)

    def __call__(self, x, binding: ParamBinding | None = None):
        return evaluate(self, x, binding)

    @cached_property
    def _fn(self) -> Callable:
        return _compile(self)

    @cached_property
    def params(self) -> frozenset[str]:
        """Names of the free parameters."""
        return frozenset(_params(self))

    @cached_property
    def has_x(self) -> bool:
        return _has_x(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Const(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Var(Expr):
    pass


@dataclass(frozen=True, eq=True)
class Param(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str  # "neg" or a function name
    arg: Expr


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


X = Var()
ZERO = Num(0.0)
ONE = Num(1.0)
TWO = Num(2.0)


def _is_num(e, value=None):
    return isinstance(e, Num) and (value is None or e.value == value)


# ---------------------------------------------------------------------------
# smart constructors (constant folding only)


def num(value) -> Num:
    return Num(float(value))


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    return Unary("neg", a)


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise UnknownFunctionError(f"unknown function {name!r}", 0)
    node = Unary(name, a)
    if isinstance(a, Num):
        try:
            return Num(float(evaluate(node, 0.0)))
        except DomainError:
            return node
    return node


def add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 1.0):
        return a
    if _is_num(a, 0.0) and not _is_num(b, 0.0):
        return ZERO
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    return Binary("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return ONE
    node = Binary("^", a, b)
    if isinstance(a, Num) and isinstance(b, Num):
        try:
            return Num(float(evaluate(node, 0.0)))
        except DomainError:
            return node
    return node


_BINARY = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            offset = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {source[offset]!r}", offset)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, offset = self.take()
        if text != value or kind != "op":
            found = text or "end of input"
            raise ExprSyntaxError(f"expected {value!r}, found {found!r}", offset)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", offset)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = _BINARY[op](e, self.term())
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = _BINARY[op](e, self.factor())
        return e

    def factor(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return neg(self.factor())
        base = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return power(base, self.factor())
        return base

    def base(self):
        kind, text, offset = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function {text!r}", offset)
                self.take()
                arg = self.expr()
                self.expect(")")
                return func(text, arg)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"function {text!r} needs an argument", offset)
            if text == "x":
                return X
            if text in CONSTANTS:
                return Const(text)
            return Param(text)
        if (kind, text) == ("op", "("):
            e = self.expr()
            self.expect(")")
            return e
        found = text or "end of input"
        raise ExprSyntaxError(f"unexpected token {found!r}", offset)


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    >>> str(parse("4*lam*(1-lam)/(1-x^2)^2"))
    '4.0 * lam * (1.0 - lam) / (1.0 - x ^ 2.0) ^ 2.0'
    """
    return _Parser(source).parse()


def as_expr(e) -> Expr:
    """Accept an Expr, a source string, or a number."""
    if isinstance(e, Expr):
        return e
    if isinstance(e, (int, float)):
        return num(e)
    return parse(str(e))


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC["neg"]
    return 5


def _wrap(e: Expr, needs: bool) -> str:
    s = to_string(e)
    return f"({s})" if needs else s


def to_string(e: Expr) -> str:
    if isinstance(e, Num):
        text = repr(e.value)
        return f"({text})" if text.startswith("-") else text
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return "-" + _wrap(e.arg, _prec(e.arg) <= _PREC["neg"])
        return f"{e.op}({to_string(e.arg)})"
    p = _PREC[e.op]
    if e.op == "^":
        left = _wrap(e.left, _prec(e.left) <= p)
        right = _wrap(e.right, _prec(e.right) < p)
    else:
        left = _wrap(e.left, _prec(e.left) < p)
        # left-associative: equal precedence on the right needs parentheses
        right = _wrap(e.right, _prec(e.right) <= p)
    return f"{left} {e.op} {right}"


# ---------------------------------------------------------------------------
# evaluation


def _params(e):
    if isinstance(e, Param):
        yield e.name
    elif isinstance(e, Unary):
        yield from _params(e.arg)
    elif isinstance(e, Binary):
        yield from _params(e.left)
        yield from _params(e.right)


def _has_x(e) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Unary):
        return e.arg.has_x
    if isinstance(e, Binary):
        return e.left.has_x or e.right.has_x
    return False


def _check(mask, what):
    if np.any(mask):
        raise DomainError(what)


def _log(a):
    _check(a <= 0, "log of a nonpositive number")
    return np.log(a)


def _sqrt(a):
    _check(a < 0, "sqrt of a negative number")
    return np.sqrt(a)


def _tan(a):
    c = np.cos(a)
    _check(c == 0, "tan at a pole")
    return np.sin(a) / c


def _cot(a):
    s = np.sin(a)
    _check(s == 0, "cot at a pole")
    return np.cos(a) / s


def _div(a, b):
    _check(b == 0, "division by zero")
    return a / b


def _pow(a, b):
    _check((a == 0) & (b < 0), "zero raised to a negative power")
    _check((a < 0) & (b != np.round(b)), "negative base with non-integer exponent")
    return np.power(a, b)


_UNARY_FN = {
    "neg": np.negative,
    "sin": np.sin,
    "cos": np.cos,
    "tan": _tan,
    "cot": _cot,
    "exp": np.exp,
    "log": _log,
    "sqrt": _sqrt,
    "abs": np.abs,
}

_BINARY_FN = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": _div, "^": _pow}


def _compile(e: Expr) -> Callable:
    if isinstance(e, Num):
        v = e.value
        return lambda x, env: v
    if isinstance(e, Const):
        v = CONSTANTS[e.name]
        return lambda x, env: v
    if isinstance(e, Var):
        return lambda x, env: x
    if isinstance(e, Param):
        name = e.name

        def param(x, env):
            try:
                return env[name]
            except (KeyError, TypeError):
                raise UnboundParameterError(name) from None

        return param
    if isinstance(e, Unary):
        f, g = _UNARY_FN[e.op], e.arg._fn
        return lambda x, env: f(g(x, env))
    f, g, h = _BINARY_FN[e.op], e.left._fn, e.right._fn
    return lambda x, env: f(g(x, env), h(x, env))


def evaluate(e: Expr, x, binding: ParamBinding | None = None):
    """Evaluate at a float or an array of floats.

    Raises DomainError instead of returning NaN or infinity, and
    UnboundParameterError when a parameter has no value in ``binding``.
    """
    missing = e.params - set(binding or ())
    if missing:
        raise UnboundParameterError(sorted(missing)[0])
    scalar = np.ndim(x) == 0
    xa = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = e._fn(xa, binding or {})
    out = np.broadcast_to(np.asarray(out, dtype=float), xa.shape)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite value of {e}")
    return float(out) if scalar else np.array(out)


def bind(e: Expr, binding: ParamBinding) -> Expr:
    """Substitute parameter values, leaving unbound names symbolic."""
    if isinstance(e, Param) and e.name in binding:
        return num(binding[e.name])
    if isinstance(e, Unary):
        arg = bind(e.arg, binding)
        return neg(arg) if e.op == "neg" else func(e.op, arg)
    if isinstance(e, Binary):
        return _BINARY[e.op](bind(e.left, binding), bind(e.right, binding))
    return e


def substitute(e: Expr, inner: Expr) -> Expr:
    """Composition ``e(inner(x))``."""
    if isinstance(e, Var):
        return inner
    if isinstance(e, Unary):
        arg = substitute(e.arg, inner)
        return neg(arg) if e.op == "neg" else func(e.op, arg)
    if isinstance(e, Binary):
        return _BINARY[e.op](substitute(e.left, inner), substitute(e.right, inner))
    return e


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr) -> Expr:
    """Exact derivative with respect to ``x``."""
    if not e.has_x:
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Unary):
        a, da = e.arg, diff(e.arg)
        op = e.op
        if op == "neg":
            return neg(da)
        if op == "sin":
            outer = func("cos", a)
        elif op == "cos":
            outer = neg(func("sin", a))
        elif op == "tan":
            outer = add(ONE, power(func("tan", a), TWO))
        elif op == "cot":
            outer = neg(add(ONE, power(func("cot", a), TWO)))
        elif op == "exp":
            outer = func("exp", a)
        elif op == "log":
            return div(da, a)
        elif op == "sqrt":
            return div(da, mul(TWO, func("sqrt", a)))
        else:  # abs
            outer = div(a, func("abs", a))
        return mul(outer, da)
    a, b = e.left, e.right
    op = e.op
    if op == "+":
        return add(diff(a), diff(b))
    if op == "-":
        return sub(diff(a), diff(b))
    if op == "*":
        return add(mul(diff(a), b), mul(a, diff(b)))
    if op == "/":
        if not b.has_x:
            return div(diff(a), b)
        return div(sub(mul(diff(a), b), mul(a, diff(b))), power(b, TWO))
    # power
    if not b.has_x:
        return mul(mul(b, power(a, sub(b, ONE))), diff(a))
    # general exponent: a^b (b' log a + b a'/a)
    return mul(e, add(mul(diff(b), func("log", a)), div(mul(b, diff(a)), a)))
