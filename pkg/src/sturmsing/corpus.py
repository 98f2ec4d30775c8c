"""Built-in equations with closed-form solutions, used as oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ode import ClosedForm, EquationSpec
from .principality import DIVERGENT, FINITE

LAMBDA_P = "4*lam*(1 - lam)/(1 - x^2)^2"


@dataclass(frozen=True)
class Solution:
    name: str
    expr: str | Callable[[dict], str]
    # endpoint classes of int dx/u^2 as functions of the parameters; None
    # when u vanishes inside the interval
    classes: Callable[[dict], tuple | None]


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    p: str
    interval: tuple
    solutions: tuple
    defaults: dict = field(default_factory=dict)
    primary: str | None = None
    tags: tuple = ()
    description: str = ""

    def spec(self, params=None) -> EquationSpec:
        binding = {**self.defaults, **(params or {})}
        unknown = set(binding) - set(self.defaults)
        if unknown:
            raise KeyError(f"{self.name} has no parameter(s) {sorted(unknown)}")
        a, b = self.interval
        return EquationSpec(a, b, self.p, params=binding, name=self.name)

    def solution(self, name=None, params=None) -> ClosedForm:
        spec = self.spec(params)
        sol = self._pick(name, spec.params)
        return ClosedForm(_expr(sol, spec.params), spec)

    def _pick(self, name, params):
        if name is None:
            return self.solutions[0]
        for s in self.solutions:
            if s.name == name:
                return s
        raise KeyError(f"{self.name} has no solution named {name!r}")

    def classification(self, name=None, params=None):
        binding = {**self.defaults, **(params or {})}
        return self._pick(name, binding).classes(binding)

    def to_dict(self) -> dict:
        a, b = self.interval
        return {
            "name": self.name,
            "p": self.p,
            "interval": [_endpoint(a), _endpoint(b)],
            "parameters": dict(self.defaults),
            "solutions": [s.name for s in self.solutions],
            "tags": list(self.tags),
            "description": self.description,
        }


def _endpoint(v):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _expr(sol: Solution, params) -> str:
    if callable(sol.expr):
        return sol.expr(params)
    return sol.expr


def _fixed(left, right):
    return lambda _: (left, right)


def _lam_u1(params):
    lam = params["lam"]
    return (DIVERGENT if lam <= 0.5 else FINITE, DIVERGENT if lam >= 0.5 else FINITE)


def _lam_u2(params):
    left, right = _lam_u1(params)
    return right, left


def _lam_second(params):
    if params["lam"] == 0.5:
        return "sqrt(1 - x^2)*log((1 + x)/(1 - x))/2"
    return "(1 + x)^lam*(1 - x)^(1 - lam)"


def _lam_second_classes(params):
    return None if params["lam"] == 0.5 else _lam_u2(params)


def _euler_exponent(sign):
    def expr(params):
        c = params["c"]
        if c > 0.25:
            raise ValueError("the Euler family oscillates for c > 1/4")
        if c == 0.25:
            return "x^(1/2)" if sign > 0 else "x^(1/2)*log(x)"
        return f"x^(1/2 {'+' if sign > 0 else '-'} sqrt(1/4 - c))"
    return expr


def _euler_classes(sign):
    def classes(params):
        c = params["c"]
        if c == 0.25:
            return (DIVERGENT, DIVERGENT) if sign > 0 else None
        m = 0.5 + sign * math.sqrt(0.25 - c)
        # x^(-2m) diverges at 0 iff 2m >= 1 and at infinity iff 2m <= 1
        return (DIVERGENT if 2 * m >= 1 else FINITE, DIVERGENT if 2 * m <= 1 else FINITE)
    return classes


ENTRIES = {
    e.name: e
    for e in (
        CorpusEntry(
            "lambda-family", LAMBDA_P, (-1.0, 1.0),
            (Solution("u1", "(1 - x)^lam*(1 + x)^(1 - lam)", _lam_u1),
             Solution("u2", _lam_second, _lam_second_classes)),
            {"lam": 0.25}, "lam", ("singular", "failure-example"),
            "both solutions positive for lam != 1/2; principal at both ends at lam = 1/2",
        ),
        CorpusEntry(
            "constant-minus-one", "-1", (-math.inf, math.inf),
            (Solution("exp", "exp(x)", _fixed(DIVERGENT, FINITE)),
             Solution("exp-neg", "exp(-x)", _fixed(FINITE, DIVERGENT))),
            tags=("constant", "nonoscillatory"),
        ),
        CorpusEntry(
            "constant-zero", "0", (0.0, 1.0),
            (Solution("one", "1", _fixed(FINITE, FINITE)),
             Solution("x", "x", _fixed(DIVERGENT, FINITE))),
            tags=("constant", "regular"),
        ),
        CorpusEntry(
            "constant-one", "1", (0.0, math.pi),
            (Solution("sin", "sin(x)", _fixed(DIVERGENT, DIVERGENT)),
             Solution("cos", "cos(x)", lambda _: None)),
            tags=("constant", "regular"),
        ),
        CorpusEntry(
            "constant-pi2", "pi^2", (0.0, 1.0),
            (Solution("sin", "sin(pi*x)", _fixed(DIVERGENT, DIVERGENT)),
             Solution("cos", "cos(pi*x)", lambda _: None)),
            tags=("constant", "regular"),
        ),
        CorpusEntry(
            "euler", "c/x^2", (0.0, math.inf),
            (Solution("upper", _euler_exponent(+1), _euler_classes(+1)),
             Solution("lower", _euler_exponent(-1), _euler_classes(-1))),
            {"c": 3 / 16}, "c", ("euler", "half-line"),
            "c = 3/16 gives x^(3/4) and x^(1/4)",
        ),
    )
}


def get(name: str) -> CorpusEntry:
    try:
        return ENTRIES[name]
    except KeyError:
        raise KeyError(f"unknown corpus entry {name!r}; known: {sorted(ENTRIES)}") from None


def standard_grid(spec: EquationSpec, n=201, eps=1e-3, t_inf=20.0):
    lo, hi = spec.truncated(eps, t_inf)
    return np.linspace(lo, hi, n)
