"""Counterexample constructions for the singular Sturm theorems.

All builders share one mechanism. With ``y = f(x) = int_x0^x dt/(r u^2)``
and a positive solution ``w`` of ``w'' + R(y) w = 0``, the function
``v = u * w(f)`` solves ``(r v')' + P v = 0`` for

    P = p + R(f) * r * f'^2 = p + R(f) / (r u^4).

Choosing ``w = g'^(-1/2)`` for a generator ``g`` gives ``R = Sg/2`` and the
Schwarzian construction; ``w = cos(k y)`` gives the cosine construction;
``w = (A + B y)^(1 - alpha)`` gives the power-product one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp

from . import expr as ex
from .errors import CoverageError, HypothesisError, RefusalError
from .ode import EquationSpec, Trajectory
from .principality import (
    DIVERGENT,
    FINITE,
    UNDECIDED,
    PrincipalityReport,
    _gl,
    principality_report,
)

BOTH_FINITE = "BOTH_FINITE"
LEFT_FINITE = "LEFT_FINITE"
RIGHT_FINITE = "RIGHT_FINITE"

SAFETY = 0.9
RESIDUAL_TOL = 1e-6
CONVEXITY_TOL = 1e-8
CONVEXITY_POINTS = 512

OBSTRUCTION = (
    "both endpoint integrals of 1/u^2 diverge, so u is principal at both ends; "
    "no equation w'' + R w = 0 with R > 0 has a positive solution on the whole "
    "line (a concave function cannot stay positive there), hence no counterexample exists"
)


# ---------------------------------------------------------------------------
# the ratio map y = f(x)


def _graded_nodes(spec, lo, hi, x0, n):
    """Nodes on [lo, hi] that crowd geometrically towards finite endpoints."""
    parts = [np.array([lo, x0, hi])]
    for end, cut in ((spec.a, lo), (spec.b, hi)):
        if math.isfinite(end) and abs(x0 - end) > abs(cut - end) > 0:
            d = np.geomspace(abs(cut - end), abs(x0 - end), n)
            parts.append(end + np.sign(x0 - end) * d)
        else:
            parts.append(np.linspace(x0, cut, n))
    nodes = np.unique(np.concatenate(parts))
    return nodes[(nodes >= lo) & (nodes <= hi)]


class SchwarzianMap:
    """``f(x) = int_x0^x dt/(r u^2)`` with exact derivatives from ``u``.

    ``f`` is tabulated by Gauss-Legendre on a graded grid and evaluated
    anywhere in ``[lo, hi]`` by one more Gauss-Legendre step from the
    nearest node; ``f'`` and higher derivatives come from ``u`` directly.
    """

    def __init__(self, u, spec: EquationSpec, report: PrincipalityReport | None = None,
                 lo=None, hi=None, eps=1e-4, t_inf=20.0, nodes=400):
        self.u, self.spec = u, spec
        self.report = report or principality_report(u, spec)
        self.x0 = float(self.report.x0)
        dlo, dhi = spec.truncated(eps, t_inf)
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
        if isinstance(u, Trajectory):
            lo, hi = max(lo, u.lo), min(hi, u.hi)
        if not lo < self.x0 < hi:
            raise HypothesisError(f"x0={self.x0} is not inside [{lo}, {hi}]")
        self.lo, self.hi = float(lo), float(hi)
        grid = _graded_nodes(spec, self.lo, self.hi, self.x0, nodes)
        if isinstance(u, Trajectory):
            grid = np.unique(np.concatenate([grid, u.x[(u.x > self.lo) & (u.x < self.hi)]]))
        cells = _gl(self.df, grid[:-1], grid[1:])
        i0 = int(np.searchsorted(grid, self.x0))  # x0 is a node
        # accumulate outwards from x0 so large tails cannot swamp values near it
        left = -np.cumsum(cells[:i0][::-1])[::-1]
        right = np.cumsum(cells[i0:])
        self.nodes = grid
        self.table = np.concatenate([left, [0.0], right])

    @property
    def L1(self):
        return self.report.L1

    @property
    def L2(self):
        return self.report.L2

    @property
    def range(self):
        return (-self.L1, self.L2)

    def _require(self, x):
        x = np.asarray(x, dtype=float)
        if np.any((x < self.lo) | (x > self.hi)):
            raise CoverageError(f"x outside the mapped range [{self.lo}, {self.hi}]")
        return x

    def _ru2(self, x):
        u = np.asarray(self.u(x), dtype=float)
        if np.any(u <= 0):
            raise HypothesisError("u vanishes or changes sign on the mapped range")
        return self.spec.r_at(x) * u * u

    def __call__(self, x):
        x = self._require(x)
        flat = np.atleast_1d(x).ravel()
        i = np.clip(np.searchsorted(self.nodes, flat, side="right") - 1, 0, len(self.nodes) - 2)
        start = self.nodes[i]
        out = self.table[i] + _gl(self.df, start, flat)
        return out.reshape(np.shape(x)) if np.ndim(x) else float(out[0])

    def df(self, x):
        return 1.0 / self._ru2(x)

    def _phi(self, x):
        """First two derivatives of ``log f' = -log r - 2 log u``."""
        u, du, d2u = self.u(x), self.u.deriv(x), self.u.deriv2(x)
        r, dr = self.spec.r_at(x), self.spec.dr_at(x)
        d2r = self._d2r(x)
        phi1 = -dr / r - 2.0 * du / u
        phi2 = -(d2r * r - dr * dr) / (r * r) - 2.0 * (d2u * u - du * du) / (u * u)
        return phi1, phi2

    def _d2r(self, x):
        if self.spec.r is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        d2 = ex.diff(ex.diff(self.spec.r))
        return ex.evaluate(d2, x, self.spec.params) + 0.0 * np.asarray(x, dtype=float)

    def derivatives(self, x):
        """``(f', f'', f''')`` at ``x``."""
        x = self._require(x)
        d1 = self.df(x)
        phi1, phi2 = self._phi(x)
        return d1, d1 * phi1, d1 * (phi1 * phi1 + phi2)

    def schwarzian(self, x):
        """``Sf = (log f')'' - (log f')'^2 / 2``; equals ``2p`` when ``r = 1``."""
        x = self._require(x)
        phi1, phi2 = self._phi(x)
        return phi2 - 0.5 * phi1 * phi1

    def inverse(self, y, iterations=8):
        """``x`` with ``f(x) = y``, by bracketed Newton steps from the table."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any((y < self.table[0]) | (y > self.table[-1])):
            raise CoverageError("y outside the tabulated range of f")
        i = np.clip(np.searchsorted(self.table, y, side="right") - 1, 0, len(self.nodes) - 2)
        lo, hi = self.nodes[i], self.nodes[i + 1]
        x = np.interp(y, self.table, self.nodes)
        for _ in range(iterations):
            x = np.clip(x - (self(x) - y) / self.df(x), lo, hi)
        return x


# ---------------------------------------------------------------------------
# generators and Schwarzians


@dataclass(frozen=True)
class Generator:
    """``g`` on ``(-L1, L2)`` with ``Sg > 0`` and its disconjugacy witness."""

    case: str
    g: ex.Expr
    Sg: ex.Expr
    w: ex.Expr
    R: ex.Expr
    L1: float
    L2: float

    @property
    def binding(self):
        return {"L1": self.L1, "L2": self.L2}

    @cached_property
    def _derivs(self):
        g1 = ex.diff(self.g)
        g2 = ex.diff(g1)
        return g1, g2, ex.diff(g2)

    def _inside(self, t):
        t = np.asarray(t, dtype=float)
        if np.any((t <= -self.L1) | (t >= self.L2)):
            raise HypothesisError(
                f"ratio value outside the generator range ({-self.L1}, {self.L2})")
        return t

    def __call__(self, t):
        return ex.evaluate(self.g, self._inside(t), self.binding)

    def derivatives(self, t):
        t = self._inside(t)
        return tuple(ex.evaluate(d, t, self.binding) + 0.0 * t for d in self._derivs)

    def schwarzian(self, t):
        return ex.evaluate(self.Sg, self._inside(t), self.binding) + 0.0 * np.asarray(t, float)

    def witness(self, t):
        return ex.evaluate(self.w, self._inside(t), self.binding)

    def to_dict(self) -> dict:
        return {"case": self.case, "g": str(self.g), "Sg": str(self.Sg), "w": str(self.w),
                "R": str(self.R), "L1": _num(self.L1), "L2": _num(self.L2),
                "variable": "x stands for the ratio coordinate t"}


def generator(case, L1=math.inf, L2=math.inf) -> Generator:
    """The generator for one finiteness pattern of ``(L1, L2)``."""
    if case == BOTH_FINITE:
        arg = "pi*(x + L1)/(L1 + L2)"
        return Generator(case, ex.parse(f"-cot({arg})"),
                         ex.parse("2*pi^2/(L1 + L2)^2"),
                         ex.parse(f"sqrt((L1 + L2)/pi)*sin({arg})"),
                         ex.parse("pi^2/(L1 + L2)^2"), L1, L2)
    if case == LEFT_FINITE:
        return Generator(case, ex.parse("log(x + L1)"), ex.parse("1/(2*(x + L1)^2)"),
                         ex.parse("sqrt(x + L1)"), ex.parse("1/(4*(x + L1)^2)"), L1, L2)
    if case == RIGHT_FINITE:
        return Generator(case, ex.parse("-log(L2 - x)"), ex.parse("1/(2*(L2 - x)^2)"),
                         ex.parse("sqrt(L2 - x)"), ex.parse("1/(4*(L2 - x)^2)"), L1, L2)
    raise ValueError(f"unknown generator case {case!r}")


@dataclass
class ComposedMap:
    """``F = g o f`` with derivatives by the chain rule."""

    g: Generator
    f: SchwarzianMap

    def __call__(self, x):
        return self.g(self.f(x))

    def derivatives(self, x):
        t = self.f(x)
        g1, g2, g3 = self.g.derivatives(t)
        f1, f2, f3 = self.f.derivatives(x)
        return (g1 * f1,
                g2 * f1 ** 2 + g1 * f2,
                g3 * f1 ** 3 + 3.0 * g2 * f1 * f2 + g1 * f3)

    def schwarzian(self, x):
        d1, d2, d3 = self.derivatives(x)
        if np.any(d1 == 0):
            raise HypothesisError("F' vanishes")
        q = d2 / d1
        return d3 / d1 - 1.5 * q * q


def schwarzian(fn, x, binding=None):
    """``Sf(x) = (f''/f')' - (f''/f')^2 / 2``.

    ``fn`` may be an expression (differentiated symbolically) or a map with
    its own derivatives such as :class:`SchwarzianMap`.
    """
    if isinstance(fn, (SchwarzianMap, ComposedMap)):
        return fn.schwarzian(x)
    e = ex.as_expr(fn)
    d1 = ex.diff(e)
    d2 = ex.diff(d1)
    d3 = ex.diff(d2)
    f1 = ex.evaluate(d1, x, binding) + 0.0 * np.asarray(x, float)
    if np.any(f1 == 0):
        raise HypothesisError("f' vanishes; the Schwarzian is undefined")
    f2, f3 = ex.evaluate(d2, x, binding), ex.evaluate(d3, x, binding)
    return f3 / f1 - 1.5 * (f2 / f1) ** 2


def compose_schwarzian(g: Generator, f: SchwarzianMap, x):
    """``S(g o f)`` by the composition law ``Sf + (Sg o f) f'^2``."""
    t = f(x)
    return f.schwarzian(x) + g.schwarzian(t) * f.df(x) ** 2


# ---------------------------------------------------------------------------
# transported solutions v = u w(f)


class _Constructed:
    """A positive solution of ``(r v')' + P v = 0`` with ``P = p + bump``."""

    f: SchwarzianMap
    spec: EquationSpec

    def P(self, x):
        return self.spec.p_at(x) + self.bump(x)

    def residual(self, x):
        """``|(r v')' + P v| / (1 + |P| |v|)`` from the exact derivatives."""
        v, dv, d2v = self(x), self.deriv(x), self.deriv2(x)
        P = self.P(x)
        lhs = self.spec.r_at(x) * d2v + self.spec.dr_at(x) * dv + P * v
        return np.abs(lhs) / (1.0 + np.abs(P) * np.abs(v))

    def ode_discrepancy(self, x, rtol=1e-12):
        """Largest relative gap to an independent integration of the P-equation.

        Starts from ``(v, r v')`` at ``x0`` and integrates with scipy's DOP853
        towards both ends of the sample points ``x``. Only meaningful where
        ``v`` is not a strongly decaying mode, which forward integration
        cannot follow; a failed integration reports inf.
        """
        x = np.sort(np.asarray(x, dtype=float))
        x0 = self.f.x0
        r = self.spec.r_at

        def rhs(t, y):
            return [y[1] / r(t), -self.P(t) * y[0]]

        y0 = [float(self(x0)), float(r(x0) * self.deriv(x0))]
        gap = 0.0
        for pts in (x[x >= x0], x[x < x0][::-1]):
            if len(pts) == 0:
                continue
            sol = solve_ivp(rhs, (x0, pts[-1]), y0, method="DOP853", t_eval=pts,
                            rtol=rtol, atol=1e-3 * rtol * max(map(abs, y0)))
            if not sol.success:
                return math.inf
            exact = self(pts)
            gap = max(gap, float(np.max(np.abs(sol.y[0] / exact - 1.0))))
        return gap


class Transported(_Constructed):
    """``v = u * w(f)`` and the coefficient ``P = p + R(f) r f'^2``."""

    def __init__(self, fmap: SchwarzianMap, w: ex.Expr, R: ex.Expr, binding=None):
        self.f, self.u, self.spec = fmap, fmap.u, fmap.spec
        self.w, self.R = w, R
        self.binding = dict(binding or {})
        self.w1 = ex.diff(w)
        self.w2 = ex.diff(self.w1)
        self.lo, self.hi = fmap.lo, fmap.hi

    def _w(self, e, t):
        return ex.evaluate(e, t, self.binding) + 0.0 * np.asarray(t, float)

    def __call__(self, x):
        return self.u(x) * self._w(self.w, self.f(x))

    def _parts(self, x):
        t = self.f(x)
        W, W1, W2 = self._w(self.w, t), self._w(self.w1, t), self._w(self.w2, t)
        f1, f2, _ = self.f.derivatives(x)
        return W, W1 * f1, W2 * f1 ** 2 + W1 * f2

    def deriv(self, x):
        W, Wx, _ = self._parts(x)
        return self.u.deriv(x) * W + self.u(x) * Wx

    def deriv2(self, x):
        W, Wx, Wxx = self._parts(x)
        return self.u.deriv2(x) * W + 2.0 * self.u.deriv(x) * Wx + self.u(x) * Wxx

    def bump(self, x):
        """``P - p``."""
        R = self._w(self.R, self.f(x))
        return R * self.spec.r_at(x) * self.f.df(x) ** 2



class PowerProduct(_Constructed):
    """``v = u1^alpha u2^(1-alpha)`` for two positive solutions with Wronskian ``W``."""

    def __init__(self, fmap: SchwarzianMap, u2, alpha, W):
        self.f, self.u1, self.u2, self.spec = fmap, fmap.u, u2, fmap.spec
        self.alpha, self.W = alpha, W
        self.lo, self.hi = fmap.lo, fmap.hi

    def __call__(self, x):
        a = self.alpha
        return np.exp(a * np.log(self.u1(x)) + (1 - a) * np.log(self.u2(x)))

    def _log_derivs(self, x):
        a = self.alpha
        u1, u2 = self.u1(x), self.u2(x)
        l1, l2 = self.u1.deriv(x) / u1, self.u2.deriv(x) / u2
        ell = a * l1 + (1 - a) * l2
        dell = a * (self.u1.deriv2(x) / u1 - l1 * l1) + (1 - a) * (self.u2.deriv2(x) / u2 - l2 * l2)
        return ell, dell

    def deriv(self, x):
        ell, _ = self._log_derivs(x)
        return self(x) * ell

    def deriv2(self, x):
        ell, dell = self._log_derivs(x)
        return self(x) * (ell * ell + dell)

    def bump(self, x):
        a = self.alpha
        return a * (1 - a) * self.W ** 2 / (self.spec.r_at(x) * (self.u1(x) * self.u2(x)) ** 2)


def _num(v):
    if v is None:
        return None
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _sample_grid(fmap: SchwarzianMap, n=401):
    """Graded sample points strictly inside the mapped range."""
    spec, x0 = fmap.spec, fmap.x0
    return _graded_nodes(spec, fmap.lo, fmap.hi, x0, n // 2)


@dataclass
class CounterexampleResult:
    kind: str
    case: str
    P: object
    v: object
    parameters: dict
    x: np.ndarray
    P_values: np.ndarray
    v_values: np.ndarray
    residual_max: float
    positivity_margin: float
    min_P_minus_p: float
    L1: float | None
    L2: float | None
    provenance: dict
    P_expr: str | None = None
    generator: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, grid=True) -> dict:
        out = {
            "kind": self.kind,
            "case": self.case,
            "parameters": {k: _num(v) if isinstance(v, float) else v
                           for k, v in self.parameters.items()},
            "L1": _num(self.L1),
            "L2": _num(self.L2),
            "residual_max": self.residual_max,
            "positivity_margin": self.positivity_margin,
            "min_P_minus_p": self.min_P_minus_p,
            "provenance": self.provenance,
            "P": {"expr": self.P_expr} if self.P_expr else {},
            "v": {},
        }
        if grid:
            out["P"]["grid"] = {"x": self.x.tolist(), "P": self.P_values.tolist()}
            out["v"]["grid"] = {"x": self.x.tolist(), "v": self.v_values.tolist()}
        if self.generator:
            out["generator"] = self.generator
        out.update(self.extra)
        return out

    def rows(self):
        """Columns ``x, P, v`` for CSV output."""
        return ["x", "P", "v"], np.column_stack([self.x, self.P_values, self.v_values])


def _finalize(kind, case, tr: Transported, parameters, P_expr=None, gen=None, extra=None):
    xs = _sample_grid(tr.f)
    xs = xs[(xs > tr.f.lo) & (xs < tr.f.hi)] if len(xs) > 4 else xs
    v = np.asarray(tr(xs), dtype=float)
    P = np.asarray(tr.P(xs), dtype=float)
    bump = np.asarray(tr.bump(xs), dtype=float)
    if np.any(v <= 0):
        bad = float(xs[np.argmax(v <= 0)])
        raise HypothesisError(f"constructed v is not positive (fails near x={bad!r})")
    if np.any(bump <= 0):
        bad = float(xs[np.argmax(bump <= 0)])
        raise HypothesisError(f"constructed P does not exceed p (fails near x={bad!r})")
    residual = float(np.max(tr.residual(xs)))
    rep = tr.f.report
    return CounterexampleResult(
        kind=kind, case=case, P=tr.P, v=tr, parameters=parameters, x=xs, P_values=P,
        v_values=v, residual_max=residual, positivity_margin=float(np.min(v)),
        min_P_minus_p=float(np.min(bump)), L1=rep.L1, L2=rep.L2,
        provenance={"x0": rep.x0, "left": rep.left.to_dict(), "right": rep.right.to_dict()},
        P_expr=P_expr, generator=gen, extra=dict(extra or {}),
    )


# ---------------------------------------------------------------------------
# builders


def _report(u, spec, report, x0=None):
    return report or principality_report(u, spec, x0)


def _refuse_if_undecided(report):
    if report.undecided:
        sides = [s for s, rec in (("left", report.left), ("right", report.right))
                 if rec.classification == UNDECIDED]
        raise RefusalError(
            f"endpoint integral undecided at {', '.join(sides)}; refusing to build "
            f"(diagnostics: {[getattr(report, s).to_dict() for s in sides]})")


def _refuse_if_principal(report):
    if report.left.classification == DIVERGENT and report.right.classification == DIVERGENT:
        raise RefusalError(OBSTRUCTION)


def generator_case(report: PrincipalityReport) -> str:
    _refuse_if_undecided(report)
    _refuse_if_principal(report)
    left = report.left.classification == FINITE
    right = report.right.classification == FINITE
    if left and right:
        return BOTH_FINITE
    return LEFT_FINITE if left else RIGHT_FINITE


def build_comparison_counterexample(spec: EquationSpec, u, report=None, *, x0=None,
                                    eps=1e-4, t_inf=20.0) -> CounterexampleResult:
    """``P > p`` with a positive solution, through ``F = g o f``."""
    report = _report(u, spec, report, x0)
    case = generator_case(report)
    gen = generator(case, report.L1, report.L2)
    fmap = SchwarzianMap(u, spec, report, eps=eps, t_inf=t_inf)
    tr = Transported(fmap, gen.w, gen.R, gen.binding)
    return _finalize("schwarzian", case, tr, {"L1": report.L1, "L2": report.L2},
                     gen=gen.to_dict())


def chuaqui_counterexample(spec: EquationSpec, u, report=None, *, k=None, x0=None,
                           eps=1e-4, t_inf=20.0) -> CounterexampleResult:
    """``P = p + k^2/(r u^4)`` with ``v = u cos(k f)``; needs both ends finite."""
    report = _report(u, spec, report, x0)
    _refuse_if_undecided(report)
    _refuse_if_principal(report)
    if report.left.classification != FINITE or report.right.classification != FINITE:
        raise RefusalError("the cosine construction needs both endpoint integrals finite")
    bound = 0.5 * math.pi / max(report.L1, report.L2)
    k = SAFETY * bound if k is None else float(k)
    if not 0 < k < bound:
        raise HypothesisError(f"k must lie in (0, {bound}) so that |k f| < pi/2")
    fmap = SchwarzianMap(u, spec, report, eps=eps, t_inf=t_inf)
    tr = Transported(fmap, ex.parse("cos(k*x)"), ex.parse("k^2"), {"k": k})
    P_expr = None
    if isinstance(getattr(u, "expr", None), ex.Expr):
        r = spec.r if spec.r is not None else ex.ONE
        bump = ex.div(ex.num(k * k), ex.mul(r, ex.power(u.expr, ex.num(4))))
        P_expr = str(ex.bind(ex.add(spec.p, bump), u.binding))
    return _finalize("chuaqui", BOTH_FINITE, tr,
                     {"k": k, "safety": SAFETY, "k_bound": bound}, P_expr=P_expr)


def steinmetz_counterexample(spec: EquationSpec, u1, report=None, *, alpha=0.5, c=None,
                             u2=None, x0=None, eps=1e-4, t_inf=20.0) -> CounterexampleResult:
    """``v = u1^alpha u2^(1-alpha)`` with ``P = p + alpha(1-alpha) W^2/(r u1^2 u2^2)``.

    ``u2`` defaults to ``u1 (1 - c f)``, which stays positive exactly when
    ``-1/L1 <= c <= 1/L2``. A supplied ``u2`` must be a positive solution
    independent of ``u1``; ``c`` is then ignored.
    """
    if not 0 < alpha < 1:
        raise HypothesisError(f"alpha must lie in (0, 1), got {alpha}")
    report = _report(u1, spec, report, x0)
    _refuse_if_undecided(report)
    _refuse_if_principal(report)
    fmap = SchwarzianMap(u1, spec, report, eps=eps, t_inf=t_inf)
    if u2 is not None:
        return _steinmetz_pair(spec, fmap, u1, u2, alpha)
    L1, L2 = report.L1, report.L2
    if c is None:
        c = SAFETY / L2 if math.isfinite(L2) else -SAFETY / L1
    c = float(c)
    if c == 0:
        raise HypothesisError("c = 0 makes u2 = u1, which is not independent")
    if not -1.0 / L1 <= c <= 1.0 / L2:
        xs = _sample_grid(fmap)
        vals = 1.0 - c * fmap(xs)
        where = (f"first sign change near x={float(xs[np.argmax(vals <= 0)])!r}"
                 if np.any(vals <= 0) else "the zero lies beyond the truncation")
        raise HypothesisError(f"c={c} is too large: u2 loses positivity ({where})")
    w = ex.parse("(1 - c*x)^(1 - alpha)")
    R = ex.parse("alpha*(1 - alpha)*c^2/(1 - c*x)^2")
    tr = Transported(fmap, w, R, {"c": c, "alpha": alpha})
    return _finalize("steinmetz", "POWER_PRODUCT", tr,
                     {"alpha": alpha, "c": c, "safety": SAFETY, "wronskian": -c})


def _steinmetz_pair(spec, fmap, u1, u2, alpha):
    xs = _sample_grid(fmap)
    vals = np.asarray(u2(xs), dtype=float)
    if np.any(vals <= 0):
        bad = float(xs[np.argmax(vals <= 0)])
        raise HypothesisError(f"u2 loses positivity (first sign change near x={bad!r})")
    wr = spec.r_at(xs) * (u1(xs) * u2.deriv(xs) - u1.deriv(xs) * u2(xs))
    W = float(spec.r_at(fmap.x0) * (u1(fmap.x0) * u2.deriv(fmap.x0)
                                    - u1.deriv(fmap.x0) * u2(fmap.x0)))
    if W == 0 or np.max(np.abs(wr - W)) > 1e-6 * abs(W):
        raise HypothesisError("u1 and u2 must be independent solutions of the same equation "
                              "(the Wronskian is zero or not constant)")
    tr = PowerProduct(fmap, u2, alpha, W)
    return _finalize("steinmetz", "POWER_PRODUCT", tr, {"alpha": alpha, "wronskian": W})


@dataclass
class SeparationCounterexample:
    c1: float
    c2: float
    admissible: tuple
    positivity_margin: float
    rule: str
    L1: float | None
    L2: float | None
    x: np.ndarray
    v_values: np.ndarray
    solution: object = None

    def to_dict(self, grid=True) -> dict:
        out = {"kind": "separation", "c1": self.c1, "c2": self.c2,
               "c2_over_c1": self.c2 / self.c1,
               "admissible": [_num(a) for a in self.admissible],
               "positivity_margin": self.positivity_margin, "rule": self.rule,
               "L1": _num(self.L1), "L2": _num(self.L2)}
        if grid:
            out["v"] = {"grid": {"x": self.x.tolist(), "v": self.v_values.tolist()}}
        return out

    def rows(self):
        return ["x", "v"], np.column_stack([self.x, self.v_values])


def build_separation_counterexample(spec: EquationSpec, u, report=None, *, x0=None,
                                    eps=1e-4, t_inf=20.0) -> SeparationCounterexample:
    """Coefficients ``c1, c2 != 0`` with ``u (c1 + c2 f)`` positive throughout.

    Positivity on ``(-L1, L2)`` means ``-1/L2 < c2/c1 < 1/L1``; one-sided
    cases take the midpoint of the nonzero half, two-sided cases the small
    ratio ``1/(4 max(L1, L2))``.
    """
    report = _report(u, spec, report, x0)
    _refuse_if_undecided(report)
    if report.principal:
        raise RefusalError("u is principal at both ends; the separation theorem holds")
    L1, L2 = report.L1, report.L2
    lo_r = -1.0 / L2 if math.isfinite(L2) else -math.inf
    hi_r = 1.0 / L1 if math.isfinite(L1) else math.inf
    if math.isfinite(L1) and math.isfinite(L2):
        ratio, rule = 0.25 / max(L1, L2), "both finite: 1/(4 max(L1, L2))"
    elif math.isfinite(L2):
        ratio, rule = 0.5 * lo_r, "left divergent: midpoint of (-1/L2, 0)"
    else:
        ratio, rule = 0.5 * hi_r, "right divergent: midpoint of (0, 1/L1)"
    fmap = SchwarzianMap(u, spec, report, eps=eps, t_inf=t_inf)
    w = ex.parse("1 + c*x")
    tr = Transported(fmap, w, ex.ZERO, {"c": ratio})
    xs = _sample_grid(fmap)
    v = np.asarray(tr(xs), dtype=float)
    if np.any(v <= 0):
        raise HypothesisError("the chosen combination changes sign on the truncation")
    return SeparationCounterexample(1.0, ratio, (lo_r, hi_r), float(np.min(v)), rule,
                                    L1, L2, xs, v, tr)


# ---------------------------------------------------------------------------
# relative convexity


@dataclass
class ConvexityReport:
    concave: bool
    max_second_difference: float
    min_second_difference: float
    points: int
    y_range: tuple

    def to_dict(self) -> dict:
        return {"concave": self.concave, "max_second_difference": self.max_second_difference,
                "min_second_difference": self.min_second_difference, "points": self.points,
                "y_range": list(self.y_range)}


def relative_convexity_check(u, v, specp: EquationSpec, specP: EquationSpec, *, report=None,
                             lo=None, hi=None, points=CONVEXITY_POINTS, eps=1e-4,
                             t_inf=20.0, tol=CONVEXITY_TOL) -> ConvexityReport:
    """Is ``w = (v/u) o f^-1`` concave on a uniform grid in ``y``?

    Second divided differences must stay below ``tol``.
    """
    report = _report(u, specp, report)
    fmap = SchwarzianMap(u, specp, report, lo=lo, hi=hi, eps=eps, t_inf=t_inf)
    lo, hi = fmap.lo, fmap.hi
    if isinstance(v, Trajectory):
        lo, hi = max(lo, v.lo), min(hi, v.hi)
    xs = np.linspace(lo, hi, 2001)
    gap = specP.p_at(xs) - specp.p_at(xs)
    if np.any(gap < -1e-12 * (1 + np.abs(specp.p_at(xs)))):
        raise HypothesisError("P >= p fails on the sampled grid")
    if np.any(np.asarray(v(xs)) <= 0):
        raise HypothesisError("v is not positive on the interval")
    y = np.linspace(fmap(lo), fmap(hi), points)
    x = np.clip(fmap.inverse(y), lo, hi)
    w = np.asarray(v(x), dtype=float) / np.asarray(u(x), dtype=float)
    h = y[1] - y[0]
    d2 = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / (h * h)
    return ConvexityReport(bool(np.max(d2) <= tol), float(np.max(d2)), float(np.min(d2)),
                           int(points), (float(y[0]), float(y[-1])))
