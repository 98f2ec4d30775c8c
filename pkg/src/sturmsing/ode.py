"""Integration of u'' + p u = 0 and (r u')' + p u = 0 on an open interval.

Solutions come in two flavours that share one duck-typed interface
(``sol(x)``, ``sol.deriv(x)``, ``sol.deriv2(x)``, ``sol.lo``, ``sol.hi``):

* :class:`Trajectory` -- a numerically integrated solution with quintic
  Hermite interpolation between accepted steps;
* :class:`ClosedForm` -- an expression known to solve the equation, with
  symbolic derivatives.

The integrator is a Dormand-Prince 5(4) pair. It never evaluates the
coefficients at an endpoint; if the step size collapses near a singular
endpoint the integration stops there and the stop point is recorded.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr as ex
from .errors import CoverageError, DomainError, HypothesisError, StepSizeUnderflow

REGULAR = "regular"
SINGULAR = "singular"

UNDERFLOW_FACTOR = 1e-13


def _scalar_fn(e: ex.Expr, binding):
    """Fast scalar evaluator; raises DomainError on non-finite values."""
    missing = e.params - set(binding)
    if missing:
        raise ex.UnboundParameterError(sorted(missing)[0])
    fn = e._fn

    def call(x):
        with np.errstate(all="ignore"):
            v = float(fn(x, binding))
        if not math.isfinite(v):
            raise DomainError(f"non-finite value of {e} at x={x!r}")
        return v

    return call


@dataclass(frozen=True)
class EquationSpec:
    """Coefficients and interval of ``(r u')' + p u = 0``.

    ``r`` defaults to the constant 1, giving ``u'' + p u = 0``. Endpoints may
    be infinite. ``params`` binds every free parameter of ``p`` and ``r``.
    """

    a: float
    b: float
    p: ex.Expr
    r: ex.Expr | None = None
    params: dict = field(default_factory=dict)
    kinds: tuple[str, str] = (SINGULAR, SINGULAR)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "p", ex.as_expr(self.p))
        if self.r is not None:
            r = ex.as_expr(self.r)
            object.__setattr__(self, "r", None if r == ex.ONE else r)
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        if not self.a < self.b:
            raise ValueError(f"need a < b, got ({self.a}, {self.b})")
        for kind in self.kinds:
            if kind not in (REGULAR, SINGULAR):
                raise ValueError(f"unknown endpoint kind {kind!r}")

    def __hash__(self):
        return hash((self.a, self.b, self.p, self.r, tuple(sorted(self.params.items()))))

    @property
    def flux_form(self) -> bool:
        return self.r is not None

    def contains(self, x) -> bool:
        return self.a < x < self.b

    def p_at(self, x):
        return ex.evaluate(self.p, x, self.params)

    def r_at(self, x):
        if self.r is None:
            return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0
        return ex.evaluate(self.r, x, self.params)

    def dr_at(self, x):
        if self.r is None:
            return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
        return ex.evaluate(self._dr, x, self.params)

    @property
    def _dr(self):
        return ex.diff(self.r)

    def default_x0(self) -> float:
        """Interval midpoint; 0 on the whole line; one unit in from a finite end."""
        if math.isfinite(self.a) and math.isfinite(self.b):
            return 0.5 * (self.a + self.b)
        if not math.isfinite(self.a) and not math.isfinite(self.b):
            return 0.0
        if math.isfinite(self.a):
            return self.a + 1.0
        return self.b - 1.0

    def truncated(self, eps=1e-4, t_inf=20.0) -> tuple[float, float]:
        """Cutoffs ``[a + eps, b - eps]``; infinite ends become ``-/+ t_inf``."""
        lo = self.a + eps if math.isfinite(self.a) else -abs(t_inf)
        hi = self.b - eps if math.isfinite(self.b) else abs(t_inf)
        if not lo < hi:
            raise ValueError("truncation leaves an empty interval")
        return lo, hi

    def with_p(self, p, params=None, name="") -> "EquationSpec":
        merged = {**self.params, **(params or {})}
        return EquationSpec(self.a, self.b, p, self.r, merged, self.kinds, name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "a": _jsonable(self.a),
            "b": _jsonable(self.b),
            "p": str(self.p),
            "r": None if self.r is None else str(self.r),
            "params": dict(sorted(self.params.items())),
            "kinds": list(self.kinds),
        }


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf"
    return v


# ---------------------------------------------------------------------------
# solutions


class ClosedForm:
    """A closed-form solution ``u(x)`` with exact derivatives."""

    def __init__(self, e, spec: EquationSpec, binding=None, lo=None, hi=None):
        self.expr = ex.as_expr(e)
        self.spec = spec
        self.binding = {**spec.params, **(binding or {})}
        self.d1 = ex.diff(self.expr)
        self.d2 = ex.diff(self.d1)
        self.lo = spec.a if lo is None else lo
        self.hi = spec.b if hi is None else hi

    def __repr__(self):
        return f"ClosedForm({str(self.expr)!r})"

    def __call__(self, x):
        return ex.evaluate(self.expr, x, self.binding)

    def deriv(self, x):
        return ex.evaluate(self.d1, x, self.binding)

    def deriv2(self, x):
        return ex.evaluate(self.d2, x, self.binding)

    def residual(self, x):
        """Normalized residual ``|(r u')' + p u| / (1 + |p| |u|)``."""
        x = np.asarray(x, dtype=float)
        u, du, d2u = self(x), self.deriv(x), self.deriv2(x)
        p = self.spec.p_at(x)
        lhs = self.spec.r_at(x) * d2u + self.spec.dr_at(x) * du + p * u
        return np.abs(lhs) / (1.0 + np.abs(p) * np.abs(u))


def _hermite5(x, xs, ys, d1, d2, derivative=False):
    """Quintic Hermite interpolation on values, first and second derivatives.

    With ``derivative=True`` returns the derivative of the interpolant.
    """
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    i = np.clip(np.searchsorted(xs, xa, side="right") - 1, 0, len(xs) - 2)
    h = xs[i + 1] - xs[i]
    s = (xa - xs[i]) / h
    s2, s3 = s * s, s * s * s
    s4 = s2 * s2
    if not derivative:
        b = (1 - 10 * s3 + 15 * s4 - 6 * s4 * s,
             s - 6 * s3 + 8 * s4 - 3 * s4 * s,
             0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s4 * s,
             10 * s3 - 15 * s4 + 6 * s4 * s,
             -4 * s3 + 7 * s4 - 3 * s4 * s,
             0.5 * s3 - s4 + 0.5 * s4 * s)
        out = (b[0] * ys[i] + h * b[1] * d1[i] + h * h * b[2] * d2[i]
               + b[3] * ys[i + 1] + h * b[4] * d1[i + 1] + h * h * b[5] * d2[i + 1])
        exact_lo, exact_hi = ys[i], ys[i + 1]
    else:
        b = (-30 * s2 + 60 * s3 - 30 * s4,
             1 - 18 * s2 + 32 * s3 - 15 * s4,
             s - 4.5 * s2 + 6 * s3 - 2.5 * s4,
             30 * s2 - 60 * s3 + 30 * s4,
             -12 * s2 + 28 * s3 - 15 * s4,
             1.5 * s2 - 4 * s3 + 2.5 * s4)
        out = (b[0] * ys[i] / h + b[1] * d1[i] + h * b[2] * d2[i]
               + b[3] * ys[i + 1] / h + b[4] * d1[i + 1] + h * b[5] * d2[i + 1])
        exact_lo, exact_hi = d1[i], d1[i + 1]
    # exact reproduction at the samples
    hit = xa == xs[i]
    out[hit] = exact_lo[hit]
    hit = xa == xs[i + 1]
    out[hit] = exact_hi[hit]
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense numerical solution sampled at strictly increasing points.

    ``u`` is interpolated by quintic Hermite on ``(u, u', u'')`` with ``u''``
    taken from the equation; ``u'`` is the derivative of that interpolant.
    Both reproduce the samples exactly.
    """

    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    spec: EquationSpec
    initial: tuple  # (x0, u0, du0)
    tol: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.x) < 2 or np.any(np.diff(self.x) <= 0):
            raise ValueError("trajectory samples must be strictly increasing")

    @classmethod
    def from_solution(cls, sol, spec: EquationSpec, xs) -> "Trajectory":
        """Sample a closed-form solution onto a trajectory."""
        xs = np.asarray(xs, dtype=float)
        return cls(xs, np.asarray(sol(xs)), np.asarray(sol.deriv(xs)), spec,
                   (float(xs[0]), float(sol(xs[0])), float(sol.deriv(xs[0]))), 0.0,
                   {"source": str(getattr(sol, "expr", sol))})

    @property
    def lo(self) -> float:
        return float(self.x[0])

    @property
    def hi(self) -> float:
        return float(self.x[-1])

    def covers(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.x[0]) & (x <= self.x[-1])))

    def _require(self, x):
        if not self.covers(x):
            raise CoverageError(f"x outside trajectory coverage [{self.lo}, {self.hi}]")

    @cached_property
    def d2u(self) -> np.ndarray:
        return _second_derivative(self.spec, self.x, self.u, self.du)

    def __call__(self, x):
        self._require(x)
        return _hermite5(x, self.x, self.u, self.du, self.d2u)

    def deriv(self, x):
        self._require(x)
        return _hermite5(x, self.x, self.u, self.du, self.d2u, derivative=True)

    def deriv2(self, x):
        return _second_derivative(self.spec, x, self(x), self.deriv(x))

    def flux(self, x=None):
        """``r u'`` at the samples or at ``x``."""
        if x is None:
            return self.spec.r_at(self.x) * self.du
        return self.spec.r_at(x) * self.deriv(x)

    # export ---------------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "u", "du"])
        for row in zip(self.x, self.u, self.du):
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "initial": {"x0": self.initial[0], "u0": self.initial[1], "du0": self.initial[2]},
            "tol": self.tol,
            "diagnostics": self.diagnostics,
            "samples": {
                "x": [float(v) for v in self.x],
                "u": [float(v) for v in self.u],
                "du": [float(v) for v in self.du],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _second_derivative(spec, x, u, du):
    p = spec.p_at(x)
    if not spec.flux_form:
        return -p * u
    return (-p * u - spec.dr_at(x) * du) / spec.r_at(x)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _rhs_factory(spec: EquationSpec):
    p = _scalar_fn(spec.p, spec.params)
    if not spec.flux_form:
        def rhs(x, u, q):
            return q, -p(x) * u
    else:
        r = _scalar_fn(spec.r, spec.params)

        def rhs(x, u, q):
            rx = r(x)
            if rx <= 0:
                raise HypothesisError(f"r(x) must be positive, r({x!r}) = {rx!r}")
            return q / rx, -p(x) * u
    return rhs


def _sweep(spec, x0, u0, q0, target, tol, max_step, max_steps, strict):
    """Integrate in one direction. Returns sample lists and a stop record."""
    rhs = _rhs_factory(spec)
    direction = 1.0 if target > x0 else -1.0
    span = abs(target - x0)
    max_step = span / 50 if max_step is None else max_step
    xs, us, qs = [x0], [u0], [q0]
    x, u, q = x0, u0, q0
    k1 = rhs(x, u, q)
    scale = tol + tol * max(abs(u), abs(q))
    d1 = max(abs(k1[0]), abs(k1[1])) / scale
    h = min(max_step, 0.01 * span, 0.01 / d1 if d1 > 1e-12 else max_step)
    h = max(h, 1e-6 * span)
    stop = {"status": "reached", "x": target}
    steps = 0
    while direction * (target - x) > 0:
        if steps >= max_steps:
            stop = {"status": "max_steps", "x": x}
            break
        if h < UNDERFLOW_FACTOR * (1 + abs(x)):
            if strict:
                raise StepSizeUnderflow(x)
            stop = {"status": "cutoff", "x": x}
            break
        h = min(h, abs(target - x))
        last = abs(target - x) <= h * (1 + 1e-12)
        hs = direction * h
        ks = [k1]
        try:
            for i in range(1, 7):
                a = _A[i]
                ui = u + hs * sum(a[j] * ks[j][0] for j in range(i))
                qi = q + hs * sum(a[j] * ks[j][1] for j in range(i))
                xi = target if (i >= 5 and last) else x + _C[i] * hs
                ks.append(rhs(xi, ui, qi))
        except DomainError:
            h *= 0.25
            continue
        u_new, q_new = ui, qi
        eu = hs * sum(_E[j] * ks[j][0] for j in range(7))
        eq = hs * sum(_E[j] * ks[j][1] for j in range(7))
        err = max(abs(eu) / (tol + tol * max(abs(u), abs(u_new))),
                  abs(eq) / (tol + tol * max(abs(q), abs(q_new))))
        # phase guard: the Pruefer angle must move less than pi/2 per step
        dtheta = abs(math.atan2(u * q_new - q * u_new, q * q_new + u * u_new))
        if err <= 1.0 and dtheta < 0.5 * math.pi:
            steps += 1
            x = target if last else x + hs
            u, q = u_new, q_new
            xs.append(x)
            us.append(u)
            qs.append(q)
            k1 = ks[6]
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(max_step, h * fac)
        else:
            fac = 0.5 if err <= 1.0 else max(0.1, 0.9 * err ** -0.25)
            h *= fac
    stop["steps"] = steps
    return xs, us, qs, stop


def integrate(spec: EquationSpec, x0, u0, du0, target, tol=1e-10, *,
              max_step=None, max_steps=200_000, strict=False) -> Trajectory:
    """Solve the initial value problem from ``x0`` toward ``target``.

    For the flux form the integrated state is ``(u, r u')``. If the step
    size falls below ``1e-13 (1 + |x|)`` the sweep stops and the record in
    ``diagnostics`` has status ``"cutoff"``; with ``strict=True`` a
    StepSizeUnderflow is raised instead.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    for name, v in (("x0", x0), ("target", target)):
        if not spec.contains(v):
            raise ValueError(f"{name}={v!r} is not inside ({spec.a}, {spec.b})")
    if target == x0:
        raise ValueError("target equals x0")
    if spec.flux_form:
        # a sign change of r usually shows up as a cutoff at its zero, so
        # check the ends of the requested span explicitly
        for v in (x0, target):
            rv = float(spec.r_at(v))
            if not rv > 0:
                raise HypothesisError(f"r(x) must be positive, r({v!r}) = {rv!r}")
    q0 = du0 * float(spec.r_at(x0))
    xs, us, qs, stop = _sweep(spec, float(x0), float(u0), float(q0), float(target),
                              tol, max_step, max_steps, strict)
    if len(xs) < 2:
        raise StepSizeUnderflow(x0)
    xs, us, qs = np.array(xs), np.array(us), np.array(qs)
    side = "right" if target > x0 else "left"
    if target < x0:
        xs, us, qs = xs[::-1], us[::-1], qs[::-1]
    dus = qs / spec.r_at(xs) if spec.flux_form else qs
    return Trajectory(xs, us, dus, spec, (float(x0), float(u0), float(du0)), tol,
                      {side: stop})


def integrate_both(spec: EquationSpec, x0, u0, du0, lo, hi, tol=1e-10, **kw) -> Trajectory:
    """Integrate from an interior ``x0`` out to both ``lo`` and ``hi``."""
    left = integrate(spec, x0, u0, du0, lo, tol, **kw)
    right = integrate(spec, x0, u0, du0, hi, tol, **kw)
    return Trajectory(
        np.concatenate([left.x, right.x[1:]]),
        np.concatenate([left.u, right.u[1:]]),
        np.concatenate([left.du, right.du[1:]]),
        spec,
        (float(x0), float(u0), float(du0)),
        tol,
        {**left.diagnostics, **right.diagnostics},
    )


def matched_ivp(specP: EquationSpec, u, c, tol=1e-10, lo=None, hi=None, **kw) -> Trajectory:
    """Solution ``v`` of the P-equation with ``v(c) = u(c)``, ``v'(c) = u'(c)``.

    Integrated both ways from ``c`` across ``[lo, hi]``, which defaults to
    the coverage of ``u`` (or to the default truncation for closed forms).
    """
    if lo is None or hi is None:
        if isinstance(u, Trajectory):
            dlo, dhi = u.lo, u.hi
        else:
            dlo, dhi = specP.truncated()
            dlo, dhi = max(dlo, u.lo), min(dhi, u.hi)
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
    if not lo < c < hi:
        raise ValueError(f"c={c!r} must lie inside ({lo}, {hi})")
    uc = float(u(c))
    if uc <= 0:
        raise HypothesisError(f"u(c) must be positive, got {uc!r}")
    return integrate_both(specP, c, uc, float(u.deriv(c)), lo, hi, tol, **kw)


def wronskian(u, v, x):
    """``r (u v' - u' v)`` at ``x``; for ``r = 1`` this is ``u v' - u' v``.

    The factor ``r`` makes the value constant for two solutions of the same
    flux-form equation.
    """
    for s in (u, v):
        if np.any(np.asarray(x) < s.lo) or np.any(np.asarray(x) > s.hi):
            raise CoverageError("x outside the common coverage of both solutions")
    spec = getattr(u, "spec", None) or getattr(v, "spec")
    return spec.r_at(x) * (u(x) * v.deriv(x) - u.deriv(x) * v(x))
