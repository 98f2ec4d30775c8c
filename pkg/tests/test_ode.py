import json
import math

import numpy as np
import pytest
from scipy.special import j0, j1

from sturmsing.errors import CoverageError, HypothesisError, StepSizeUnderflow
from sturmsing.ode import (
    ClosedForm,
    EquationSpec,
    Trajectory,
    integrate,
    integrate_both,
    matched_ivp,
    wronskian,
)

LINE = (-math.inf, math.inf)


def spec(p, a=-math.inf, b=math.inf, **kw):
    return EquationSpec(a, b, p, **kw)


def test_sine_oracle():
    tr = integrate(spec("1"), 0.0, 0.0, 1.0, 3.0, tol=1e-10)
    assert abs(tr(3.0) - math.sin(3.0)) <= 1e-8
    xs = np.linspace(0, 3, 97)
    assert np.max(np.abs(tr(xs) - np.sin(xs))) <= 1e-8
    assert np.max(np.abs(tr.deriv(xs) - np.cos(xs))) <= 1e-8


def test_constant_solution_exact():
    tr = integrate(spec("0"), 0.0, 1.0, 0.0, 5.0)
    assert np.all(tr.u == 1.0)
    assert np.all(tr.du == 0.0)


def test_lambda_family_matches_u1():
    s = EquationSpec(-1, 1, "4*lam*(1-lam)/(1-x^2)^2", params={"lam": 0.25})
    u1 = ClosedForm("(1-x)^lam*(1+x)^(1-lam)", s)
    tr = integrate(s, 0.0, 1.0, 0.5, 0.999)
    xs = np.linspace(0, 0.999, 200)
    assert np.max(np.abs(tr(xs) / u1(xs) - 1)) <= 1e-6


def test_samples_reproduced_exactly():
    tr = integrate(spec("1"), 0.0, 0.0, 1.0, 3.0)
    assert np.array_equal(tr(tr.x), tr.u)
    assert np.array_equal(tr.deriv(tr.x), tr.du)
    assert np.all(np.diff(tr.x) > 0)


def test_samples_strictly_inside_and_cutoff_reported():
    s = EquationSpec(-1, 1, "4*lam*(1-lam)/(1-x^2)^2", params={"lam": 0.25})
    tr = integrate(s, 0.0, 1.0, 0.5, 1 - 1e-15)
    assert tr.diagnostics["right"]["status"] == "cutoff"
    assert tr.hi < 1.0
    with pytest.raises(StepSizeUnderflow) as info:
        integrate(s, 0.0, 1.0, 0.5, 1 - 1e-15, strict=True)
    assert 0.99 < info.value.x < 1.0


def test_target_outside_interval_rejected():
    with pytest.raises(ValueError):
        integrate(EquationSpec(0, 1, "0"), 0.5, 1, 0, 1.0)


def test_tolerance_refinement_consistency():
    s = spec("1 + x^2/10")
    a = integrate(s, 0.0, 1.0, 0.0, 4.0, tol=1e-9)
    b = integrate(s, 0.0, 1.0, 0.0, 4.0, tol=5e-10)
    assert abs(a(4.0) - b(4.0)) < 10 * 1e-9


def test_flux_form_bessel():
    # (x u')' + x u = 0 is Bessel's equation of order 0
    s = EquationSpec(0, math.inf, "x", r="x")
    tr = integrate(s, 1.0, j0(1.0), -j1(1.0), 10.0, tol=1e-11)
    xs = np.linspace(1, 10, 50)
    assert np.max(np.abs(tr(xs) - j0(xs))) <= 1e-8
    assert np.max(np.abs(tr.deriv(xs) + j1(xs))) <= 1e-8


def test_flux_form_with_unit_r_matches_plain():
    plain = integrate(spec("1"), 0.0, 0.3, 1.0, 5.0)
    flux = integrate(EquationSpec(*LINE, "1", r="1 + 0*x"), 0.0, 0.3, 1.0, 5.0)
    assert abs(plain(5.0) - flux(5.0)) <= 1e-9


def test_nonpositive_r_is_hypothesis_error():
    with pytest.raises(HypothesisError):
        integrate(EquationSpec(*LINE, "1", r="x"), 1.0, 1.0, 0.0, -1.0)


def test_matched_ivp_same_equation_reproduces_u():
    s = spec("1")
    u = integrate_both(s, 1.0, math.sin(1.0), math.cos(1.0), 0.2, 2.9)
    v = matched_ivp(s, u, 1.5, 1e-10, 0.2, 2.9)
    xs = np.linspace(0.2, 2.9, 40)
    assert np.max(np.abs(v(xs) - u(xs))) <= 1e-8


def test_matched_ivp_cosine_oracle():
    s = EquationSpec(0, 1, "0")
    u = ClosedForm("1", s)
    v = matched_ivp(s.with_p("pi^2"), u, 0.5)
    xs = np.linspace(v.lo, v.hi, 50)
    assert np.max(np.abs(v(xs) - np.cos(np.pi * (xs - 0.5)))) <= 1e-8
    assert abs(v(v.lo)) < 1e-3 and abs(v(v.hi)) < 1e-3


def test_matched_ivp_requires_positive_u():
    s = spec("1")
    with pytest.raises(HypothesisError):
        matched_ivp(s, ClosedForm("-1", s), 0.0, lo=-1, hi=1)


def test_wronskian_examples():
    s = spec("1")
    sin = integrate_both(s, 1.0, math.sin(1), math.cos(1), 0.1, 3.0)
    cos = integrate_both(s, 1.0, math.cos(1), -math.sin(1), 0.1, 3.0)
    xs = np.linspace(0.1, 3.0, 30)
    assert np.max(np.abs(wronskian(sin, cos, xs) + 1)) <= 1e-8
    twice = integrate_both(s, 1.0, 2 * math.sin(1), 2 * math.cos(1), 0.1, 3.0)
    assert np.max(np.abs(wronskian(sin, twice, xs))) <= 1e-8
    m = spec("-1")
    ep, en = ClosedForm("exp(x)", m), ClosedForm("exp(-x)", m)
    assert wronskian(ep, en, 0.7) == pytest.approx(-2.0)
    with pytest.raises(CoverageError):
        wronskian(sin, cos, 5.0)


def test_wronskian_constancy_flux_form():
    s = EquationSpec(0, math.inf, "x", r="x")
    u = integrate(s, 1.0, 1.0, 0.0, 8.0)
    v = integrate(s, 1.0, 0.0, 1.0, 8.0)
    xs = np.linspace(1, 8, 60)
    w = wronskian(u, v, xs)
    assert np.max(np.abs(w - w[0])) <= 1e-6 * (1 + abs(w[0]))


def test_closed_form_residual():
    s = EquationSpec(-1, 1, "4*lam*(1-lam)/(1-x^2)^2", params={"lam": 0.3})
    u = ClosedForm("(1-x)^lam*(1+x)^(1-lam)", s)
    assert np.max(u.residual(np.linspace(-0.99, 0.99, 101))) <= 1e-10


def test_exports():
    tr = integrate(spec("1"), 0.0, 0.0, 1.0, 1.0)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "x,u,du"
    assert len(lines) == len(tr.x) + 1
    row = [float(t) for t in lines[5].split(",")]
    assert row == [tr.x[4], tr.u[4], tr.du[4]]
    doc = json.loads(tr.to_json())
    assert {"spec", "tol", "diagnostics", "samples", "initial"} <= set(doc)
    assert doc["spec"]["a"] == "-inf"


def test_trajectory_from_closed_form():
    s = EquationSpec(0, math.pi, "1")
    tr = Trajectory.from_solution(ClosedForm("sin(x)", s), s, np.linspace(0.1, 3, 200))
    assert abs(tr(1.234) - math.sin(1.234)) < 1e-10
    with pytest.raises(CoverageError):
        tr(3.1)
