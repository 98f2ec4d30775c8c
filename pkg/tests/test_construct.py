import math

import mpmath
import numpy as np
import pytest

from sturmsing import corpus
from sturmsing import expr as ex
from sturmsing.construct import (
    BOTH_FINITE,
    LEFT_FINITE,
    RIGHT_FINITE,
    ComposedMap,
    SchwarzianMap,
    build_comparison_counterexample,
    build_separation_counterexample,
    chuaqui_counterexample,
    compose_schwarzian,
    generator,
    relative_convexity_check,
    schwarzian,
    steinmetz_counterexample,
)
from sturmsing.errors import HypothesisError, RefusalError
from sturmsing.ode import ClosedForm, EquationSpec, matched_ivp
from sturmsing.oscillation import chebyshev_points
from sturmsing.principality import principality_report

FAM = corpus.get("lambda-family")
UNIT = EquationSpec(0, 1, "0")
ONE = ClosedForm("1", UNIT)


def lam_case(lam):
    spec = FAM.spec({"lam": lam})
    u = FAM.solution("u1", {"lam": lam})
    return spec, u


def test_schwarzian_of_expressions():
    assert schwarzian("x", 0.3) == 0.0
    xs = np.linspace(-1.2, 1.2, 9)
    assert np.allclose(schwarzian("tan(x)", xs), 2.0, atol=1e-12)
    assert np.allclose(schwarzian("(2*x+1)/(x+3)", xs + 2), 0.0, atol=1e-12)
    with pytest.raises(HypothesisError):
        schwarzian("x^2", 0.0)


@pytest.mark.parametrize("lam", [0.1, 0.25, 0.4])
def test_map_schwarzian_is_twice_p(lam):
    spec, u = lam_case(lam)
    f = SchwarzianMap(u, spec)
    xs = chebyshev_points(-1 + 1e-3, 1 - 1e-3, 100)
    err = np.abs(f.schwarzian(xs) - 2 * spec.p_at(xs))
    assert np.all(err <= 1e-6 * (1 + np.abs(spec.p_at(xs))))


def test_map_schwarzian_high_precision_oracle():
    # independent route: f by mpmath quadrature, Sf by mpmath differentiation
    lam = 0.25
    spec, u = lam_case(lam)
    f = SchwarzianMap(u, spec)
    mpmath.mp.dps = 30

    def F(x):
        return mpmath.quad(lambda t: (1 - t) ** (-2 * lam) * (1 + t) ** (2 * lam - 2), [0, x])

    for x in (-0.7, 0.2, 0.9):
        d1 = 1 / ((1 - mpmath.mpf(x)) ** (2 * lam) * (1 + mpmath.mpf(x)) ** (2 - 2 * lam))
        d2, d3 = (mpmath.diff(lambda t: F(t), x, n) for n in (2, 3))
        S = float(d3 / d1 - 1.5 * (d2 / d1) ** 2)
        assert float(f(x)) == pytest.approx(float(F(x)), rel=1e-10, abs=1e-12)
        assert float(f.schwarzian(x)) == pytest.approx(S, rel=1e-8)


def test_map_range_matches_report():
    spec, u = lam_case(0.25)
    f = SchwarzianMap(u, spec)
    rep = f.report
    assert f.range[0] == -math.inf
    assert f(f.hi) == pytest.approx(rep.L2, abs=1e-2)
    xs = np.linspace(f.lo, f.hi, 500)
    assert np.all(np.diff(f(xs)) > 0) and np.all(f.df(xs) > 0)
    y = f(xs[1:-1])
    assert np.allclose(f.inverse(y), xs[1:-1], rtol=0, atol=1e-10)


@pytest.mark.parametrize("case,L1,L2", [(BOTH_FINITE, 0.5, 0.5), (BOTH_FINITE, 0.3, 2.0),
                                         (LEFT_FINITE, 0.7, math.inf),
                                         (RIGHT_FINITE, math.inf, 1.3)])
def test_generator_witness(case, L1, L2):
    g = generator(case, L1, L2)
    lo = -L1 if math.isfinite(L1) else -50.0
    hi = L2 if math.isfinite(L2) else 50.0
    t = np.linspace(lo, hi, 203)[1:-1]
    w = g.witness(t)
    R = ex.evaluate(g.R, t, g.binding) + 0.0 * t
    assert np.all(w > 0) and np.all(R > 0)
    b = g.binding
    w2 = ex.evaluate(ex.diff(ex.diff(g.w)), t, b)
    assert np.max(np.abs(w2 + R * w)) <= 1e-8
    g1, _, _ = g.derivatives(t)
    assert np.all(g1 > 0)
    assert np.all(g.schwarzian(t) > 0)
    # Sg is twice R and matches the symbolic Schwarzian of g
    assert np.allclose(g.schwarzian(t), 2 * R, rtol=1e-12)
    assert np.allclose(schwarzian(g.g, t, b), g.schwarzian(t), rtol=1e-9)
    with pytest.raises(HypothesisError):
        g(hi + 1.0 if math.isfinite(L2) else lo - 1.0)


def _corpus_case(case):
    if case == BOTH_FINITE:
        return UNIT, ONE
    if case == RIGHT_FINITE:
        return lam_case(0.25)
    e = corpus.get("constant-minus-one")
    return e.spec(), e.solution("exp-neg")


@pytest.mark.parametrize("case", [BOTH_FINITE, LEFT_FINITE, RIGHT_FINITE])
def test_composition_law(case):
    spec, u = _corpus_case(case)
    f = SchwarzianMap(u, spec)
    rep = f.report
    g = generator(case, rep.L1, rep.L2)
    xs = chebyshev_points(f.lo, f.hi, 100)
    direct = ComposedMap(g, f).schwarzian(xs)
    law = compose_schwarzian(g, f, xs)
    assert np.max(np.abs(direct - law)) <= 1e-6 * max(1.0, 1e-8 * np.max(np.abs(law)))
    assert np.all(law > f.schwarzian(xs))


def test_schwarzian_builder_unit():
    res = build_comparison_counterexample(UNIT, ONE)
    assert res.case == BOTH_FINITE
    assert np.max(np.abs(res.P_values - math.pi ** 2)) <= 1e-9
    assert res.residual_max <= 1e-8
    expect = np.sqrt(1 / math.pi) * np.sin(math.pi * res.x)
    assert np.allclose(res.v_values, expect, rtol=1e-10)
    assert res.positivity_margin > 0 and res.min_P_minus_p > 0


def test_schwarzian_builder_lambda_quarter():
    spec, u = lam_case(0.25)
    res = build_comparison_counterexample(spec, u)
    assert res.case == RIGHT_FINITE
    assert res.residual_max <= 1e-6
    assert np.all(res.v_values > 0) and res.min_P_minus_p > 0
    f = res.v.f
    x = res.x
    bump = f.df(x) ** 2 / (4 * (res.L2 - f(x)) ** 2)
    assert np.allclose(res.P_values - spec.p_at(x), bump, rtol=1e-9)
    # the constructed v really solves its equation: compare with an IVP
    inner = x[(x > -0.9) & (x < 0.9)]
    assert res.v.ode_discrepancy(inner) <= 1e-8


def test_schwarzian_builder_left_finite():
    e = corpus.get("constant-minus-one")
    res = build_comparison_counterexample(e.spec(), e.solution("exp-neg"))
    assert res.case == LEFT_FINITE
    assert res.residual_max <= 1e-6 and res.positivity_margin > 0


def test_chuaqui_unit():
    res = chuaqui_counterexample(UNIT, ONE)
    k = res.parameters["k"]
    assert k == pytest.approx(0.9 * math.pi)
    assert np.allclose(res.P_values, k * k, rtol=1e-14)
    assert np.max(np.abs(res.v_values - np.cos(k * (res.x - 0.5)))) <= 1e-8
    assert res.residual_max <= 1e-8
    with pytest.raises(HypothesisError):
        chuaqui_counterexample(UNIT, ONE, k=math.pi)


def test_chuaqui_change_of_variables():
    s = EquationSpec(0.2, 2.5, "1")
    u = ClosedForm("sin(x)", s)
    res = chuaqui_counterexample(s, u)
    f = res.v.f
    k = res.parameters["k"]
    assert np.max(np.abs(res.v_values / u(res.x) - np.cos(k * f(res.x)))) <= 1e-8
    assert res.residual_max <= 1e-6


def test_chuaqui_needs_both_finite():
    spec, u = lam_case(0.25)
    with pytest.raises(RefusalError):
        chuaqui_counterexample(spec, u)


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_steinmetz_exponentials(alpha):
    e = corpus.get("constant-minus-one")
    res = steinmetz_counterexample(e.spec(), e.solution("exp"), alpha=alpha,
                                   u2=e.solution("exp-neg"))
    assert res.parameters["wronskian"] == pytest.approx(-2.0)
    assert np.allclose(res.P_values, -1 + 4 * alpha * (1 - alpha), rtol=1e-12)
    assert np.allclose(res.v_values, np.exp((2 * alpha - 1) * res.x), rtol=1e-12)
    assert res.residual_max <= 1e-12


def test_steinmetz_default_c_and_bounds():
    res = steinmetz_counterexample(UNIT, ONE)
    assert res.parameters["c"] == pytest.approx(1.8)
    assert res.min_P_minus_p > 0 and res.residual_max <= 1e-8
    res = steinmetz_counterexample(UNIT, ONE, c=0.9)
    x = res.x
    expect = np.sqrt(1 - 0.9 * (x - 0.5))
    assert np.allclose(res.v_values, expect, rtol=1e-12)
    with pytest.raises(HypothesisError):
        steinmetz_counterexample(UNIT, ONE, c=2.5)
    with pytest.raises(HypothesisError):
        steinmetz_counterexample(UNIT, ONE, alpha=1.0)


def test_separation_counterexamples():
    res = build_separation_counterexample(UNIT, ONE)
    assert res.c2 / res.c1 == pytest.approx(0.5)
    assert np.allclose(res.v_values, 1 + 0.5 * (res.x - 0.5), rtol=1e-12)
    spec, u = lam_case(0.25)
    res = build_separation_counterexample(spec, u)
    lo, hi = res.admissible
    assert lo < res.c2 < 0 and hi == math.inf
    assert res.positivity_margin > 0


@pytest.mark.parametrize("name,solution,params", [
    ("lambda-family", "u1", {"lam": 0.5}),
    ("constant-one", "sin", None),
    ("constant-pi2", "sin", None),
    ("euler", "upper", {"c": 0.25}),
])
def test_refusal_completeness(name, solution, params):
    entry = corpus.get(name)
    spec, u = entry.spec(params), entry.solution(solution, params)
    assert principality_report(u, spec).principal is True
    for build in (build_comparison_counterexample, chuaqui_counterexample,
                  steinmetz_counterexample, build_separation_counterexample):
        with pytest.raises(RefusalError):
            build(spec, u)


def test_convexity_trivial_and_sine():
    rep = relative_convexity_check(ONE, ONE, UNIT, UNIT)
    assert rep.concave and rep.max_second_difference == 0.0
    v = ClosedForm("sin(pi*x)", UNIT.with_p("pi^2"))
    rep = relative_convexity_check(ONE, v, UNIT, UNIT.with_p("pi^2"))
    assert rep.concave and rep.min_second_difference < 0


def test_convexity_lambda_mu():
    p, u1 = lam_case(0.25)
    P = FAM.spec({"lam": 0.4})
    v1 = FAM.solution("u1", {"lam": 0.4})
    assert relative_convexity_check(u1, v1, p, P).concave


def test_convexity_rejects_P_below_p():
    v = ClosedForm("exp(x)/2 + exp(-x)/2", UNIT.with_p("-1"))
    with pytest.raises(HypothesisError):
        relative_convexity_check(ONE, v, UNIT, UNIT.with_p("-1"))


def test_convexity_matched_ivp_principal():
    p, u = lam_case(0.5)
    P = p.with_p(FAM.p + " + 0.1")
    v = matched_ivp(P, u, 0.0, 1e-12, -0.2, 0.2)
    assert relative_convexity_check(u, v, p, P).concave


def test_result_json_shape():
    d = build_comparison_counterexample(UNIT, ONE).to_dict()
    assert {"case", "P", "v", "L1", "L2", "residual_max", "positivity_margin"} <= set(d)
    assert len(d["P"]["grid"]["x"]) == len(d["v"]["grid"]["v"])
