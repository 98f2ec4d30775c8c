import math

import numpy as np
import pytest

from sturmsing import corpus
from sturmsing.errors import HypothesisError
from sturmsing.ode import ClosedForm, EquationSpec, integrate, integrate_both, matched_ivp
from sturmsing.oscillation import (
    FAIL_WITNESS,
    PASS,
    as_trajectory,
    check_comparison,
    check_separation,
    chebyshev_points,
    count_zeros,
    prufer,
)

FAM = corpus.get("lambda-family")


def sine_traj(lo=0.1, hi=3 * math.pi + 0.1):
    s = EquationSpec(-math.inf, math.inf, "1")
    return integrate_both(s, 1.0, math.sin(1), math.cos(1), lo, hi, tol=1e-11)


def test_prufer_sine_advance():
    tr = sine_traj()
    ph = prufer(tr)
    assert abs(ph.theta[0] - ph.theta[-1] + 0) == pytest.approx(3 * math.pi, abs=1e-6)
    assert np.allclose(ph.rho * np.sin(ph.theta), tr.u, atol=1e-12)
    assert np.allclose(ph.rho * np.cos(ph.theta), tr.du, atol=1e-12)


def test_prufer_constant():
    s = EquationSpec(0, 1, "0")
    ph = prufer(integrate(s, 0.5, 1.0, 0.0, 0.99))
    assert np.allclose(ph.theta, math.pi / 2)


def test_prufer_lambda_no_interior_zero():
    u1 = FAM.solution("u1")
    tr = as_trajectory(u1, lo=-0.999, hi=0.999)
    ph = prufer(tr)
    assert abs(ph.theta[-1] - ph.theta[0]) < math.pi


def test_prufer_trivial():
    s = EquationSpec(0, 1, "1")
    with pytest.raises(HypothesisError):
        prufer(integrate(s, 0.5, 0.0, 0.0, 0.9))


def test_count_zeros_sine():
    tr = sine_traj(0.05, 6.35)
    rep = count_zeros(tr, 0.1, 6.3)
    assert rep.count == 2 == rep.phase_count
    assert rep.locations[0] == pytest.approx(math.pi, abs=1e-9)
    assert rep.locations[1] == pytest.approx(2 * math.pi, abs=1e-9)
    scale = np.max(np.abs(tr.u))
    for z, (a, b) in zip(rep.locations, rep.brackets):
        assert a <= z <= b
        assert abs(tr(z)) <= 1e-8 * scale


def test_count_zeros_positive_constant():
    s = EquationSpec(0, 1, "0")
    tr = as_trajectory(ClosedForm("1", s))
    assert count_zeros(tr, 0.1, 0.9).count == 0


@pytest.mark.parametrize("name", sorted(corpus.ENTRIES))
def test_phase_count_matches_sign_changes(name):
    entry = corpus.get(name)
    spec = entry.spec()
    lo, hi = spec.truncated(1e-3, 10.0)
    for sol in entry.solutions:
        tr = as_trajectory(entry.solution(sol.name), spec, lo, hi)
        rep = count_zeros(tr, lo + 1e-3, hi - 1e-3)
        assert rep.count == rep.phase_count


def test_comparison_constant_coefficients():
    p = EquationSpec(0, math.pi, "1")
    P = p.with_p("4")
    v = check_comparison(p, P, ClosedForm("sin(x)", p))
    assert v.verdict == PASS
    assert len(v.zeros) >= 2


@pytest.mark.parametrize("pc,Pc", [(0.5, 1.0), (1.0, 2.5), (2.0, 3.0)])
def test_classical_comparison_sanity(pc, Pc):
    k = math.sqrt(pc)
    p = EquationSpec(0, math.pi / k, str(pc))
    u = ClosedForm(f"sin({k!r}*x)", p)
    assert check_comparison(p, p.with_p(str(Pc)), u).verdict == PASS


def test_comparison_failure_example():
    lam, mu = 0.25, 0.4
    p = FAM.spec({"lam": lam})
    P = FAM.spec({"lam": mu})
    u1 = FAM.solution("u1", {"lam": lam})
    v1 = FAM.solution("u1", {"lam": mu})
    v = check_comparison(p, P, u1, candidates=[v1])
    assert v.verdict == FAIL_WITNESS
    assert v.witness["margin"] > 0 and v.witness["min_value"] > 0
    # without a supplied candidate the slope sweep finds one
    assert check_comparison(p, P, u1).verdict == FAIL_WITNESS


def test_comparison_equal_coefficients_rejected():
    p = EquationSpec(0, math.pi, "1")
    with pytest.raises(HypothesisError):
        check_comparison(p, p.with_p("1"), ClosedForm("sin(x)", p))


def test_comparison_reversed_coefficients_rejected():
    p = EquationSpec(0, math.pi, "1")
    with pytest.raises(HypothesisError):
        check_comparison(p, p.with_p("0.5"), ClosedForm("sin(x)", p))


def test_comparison_principal_case():
    p = FAM.spec({"lam": 0.5})
    v = check_comparison(p, p.with_p(FAM.p + " + 0.1"), FAM.solution("u1", {"lam": 0.5}))
    assert v.verdict == PASS
    assert v.truncation


def test_separation_examples():
    s = EquationSpec(0, math.pi, "1")
    assert check_separation(s, ClosedForm("sin(x)", s)).verdict == PASS
    z = EquationSpec(0, 1, "0")
    res = check_separation(z, ClosedForm("1", z))
    assert res.verdict == FAIL_WITNESS
    assert res.witness["c2"] != 0 and res.witness["positivity_margin"] > 0
    q = FAM.spec({"lam": 0.25})
    assert check_separation(q, FAM.solution("u1")).verdict == FAIL_WITNESS
    h = FAM.spec({"lam": 0.5})
    assert check_separation(h, FAM.solution("u1", {"lam": 0.5})).verdict == PASS


def test_separation_needs_positive_u():
    s = EquationSpec(0, math.pi, "1")
    with pytest.raises(HypothesisError):
        check_separation(s, ClosedForm("cos(x)", s))


def test_matched_ivp_lambda_mu_zero():
    # the matched solution picks up a zero on the divergent (left) side; on
    # the convergent side the comparison theorem gives no zero
    p = FAM.spec({"lam": 0.25})
    P = FAM.spec({"lam": 0.4})
    u1 = FAM.solution("u1")
    v = matched_ivp(P, u1, 0.0, 1e-10, -1 + 1e-4, 1 - 1e-4)
    rep = count_zeros(v, v.lo, v.hi)
    assert rep.count == 1
    assert rep.locations[0] < 0


def test_chebyshev_points():
    xs = chebyshev_points(-1, 1, 10_000)
    assert len(xs) == 10_000
    assert np.all(np.diff(xs) > 0) and -1 < xs[0] and xs[-1] < 1
