"""Zero counting through the Pruefer phase, and the two Sturm checkers.

With ``u = rho sin(theta)`` and ``r u' = rho cos(theta)`` the phase obeys
``theta' = cos^2(theta)/r + p sin^2(theta)``, which equals ``1/r > 0``
whenever ``u`` vanishes. Every zero is therefore a transversal upward
crossing of a multiple of pi, and the zero count over an interval is the
number of multiples of pi the lifted phase passes.

The checkers work on a truncation ``[a + eps, b - eps]`` of the open
interval. Zeros that lie beyond a cutoff are certified through the ratio
``w = v/u`` in the coordinate ``y = int dt/(r u^2)``: when ``P >= p`` the
function ``w(y)`` is concave, so its tangent at the cutoff bounds it from
above, and a tangent reaching zero inside the ``y``-range of the open
interval forces a zero of ``v``. Each verdict records which zeros were
located and which were certified this way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import HypothesisError, NumericalFailure, SturmError
from .ode import EquationSpec, Trajectory, integrate_both, matched_ivp
from .principality import (
    DIVERGENT,
    FINITE,
    PrincipalityReport,
    principality_report,
    ratio_coordinate,
)

PASS = "PASS"
FAIL_WITNESS = "FAIL-WITNESS"
INCONCLUSIVE = "INCONCLUSIVE"

HYPOTHESIS_POINTS = 10_000
SWEEP_MAGNITUDES = np.logspace(-3, 3, 61)
POSITIVITY_MARGIN = 1e-6
ZERO_XTOL = 1e-12


@dataclass(frozen=True)
class PruferPhase:
    x: np.ndarray
    theta: np.ndarray
    rho: np.ndarray


@dataclass
class ZeroReport:
    count: int
    locations: list
    brackets: list
    interval: tuple
    phase_count: int

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "locations": list(self.locations),
            "brackets": [list(b) for b in self.brackets],
            "interval": list(self.interval),
            "phase_count": self.phase_count,
        }


def as_trajectory(sol, spec=None, lo=None, hi=None, n=4001) -> Trajectory:
    """Sample a closed form onto a trajectory; trajectories pass through."""
    if isinstance(sol, Trajectory):
        return sol
    spec = spec or sol.spec
    if lo is None or hi is None:
        dlo, dhi = spec.truncated()
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
    return Trajectory.from_solution(sol, spec, np.linspace(lo, hi, n))


def prufer(traj: Trajectory) -> PruferPhase:
    """Continuous phase lift over the samples of ``traj``."""
    q = traj.flux()
    rho = np.hypot(traj.u, q)
    if np.max(rho) < 1e-300:
        raise HypothesisError("trivial solution: u and u' vanish identically")
    raw = np.arctan2(traj.u, q)
    step = np.angle(np.exp(1j * np.diff(raw)))
    if np.any(np.abs(step) >= math.pi):
        raise NumericalFailure("phase moved by pi or more within one step")
    theta = raw[0] + np.concatenate([[0.0], np.cumsum(step)])
    return PruferPhase(traj.x, theta, rho)


def phase_at(traj: Trajectory, phase: PruferPhase, x) -> float:
    """Lifted phase at an arbitrary covered point."""
    i = int(np.clip(np.searchsorted(phase.x, x, side="right") - 1, 0, len(phase.x) - 1))
    raw = math.atan2(float(traj(x)), float(traj.flux(x)))
    return float(phase.theta[i] + np.angle(np.exp(1j * (raw - phase.theta[i]))))


def count_zeros(traj, lo, hi) -> ZeroReport:
    """Zeros in ``(lo, hi)``, each refined to 1e-10 by bracketing."""
    traj = as_trajectory(traj, lo=lo, hi=hi)
    if not (traj.covers(lo) and traj.covers(hi)) or not lo < hi:
        raise ValueError(f"[{lo}, {hi}] is not inside the trajectory coverage")
    inner = traj.x[(traj.x > lo) & (traj.x < hi)]
    xs = np.concatenate([[lo], inner, [hi]])
    us = np.concatenate([[traj(lo)], traj(inner) if len(inner) else [], [traj(hi)]])
    locations, brackets = [], []
    for i in range(len(xs) - 1):
        a, b, ua, ub = xs[i], xs[i + 1], us[i], us[i + 1]
        if ua == 0.0 and 0 < i:
            locations.append(float(a))
            brackets.append((float(xs[i - 1]), float(b)))
        elif ua * ub < 0:
            z = brentq(lambda t: float(traj(t)), a, b, xtol=ZERO_XTOL, rtol=4 * np.finfo(float).eps)
            locations.append(float(z))
            brackets.append((float(a), float(b)))
    ph = prufer(traj)
    t_lo, t_hi = phase_at(traj, ph, lo), phase_at(traj, ph, hi)
    phase_count = int(math.floor(t_hi / math.pi) - math.floor(t_lo / math.pi))
    if traj(hi) == 0.0:
        phase_count -= 1
    return ZeroReport(len(locations), locations, brackets, (float(lo), float(hi)), phase_count)


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    verdict: str
    witness: dict = field(default_factory=dict)
    zeros: list = field(default_factory=list)
    hypothesis_checks: dict = field(default_factory=dict)
    truncation: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "witness": self.witness,
            "zeros": self.zeros,
            "hypothesis_checks": self.hypothesis_checks,
            "truncation": self.truncation,
            "diagnostics": self.diagnostics,
        }


def chebyshev_points(lo, hi, n=HYPOTHESIS_POINTS):
    k = np.arange(n)
    t = np.cos((2 * k + 1) * math.pi / (2 * n))[::-1]
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t


def _truncation(spec, u, lo, hi, eps, t_inf):
    dlo, dhi = spec.truncated(eps, t_inf)
    lo = max(dlo if lo is None else lo, u.lo)
    hi = min(dhi if hi is None else hi, u.hi)
    if isinstance(u, Trajectory):
        lo, hi = max(lo, u.lo), min(hi, u.hi)
    return float(lo), float(hi)


def _check_positive(u, xs, what="u"):
    vals = np.asarray(u(xs), dtype=float)
    if np.any(vals <= 0):
        bad = float(xs[np.argmax(vals <= 0)])
        raise HypothesisError(
            f"{what} is not positive on the interval (fails near x={bad!r}); "
            "restrict to a nodal subinterval"
        )


def _y_room(report: PrincipalityReport, side, y_cut, conservative):
    """y-distance from the cutoff to the end of the ratio range.

    ``conservative`` picks the smaller room, which keeps zero certificates
    sound; otherwise the larger one is returned.
    """
    rec = report.record(side)
    if rec.classification == DIVERGENT:
        return math.inf
    if rec.classification != FINITE:
        return None
    err = rec.error_bound or 0.0
    end = rec.value - err if conservative else rec.value + err
    return end - y_cut if side == "right" else y_cut + end


def _tangent_zero(v, u, report, side, x_cut, spec):
    """Where the tangent of ``w = v/u`` in ``y`` at the cutoff hits zero.

    Returns ``(needed, forced_room, outer_room, info)``: the y-distance
    beyond the cutoff at which the tangent vanishes (inf if it moves away
    from zero), then the room to the endpoint shrunk and grown by the
    error bound of the endpoint integral.
    """
    uc, vc = float(u(x_cut)), float(v(x_cut))
    w = vc / uc
    wy = float(spec.r_at(x_cut)) * (float(v.deriv(x_cut)) * uc - vc * float(u.deriv(x_cut)))
    heading = -wy if side == "right" else wy  # rate at which w falls going outward
    needed = w / heading if heading > 0 else math.inf
    y_cut = ratio_coordinate(u, report.x0, x_cut)
    return (needed, _y_room(report, side, y_cut, True), _y_room(report, side, y_cut, False),
            {"w": w, "w_y": wy, "y_cut": y_cut})


def check_coefficients(specp, specP, lo, hi):
    xs = chebyshev_points(lo, hi)
    p, P = specp.p_at(xs), specP.p_at(xs)
    gap = P - p
    slack = 1e-12 * (1 + np.abs(p))
    checks = {
        "points": int(len(xs)),
        "min_P_minus_p": float(np.min(gap)),
        "max_P_minus_p": float(np.max(gap)),
    }
    if np.any(gap < -slack):
        bad = float(xs[np.argmax(gap < -slack)])
        raise HypothesisError(f"P >= p fails near x={bad!r}")
    if np.all(gap <= slack):
        raise HypothesisError("P coincides with p on the sampled grid; P must differ from p")
    if specp.r != specP.r:
        raise HypothesisError("both equations must share the leading coefficient r")
    return xs, gap, checks


def _pick_c(xs, gap, c, default):
    positive = xs[gap > 1e-12]
    c = default if c is None else c
    if np.any(positive < c) and np.any(positive > c):
        return float(c)
    # move c so that P > p somewhere on both sides
    return float(np.median(positive))


def _side_zeros(v, u, report, side, lo, c, hi, spec):
    a, b = (lo, c) if side == "left" else (c, hi)
    zr = count_zeros(v, a, b)
    entries = [{"side": side, "x": z, "route": "located"} for z in zr.locations]
    if entries:
        return entries, zr
    x_cut = lo if side == "left" else hi
    needed, forced_room, _, info = _tangent_zero(v, u, report, side, x_cut, spec)
    if forced_room is not None and needed < forced_room:
        entries.append({
            "side": side,
            "route": "concavity bound beyond cutoff",
            "y_distance_at_most": needed,
            "y_room": forced_room,
            **info,
        })
    return entries, zr


def _is_witness(cand, u, report, lo, hi, spec):
    """Positive on the truncation, with margin, and not forced to vanish beyond it.

    Concavity only bounds ``w`` from above, so the tangent can rule a
    candidate out but never certify positivity past the cutoff.
    """
    xs = np.linspace(lo, hi, 2001)
    vals = np.asarray(cand(xs), dtype=float)
    if np.any(vals <= 0):
        return None
    rho = np.hypot(vals, np.asarray(spec.r_at(xs) * cand.deriv(xs), dtype=float))
    margin = POSITIVITY_MARGIN * float(np.max(rho))
    if min(float(cand(lo)), float(cand(hi))) < margin:
        return None
    info = {}
    for side, x_cut in (("left", lo), ("right", hi)):
        needed, forced_room, _, tinfo = _tangent_zero(cand, u, report, side, x_cut, spec)
        if forced_room is not None and needed < forced_room:
            return None
        info[side] = tinfo
    return {"min_value": float(np.min(vals)), "margin": margin, "tangents": info}


def check_comparison(specp: EquationSpec, specP: EquationSpec, u, lo=None, hi=None, *,
                     c=None, candidates=(), report=None, tol=1e-10, eps=1e-4, t_inf=20.0,
                     sweep=True) -> Verdict:
    """Does every solution of ``v'' + P v = 0`` vanish somewhere in (a, b)?

    PASS when the matched solution ``v(c) = u(c), v'(c) = u'(c)`` has a zero
    on each side of ``c`` (located, or certified beyond the cutoff); the
    classical separation theorem then gives every solution a zero.
    FAIL-WITNESS when some positive solution of the P-equation is exhibited
    instead; ``candidates`` may supply known ones, and a small sweep over
    initial slopes at ``c`` is tried too.
    """
    lo, hi = _truncation(specp, u, lo, hi, eps, t_inf)
    xs, gap, checks = check_coefficients(specp, specP, lo, hi)
    _check_positive(u, xs)
    report = report or principality_report(u, specp)
    c = _pick_c(xs, gap, c, report.x0 if lo < report.x0 < hi else 0.5 * (lo + hi))
    truncation = {"a_cut": lo, "b_cut": hi, "note": "theorem concerns the open interval; "
                  "zeros beyond the cutoffs are certified by the concavity bound"}
    base = dict(hypothesis_checks={**checks, "u_positive": True, "c": c},
                truncation=truncation)
    v = matched_ivp(specP, u, c, tol, lo, hi)
    zeros, diag = [], {"principality": {"L1": report.L1, "L2": report.L2}}
    for side in ("left", "right"):
        entries, zr = _side_zeros(v, u, report, side, lo, c, hi, specP)
        zeros += entries
        diag[f"{side}_phase_count"] = zr.phase_count
    sides = {z["side"] for z in zeros}
    ivp = {"c": c, "v": float(v(c)), "dv": float(v.deriv(c))}
    if sides == {"left", "right"}:
        return Verdict(PASS, {"ivp": ivp}, zeros, diagnostics=diag, **base)
    if report.undecided:
        diag["reason"] = "principality undecided; refusing to certify"
        return Verdict(INCONCLUSIVE, {"ivp": ivp}, zeros, diagnostics=diag, **base)
    pool = [("matched", v, ivp)] + [(f"candidate[{i}]", cnd, {"source": repr(cnd)})
                                    for i, cnd in enumerate(candidates)]
    if sweep:
        uc, duc = float(u(c)), float(u.deriv(c))
        for s in (0.0, 0.1, -0.1, 0.3, -0.3, 1.0, -1.0, 3.0, -3.0):
            if s * uc == duc:
                continue
            pool.append((f"slope {s}", None, {"c": c, "v": uc, "dv": s * uc}))
    for label, cand, info in pool:
        try:
            if cand is None:
                cand = integrate_both(specP, c, info["v"], info["dv"], lo, hi, tol)
            ok = _is_witness(cand, u, report, lo, hi, specP)
        except SturmError:
            ok = None
        if ok:
            return Verdict(FAIL_WITNESS, {"label": label, **info, **ok}, zeros,
                           diagnostics=diag, **base)
    return Verdict(INCONCLUSIVE, {"ivp": ivp}, zeros, diagnostics=diag, **base)


def check_separation(spec: EquationSpec, u, lo=None, hi=None, *, report=None,
                     eps=1e-4, t_inf=20.0, magnitudes=SWEEP_MAGNITUDES) -> Verdict:
    """Does every solution independent of ``u`` vanish in (a, b)?

    Independent solutions are ``u (c1 + c2 f)`` with ``f = int dt/u^2``; for
    ``c1 = 1`` a zero sits where ``f = -1/c2``. The sweep over ``c2/c1``
    uses 61 log-spaced magnitudes in [1e-3, 1e3] with both signs.
    """
    lo, hi = _truncation(spec, u, lo, hi, eps, t_inf)
    xs = chebyshev_points(lo, hi)
    _check_positive(u, xs)
    report = report or principality_report(u, spec)
    truncation = {"a_cut": lo, "b_cut": hi}
    f_lo = ratio_coordinate(u, report.x0, lo)
    f_hi = ratio_coordinate(u, report.x0, hi)
    diag = {"f_lo": f_lo, "f_hi": f_hi, "L1": report.L1, "L2": report.L2,
            "sweep": {"magnitudes": len(magnitudes), "min": float(magnitudes[0]),
                      "max": float(magnitudes[-1]), "signs": [1, -1]}}
    if report.undecided:
        diag["reason"] = "principality undecided; refusing to certify"
        return Verdict(INCONCLUSIVE, {}, [], truncation=truncation, diagnostics=diag)
    L1_in = _y_room(report, "left", 0.0, True)
    L1_out = _y_room(report, "left", 0.0, False)
    L2_in = _y_room(report, "right", 0.0, True)
    L2_out = _y_room(report, "right", 0.0, False)
    zeros = []
    for sign in (1.0, -1.0):
        for m in magnitudes:
            ratio = sign * float(m)
            fz = -1.0 / ratio
            if f_lo < fz < f_hi:
                zeros.append({"c2_over_c1": ratio, "f": fz, "route": "located"})
            elif -L1_in < fz < L2_in:
                zeros.append({"c2_over_c1": ratio, "f": fz, "route": "beyond cutoff"})
            elif fz <= -L1_out or fz >= L2_out:
                grid = np.linspace(lo, hi, 201)
                comb = 1.0 + ratio * np.array([ratio_coordinate(u, report.x0, x) for x in grid])
                # infimum of 1 + (c2/c1) f over the whole ratio range (-L1, L2)
                end = L1_out if ratio > 0 else L2_out
                witness = {"c1": 1.0, "c2": ratio,
                           "positivity_margin": float(np.min(comb * u(grid))),
                           "global_margin": 1.0 - abs(ratio) * end}
                return Verdict(FAIL_WITNESS, witness, zeros, truncation=truncation,
                               diagnostics=diag)
            else:
                diag["reason"] = f"c2/c1={ratio} is within the error bound of an endpoint"
                return Verdict(INCONCLUSIVE, {}, zeros, truncation=truncation,
                               diagnostics=diag)
    return Verdict(PASS, {}, zeros, truncation=truncation, diagnostics=diag)
