"""Finite-or-divergent classification of the endpoint integrals of 1/u^2.

For a positive solution ``u`` and an interior base point ``x0`` the two
integrals ``L1 = int_a^x0 dt/u^2`` and ``L2 = int_x0^b dt/u^2`` decide
whether ``u`` is principal at ``a`` and at ``b``: divergence means
principal.

The integrals are computed on a geometric ladder of cutoffs approaching
the endpoint (``a + eps_k`` with ``eps_{k+1} = eps_k / 4``; ``T_k = 2^k``
for infinite ends). Consecutive increments ``d_k = I_{k+1} - I_k`` of the
three growth models all behave like ``rho^(-kappa k)``:

* ``C + A eps^-q``  (power divergence)      kappa = q > 0
* ``C + A log(1/eps)``  (log divergence)    kappa = 0
* ``C - A eps^s``  (convergence)            kappa = -s < 0

so the model is read off a straight-line fit of ``log d_k``. A convergent
tail is summed as a geometric series (Richardson extrapolation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as spi

from .errors import HypothesisError, NumericalFailure
from .ode import Trajectory, wronskian

FINITE = "FINITE"
DIVERGENT = "DIVERGENT"
UNDECIDED = "UNDECIDED"

LEFT = "left"
RIGHT = "right"

LADDER_RATIO = 0.25
INF_LADDER_RATIO = 0.5
RUNGS = 8
MIN_RUNGS = 6
FIT_RESIDUAL = 1e-3
# |kappa| below KAPPA_LOG reads as log growth, above KAPPA_BAND as a power;
# the band in between is UNDECIDED
KAPPA_LOG = 1e-3
KAPPA_BAND = 1e-2
QUAD_REL = 1e-11

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


@dataclass
class EndpointRecord:
    endpoint: str
    classification: str
    value: float | None = None
    error_bound: float | None = None
    model: str = "none"
    exponent: float | None = None
    residual: float | None = None
    rungs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "classification": self.classification,
            "value": self.value,
            "error_bound": self.error_bound,
            "model": self.model,
            "exponent": self.exponent,
            "residual": self.residual,
            "rungs": [{"eps": e, "I": i} for e, i in self.rungs],
        }


@dataclass
class PrincipalityReport:
    x0: float
    left: EndpointRecord
    right: EndpointRecord

    def record(self, endpoint) -> EndpointRecord:
        return self.left if endpoint == LEFT else self.right

    @property
    def L1(self) -> float | None:
        """Left integral: its value, ``inf`` if divergent, None if undecided."""
        return _extent(self.left)

    @property
    def L2(self) -> float | None:
        return _extent(self.right)

    @property
    def principal(self) -> bool | None:
        """True iff both ends diverge; None if either end is undecided."""
        kinds = {self.left.classification, self.right.classification}
        if UNDECIDED in kinds:
            return None
        return kinds == {DIVERGENT}

    @property
    def undecided(self) -> bool:
        return UNDECIDED in (self.left.classification, self.right.classification)

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
            "principal": self.principal,
        }


def _extent(rec: EndpointRecord):
    if rec.classification == FINITE:
        return rec.value
    if rec.classification == DIVERGENT:
        return math.inf
    return None


# ---------------------------------------------------------------------------
# quadrature of 1/u^2


def _gl(fn, lo, hi):
    """12-point Gauss-Legendre on each of the intervals [lo_i, hi_i]."""
    lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = fn(pts.ravel()).reshape(pts.shape)
    return half * (vals @ _GL_WEIGHTS)


def _inv_u2(u):
    spec = getattr(u, "spec", None)
    flux = spec is not None and spec.flux_form

    def f(x):
        v = np.asarray(u(x), dtype=float)
        if np.any(v <= 0):
            raise HypothesisError("u vanishes or changes sign in the integration range")
        return 1.0 / (v * v * spec.r_at(x)) if flux else 1.0 / (v * v)
    return f


def inverse_square_integral(u, lo, hi, rel=QUAD_REL) -> float:
    """``int_lo^hi dt / u(t)^2`` for ``lo < hi`` (``dt / (r u^2)`` in flux form).

    Trajectories are integrated cell by cell with Gauss-Legendre, which is
    exact to rounding for the smooth per-cell interpolant; closed forms go
    through adaptive quadrature.
    """
    if hi <= lo:
        return 0.0
    f = _inv_u2(u)
    if isinstance(u, Trajectory):
        inner = u.x[(u.x > lo) & (u.x < hi)]
        edges = np.concatenate([[lo], inner, [hi]])
        return float(np.sum(_gl(f, edges[:-1], edges[1:])))
    value, err = spi.quad(lambda t: float(f(t)), lo, hi, epsabs=0.0, epsrel=rel, limit=500)
    if not math.isfinite(value):
        return math.inf
    if err > max(1e-9 * abs(value), 1e-300) and err > 1e-13:
        raise NumericalFailure(f"quadrature did not converge on [{lo}, {hi}] (err {err:g})")
    return float(value)


# ---------------------------------------------------------------------------
# ladders


def epsilon_ladder(spec, endpoint, x0, rungs=RUNGS, ratio=None):
    """Cutoff offsets for a finite endpoint, or cutoffs T_k for an infinite one.

    Finite: ``eps_k = min(0.1, (b-a)/100) * 4^-k``. Infinite:
    ``T_k = 2^k max(1, |x0|)`` for ``k = 1..rungs``.
    """
    end = spec.a if endpoint == LEFT else spec.b
    if math.isfinite(end):
        ratio = LADDER_RATIO if ratio is None else ratio
        width = spec.b - spec.a if math.isfinite(spec.b - spec.a) else math.inf
        start = min(0.1, width / 100, 0.5 * abs(x0 - end))
        return [start * ratio ** k for k in range(rungs)]
    ratio = INF_LADDER_RATIO if ratio is None else ratio
    base = max(1.0, abs(x0))
    return [base / ratio ** k for k in range(1, rungs + 1)]


def _cutoff(spec, endpoint, e):
    end = spec.a if endpoint == LEFT else spec.b
    if math.isfinite(end):
        return end + e if endpoint == LEFT else end - e
    return -e if endpoint == LEFT else e


def ratio_coordinate(u, x0, x) -> float:
    """Signed ``f(x) = int_x0^x dt / u^2``, the ratio of two solutions."""
    if x >= x0:
        return inverse_square_integral(u, x0, x)
    return -inverse_square_integral(u, x, x0)


def tail_integrals(u, spec, endpoint, x0, epsilons) -> list[float]:
    """Partial integrals of 1/u^2 from ``x0`` out to each cutoff.

    Rungs beyond the coverage of a trajectory are dropped, so the result may
    be shorter than ``epsilons``.
    """
    if not spec.contains(x0):
        raise ValueError("x0 must be interior")
    cuts = [_cutoff(spec, endpoint, e) for e in epsilons]
    steps = np.diff(cuts)
    if endpoint == LEFT and np.any(steps >= 0) or endpoint == RIGHT and np.any(steps <= 0):
        raise ValueError("cutoffs must approach the endpoint monotonically")
    total, out, prev = 0.0, [], x0
    for c in cuts:
        if c < u.lo or c > u.hi:
            break
        piece = (inverse_square_integral(u, c, prev) if endpoint == LEFT
                 else inverse_square_integral(u, prev, c))
        total += piece
        out.append(total)
        prev = c
    return out


# ---------------------------------------------------------------------------
# classification


def _line_fit(y, ratio=None):
    t = np.arange(len(y), dtype=float)
    cols = [np.ones_like(t), t]
    if ratio is not None:
        # analytic first-order correction, proportional to the ladder variable
        cols.append(ratio ** t)
    A = np.vstack(cols).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return coef, float(np.sqrt(np.mean(res ** 2)))


def growth_exponent(values, ratio, tail=5, corrected=False):
    """Fit ``log`` of increments of a sequence sampled on a geometric ladder.

    Returns ``(kappa, residual, increments)`` with increments of the ladder
    variable shrinking by ``ratio`` per rung; kappa is in units of that
    variable's exponent. ``corrected`` adds a term linear in the ladder
    variable, absorbing the leading analytic correction to a pure power.
    """
    d = np.diff(np.asarray(values, dtype=float))
    if len(d) < 2 or np.any(d <= 0):
        return None, None, d
    y = np.log(d[-tail:])
    coef, res = _line_fit(y, ratio if corrected and len(y) > 3 else None)
    return float(coef[1] / math.log(1.0 / ratio)), res, d


def classify(tails, epsilons, endpoint=RIGHT, ratio=None) -> EndpointRecord:
    """Classify an endpoint from its tail integrals.

    Needs at least six rungs on a geometric ladder. FINITE records carry the
    extrapolated value and an error bound; DIVERGENT ones the fitted growth
    exponent (0 for logarithmic growth); UNDECIDED ones just the rungs.
    """
    n = len(tails)
    rungs = [(float(e), float(i)) for e, i in zip(epsilons, tails)]
    rec = EndpointRecord(endpoint, UNDECIDED, rungs=rungs)
    if n < MIN_RUNGS:
        return rec
    if ratio is None:
        ratio = epsilons[1] / epsilons[0]
        if ratio > 1:
            ratio = 1.0 / ratio
    I = np.asarray(tails, dtype=float)
    if not np.all(np.isfinite(I)):
        rec.classification, rec.model = DIVERGENT, "exponential"
        return rec
    d = np.diff(I)
    scale = max(abs(I[-1]), 1e-300)
    if np.any(d < -1e-12 * scale):
        return rec
    # increments below quadrature resolution: converged faster than any power
    if d[-1] <= 1e-13 * scale and np.all(np.diff(d) <= 1e-13 * scale):
        rec.classification, rec.model = FINITE, "converged"
        rec.value = float(I[-1])
        rec.error_bound = float(max(2 * d[-1], 1e-11 * scale))
        rec.residual = 0.0
        return rec
    kappa, res, d = growth_exponent(I, ratio, corrected=True)
    if kappa is None:
        return rec
    rec.residual, rec.exponent = res, kappa
    q = d[1:] / d[:-1]
    if res >= FIT_RESIDUAL:
        tail_q = q[-4:]
        if np.all(tail_q > 1) and np.all(np.diff(tail_q) > 0):
            rec.classification, rec.model = DIVERGENT, "exponential"
        elif np.all(tail_q < 1) and np.all(np.diff(tail_q) < 0) and d[-1] < 1e-6 * scale:
            rec.classification, rec.model = FINITE, "converged"
            rec.value = float(I[-1] + d[-1])
            rec.error_bound = float(d[-1] + 1e-11 * scale)
        return rec
    if abs(kappa) <= KAPPA_LOG:
        rec.classification, rec.model, rec.exponent = DIVERGENT, "log", 0.0
    elif kappa >= KAPPA_BAND:
        rec.classification, rec.model = DIVERGENT, "power"
    elif kappa <= -KAPPA_BAND:
        # geometric tail summed with the most asymptotic increment ratio
        # (Aitken); the previous ratio gives the error estimate
        r = min(q[-1], 1 - 1e-12)
        r_prev = min(q[-2], 1 - 1e-12)
        tail = d[-1] * r / (1 - r)
        alt = d[-1] * r_prev / (1 - r_prev)
        rec.classification, rec.model, rec.exponent = FINITE, "power", -kappa
        rec.value = float(I[-1] + tail)
        rec.error_bound = float(abs(tail - alt) + 1e-10 * scale)
    return rec


def endpoint_record(u, spec, endpoint, x0, rungs=RUNGS) -> EndpointRecord:
    eps = epsilon_ladder(spec, endpoint, x0, rungs)
    tails = tail_integrals(u, spec, endpoint, x0, eps)
    return classify(tails, eps[: len(tails)], endpoint)


def principality_report(u, spec, x0=None, rungs=RUNGS) -> PrincipalityReport:
    x0 = spec.default_x0() if x0 is None else x0
    return PrincipalityReport(
        float(x0),
        endpoint_record(u, spec, LEFT, x0, rungs),
        endpoint_record(u, spec, RIGHT, x0, rungs),
    )


def is_principal_both_ends(spec, u, x0=None, rungs=RUNGS):
    """Return ``(principal, report)``; ``principal`` is None when undecided."""
    report = principality_report(u, spec, x0, rungs)
    return report.principal, report


# ---------------------------------------------------------------------------
# ratio criterion


def _decade(u, uhat, spec, endpoint, points=7):
    """Sample points over the last decade of approach, ordered toward the end."""
    end = spec.a if endpoint == LEFT else spec.b
    lo, hi = max(u.lo, uhat.lo), min(u.hi, uhat.hi)
    x0 = spec.default_x0()
    if math.isfinite(end):
        eps_min = epsilon_ladder(spec, endpoint, x0)[-1]
        reach = (lo - end) if endpoint == LEFT else (end - hi)
        delta = max(eps_min, reach * (1 + 1e-12))
        offsets = delta * 10.0 ** (np.arange(points - 1, -1, -1) / (points - 1))
        return end + offsets if endpoint == LEFT else end - offsets
    t_max = epsilon_ladder(spec, endpoint, x0)[-1]
    t_max = min(t_max, -lo if endpoint == LEFT else hi)
    mags = t_max * 10.0 ** (-np.arange(points - 1, -1, -1) / (points - 1))
    return -mags if endpoint == LEFT else mags


def principal_ratio_check(u, uhat, endpoint, spec=None, points=7):
    """Does ``u / uhat`` tend to 0 at ``endpoint``?

    True when ``|u/uhat|`` decreases monotonically over the last decade of
    approach and ``|uhat/u|`` grows without a convergent geometric tail;
    False otherwise; None when the growth fit sits in the ambiguous band.
    """
    spec = spec or u.spec
    lo, hi = max(u.lo, uhat.lo), min(u.hi, uhat.hi)
    mid = 0.5 * (lo + hi) if math.isfinite(lo + hi) else spec.default_x0()
    w = float(wronskian(u, uhat, mid))
    size = abs(float(u(mid))) * abs(float(uhat.deriv(mid))) + abs(float(u.deriv(mid))) * abs(float(uhat(mid)))
    if abs(w) <= 1e-9 * max(size, 1e-300):
        raise HypothesisError("u and uhat are linearly dependent (Wronskian vanishes)")
    xs = _decade(u, uhat, spec, endpoint, points)
    uh = np.asarray(uhat(xs), dtype=float)
    if np.any(uh == 0) or np.any(np.sign(uh) != np.sign(uh[0])):
        raise HypothesisError("uhat vanishes near the endpoint; retry with another IVP")
    ratio = np.abs(np.asarray(u(xs), dtype=float) / uh)
    if not np.all(np.diff(ratio) < 0):
        return False
    recip = 1.0 / ratio
    kappa, res, _ = growth_exponent(recip, 10.0 ** (-1.0 / (points - 1)), tail=points - 1)
    if kappa is None:
        return False
    if kappa > -0.02:
        return True
    if kappa < -0.05:
        return False
    return None
