"""Legendre transform of the step log-MGF and the speed of the walk front."""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass
from enum import Enum

from scipy import optimize

from .distributions import log_mgf_derivative
from .errors import ClassificationInconclusive

INF = math.inf


class Case(str, Enum):
    STEEP = "SteepTail"                                    # Lambda' -> inf at lambda*
    INFINITE_LAMBDA = "InfiniteLambdaFiniteSlope"          # lambda* = inf, Lambda' -> ess sup
    FINITE_LAMBDA = "FiniteLambdaFiniteSlope"              # lambda* < inf, Lambda' -> T


@dataclass(frozen=True)
class Classification:
    case: Case
    lambda_star: float
    T: float | None
    ess_sup: float


def _probe(law, lam_star, levels):
    """Decide whether Lambda' converges along a grid approaching lambda*."""
    if math.isinf(lam_star):
        lams = [2.0**k for k in range(levels + 1)]
    else:
        lams = [lam_star * (1.0 - 2.0 ** (-k)) for k in range(1, levels + 1)]
    slopes = [log_mgf_derivative(law, lam) for lam in lams]
    d1 = slopes[-1] - slopes[-2]
    d0 = slopes[-2] - slopes[-3]
    scale = max(1.0, abs(slopes[-1]))
    if abs(d1) <= 1e-10 * scale:
        return "converge", slopes[-1]
    r = d1 / d0 if d0 != 0 else INF
    if 0 <= r < 0.75:
        return "converge", slopes[-1] + d1 * r / (1.0 - r)
    if r > 0.9:
        return "diverge", INF
    return None, None


def classify(law):
    """Sort a step law into the three shapes of the rate function.

    Lambda' is probed by centred finite differences on two grids of
    different depth; both must agree.
    """
    lam_star = law.right_abscissa
    v1, lim1 = _probe(law, lam_star, 12)
    v2, lim2 = _probe(law, lam_star, 18)
    if v1 is None or v1 != v2:
        raise ClassificationInconclusive(f"probes disagree for {law!r}: {v1} vs {v2}")
    if v1 == "diverge":
        return Classification(Case.STEEP, lam_star, None, law.ess_sup)
    if math.isinf(lam_star):
        top = law.ess_sup
        if math.isinf(top):
            top = lim2
        elif abs(lim2 - top) > 1e-3 * max(1.0, abs(top)):
            raise ClassificationInconclusive(f"Lambda' limit {lim2} disagrees with ess sup {top}")
        return Classification(Case.INFINITE_LAMBDA, lam_star, None, top)
    return Classification(Case.FINITE_LAMBDA, lam_star, lim2, law.ess_sup)


def _edge(x, edge):
    return math.isfinite(edge) and abs(x - edge) <= 1e-12 * max(1.0, abs(edge))


class RateFunction:
    """Cramer rate function ``I(x) = sup_t {t x - Lambda(t)}`` of a step law.

    Evaluations are memoised; the cache can be dumped as an ``(x, I(x))``
    table.
    """

    def __init__(self, law, classification=None):
        self.law = law
        info = classification or classify(law)
        self.case = info.case
        self.lambda_star = info.lambda_star
        self.T = info.T
        self.ess_sup = info.ess_sup
        self.ess_inf = law.ess_inf
        self._cache = {}
        self._lock = threading.Lock()

    def __call__(self, x):
        return self.legendre(x)

    def legendre(self, x):
        x = float(x)
        with self._lock:
            hit = self._cache.get(x)
        if hit is not None:
            return hit
        val = self._compute(x)
        with self._lock:
            self._cache[x] = val
        return val

    def _compute(self, x):
        law = self.law
        if x == 0.0:
            return 0.0
        if _edge(x, self.ess_sup):
            p = law.atom(self.ess_sup)
            return -math.log(p) if p > 0 else INF
        if _edge(x, self.ess_inf):
            p = law.atom(self.ess_inf)
            return -math.log(p) if p > 0 else INF
        if x > self.ess_sup or x < self.ess_inf:
            return INF
        if x > 0:
            if self.lambda_star == 0.0:
                return 0.0
            lo, hi = self._bracket(x, self.lambda_star, +1)
        else:
            if law.left_abscissa == 0.0:
                return 0.0
            lo, hi = self._bracket(x, law.left_abscissa, -1)

        def neg(t):
            v = law.log_mgf(t)
            if not math.isfinite(v):
                return 1e300
            return v - t * x

        res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12, "maxiter": 500})
        best = -float(res.fun)
        # the optimum may sit on the closed boundary of the domain (case iii)
        for t in (lo, hi):
            v = law.log_mgf(t)
            if math.isfinite(v):
                best = max(best, t * x - v)
        return max(best, 0.0)

    def _bracket(self, x, abscissa, sign):
        """Interval of t containing the maximiser of t x - Lambda(t)."""
        if math.isfinite(abscissa):
            return (0.0, abscissa) if sign > 0 else (abscissa, 0.0)
        t = 1.0
        while t < 2.0**62:
            slope = log_mgf_derivative(self.law, sign * t)
            if (sign > 0 and slope > x) or (sign < 0 and slope < x):
                break
            t *= 2.0
        inner = t / 2.0 if t > 1.0 else 0.0
        return (inner, t) if sign > 0 else (-t, -inner)

    def table(self):
        with self._lock:
            return sorted(self._cache.items())

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "I"])
            for x, v in self.table():
                w.writerow([repr(x), repr(v)])


def legendre(rf, x):
    return rf.legendre(x)


def x_star(off, rf, tol=1e-13):
    """Speed ``sup{x >= 0 : I(x) <= log m}`` by bisection."""
    log_m = math.log(off.m)
    if log_m <= 0:
        raise ValueError("need log m > 0")
    top = rf.ess_sup
    if math.isfinite(top) and rf(top) <= log_m * (1 + 1e-15):
        return top
    lo, hi = 0.0, 1.0
    while rf(hi) <= log_m:
        lo = hi
        hi *= 2.0
        if math.isfinite(top) and hi >= top:
            hi = top
            break
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if rf(mid) <= log_m:
            lo = mid
        else:
            hi = mid
    return lo
