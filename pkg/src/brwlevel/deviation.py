"""Lower-deviation rate constants for level sets of the branching random walk.

Every regime returns a :class:`DeviationResult` describing the scale on
which ``P(Z_n([theta x* n, inf)) < e^{a n})`` decays and the limiting
constant on that scale (always reported as a positive number).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateSpec, NoBracket, RegimeMismatch, UnsupportedRegime
from .rate_fn import RateFunction, x_star

INF = math.inf
GRID = 200
TOL = 1e-12


class Regime(str, Enum):
    SCHRODER_LIGHT = "SchroderLight"
    SCHRODER_PARETO = "SchroderPareto"
    SCHRODER_WEIBULL = "SchroderWeibull"
    BOTTCHER_BOUNDED = "BottcherBounded"
    BOTTCHER_WEIBULL = "BottcherWeibull"
    BOTTCHER_GUMBEL = "BottcherGumbel"
    BOTTCHER_PARETO = "BottcherPareto"


class ModelSpec:
    """Offspring law, step rate function, level ``theta`` and target exponent ``a``."""

    def __init__(self, off, step_or_rf, theta, a, validate=True):
        self.off = off
        self.rf = step_or_rf if isinstance(step_or_rf, RateFunction) else RateFunction(step_or_rf)
        self.step = self.rf.law
        self.theta = float(theta)
        self.a = float(a)
        self.log_m = math.log(off.m)
        self.x_star = x_star(off, self.rf)
        self.L = -self.step.ess_inf
        if validate:
            self.validate()

    def I(self, x):
        return self.rf(x)

    @property
    def upper_a(self):
        """log m - I(theta x*): the a.s. growth exponent of the level set."""
        return self.log_m - self.I(self.theta * self.x_star)

    @property
    def a_threshold(self):
        """log m - I(x*): where the c-hat branch starts."""
        return self.log_m - self.I(self.x_star)

    def validate(self):
        if not 0.0 <= self.theta < 1.0:
            raise ValueError(f"theta must lie in [0, 1), got {self.theta}")
        if not 0.0 <= self.a < self.upper_a:
            raise ValueError(f"a must lie in [0, {self.upper_a:.6g}), got {self.a}")

    def with_params(self, theta=None, a=None, validate=True):
        """Copy sharing the (cached) rate function."""
        new = object.__new__(ModelSpec)
        new.__dict__.update(self.__dict__)
        if theta is not None:
            new.theta = float(theta)
        if a is not None:
            new.a = float(a)
        if validate:
            new.validate()
        return new

    def to_dict(self):
        return {"offspring": self.off.to_dict(), "step": self.step.to_dict(),
                "theta": self.theta, "a": self.a}


@dataclass
class DeviationResult:
    regime: Regime
    scale: str
    constant: float
    branch: str = ""
    aux: dict = field(default_factory=dict)

    def to_dict(self):
        return {"regime": self.regime.value, "scale": self.scale, "constant": self.constant,
                "branch": self.branch, "aux": {k: v for k, v in sorted(self.aux.items())}}


# ---------------------------------------------------------------------------
# scalar search helpers
# ---------------------------------------------------------------------------

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_min(f, lo, hi, tol=1e-10):
    """Golden-section minimiser of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    best = min(cands, key=lambda p: p[0])
    return best[1], best[0]


def _last_nonneg(g, lo, hi, tol=TOL):
    """Largest point in [lo, hi] with g >= 0, for g >= 0 at lo and < 0 at hi
    and g decreasing."""
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# regime dispatch
# ---------------------------------------------------------------------------

def _left_light(step):
    left = step.left_abscissa
    if left >= 0:
        return False
    kappa = -1.0 if math.isinf(left) else 0.5 * left
    return math.isfinite(step.log_mgf(kappa))


def classify_regime(spec):
    step = spec.step
    if spec.off.p1 > 0:
        if _left_light(step):
            return Regime.SCHRODER_LIGHT
        if step.tail == "pareto":
            return Regime.SCHRODER_PARETO
        if step.tail == "weibull" and step.alpha < 1:
            return Regime.SCHRODER_WEIBULL
        raise UnsupportedRegime(f"p1 > 0 with left tail {step.tail!r} is not covered")
    if math.isfinite(step.ess_inf):
        return Regime.BOTTCHER_BOUNDED
    mapping = {"weibull": Regime.BOTTCHER_WEIBULL, "gumbel": Regime.BOTTCHER_GUMBEL,
               "pareto": Regime.BOTTCHER_PARETO}
    if step.tail in mapping:
        return mapping[step.tail]
    raise UnsupportedRegime(f"p1 = 0 with unbounded {step.family!r} steps is not covered")


def _require(spec, *regimes):
    reg = classify_regime(spec)
    if reg not in regimes:
        raise RegimeMismatch(f"operation needs {[r.value for r in regimes]}, spec is {reg.value}")
    return reg


# ---------------------------------------------------------------------------
# Schroder case, light tail
# ---------------------------------------------------------------------------

def f_rho(spec, rho):
    """log m - I(theta x*/(1-rho)) - a/(1-rho)."""
    u = 1.0 - rho
    val = spec.I(spec.theta * spec.x_star / u)
    if math.isinf(val):
        return -INF
    return spec.log_m - val - spec.a / u


def g_rho(spec, rho, h):
    u = 1.0 - rho
    val = spec.I((h + spec.theta * spec.x_star) / u)
    if math.isinf(val):
        return -INF
    return spec.log_m - val - spec.a / u


def rho_bar(spec):
    """Largest rho in (0, 1) with f(rho) >= 0."""
    if spec.theta == 0.0 and spec.a == 0.0:
        raise DegenerateSpec("theta = 0 and a = 0 leave f constant")
    if not f_rho(spec, 0.0) > 0:
        raise ValueError("need f(0) > 0")
    lo = 0.0
    for k in range(1, 64):
        hi = 1.0 - 2.0**-k
        if f_rho(spec, hi) < 0:
            break
        lo = hi
    else:
        raise NoBracket("f stays nonnegative up to rho = 1")
    return _last_nonneg(lambda r: f_rho(spec, r), lo, hi)


def d_of_rho(spec, rho):
    """Largest h >= 0 with g_rho(h) >= 0 (0 if g_rho(0) < 0)."""
    g = lambda h: g_rho(spec, rho, h)  # noqa: E731
    if g(0.0) < 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while g(hi) >= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e15:
            raise NoBracket("g_rho stays nonnegative")
    return _last_nonneg(g, lo, hi)


def schroder_objective(spec, rho):
    """rho log(1/p1) + rho I(-d(rho)/rho)."""
    d = d_of_rho(spec, rho)
    val = spec.I(-d / rho)
    if math.isinf(val):
        return INF
    return rho * (-math.log(spec.off.p1)) + rho * val


def schroder_light_rate(spec):
    _require(spec, Regime.SCHRODER_LIGHT)
    rbar = rho_bar(spec)
    grid = rbar * np.arange(1, GRID + 1) / GRID
    vals = np.array([schroder_objective(spec, r) for r in grid])
    i = int(np.argmin(vals))
    lo = grid[i - 1] if i > 0 else rbar * 1e-6
    hi = grid[i + 1] if i + 1 < GRID else rbar
    r_opt, v_opt = golden_min(lambda r: schroder_objective(spec, r), lo, hi, tol=1e-10)
    if vals[i] < v_opt:
        r_opt, v_opt = float(grid[i]), float(vals[i])
    return DeviationResult(Regime.SCHRODER_LIGHT, "n", float(v_opt), branch="variational",
                           aux={"rho_bar": rbar, "rho_opt": float(r_opt),
                                "d_opt": d_of_rho(spec, r_opt), "x_star": spec.x_star})


# ---------------------------------------------------------------------------
# c-hat and the heavy / Weibull regimes
# ---------------------------------------------------------------------------

def c_hat(spec):
    """Depth c with log m - I(theta x* + c) = a, or (1-theta) x* on the first branch."""
    full = (1.0 - spec.theta) * spec.x_star
    if spec.a <= spec.a_threshold:
        return full
    G = lambda c: spec.log_m - spec.I(spec.theta * spec.x_star + c) - spec.a  # noqa: E731
    if not (G(0.0) > 0 and G(full) < 0):
        raise NoBracket("G(0) > 0 > G((1-theta)x*) fails")
    return _last_nonneg(G, 0.0, full, tol=1e-13)


def _branch(spec):
    return "a<=logm-I(x*)" if spec.a <= spec.a_threshold else "a>logm-I(x*)"


def schroder_heavy_rate(spec):
    reg = _require(spec, Regime.SCHRODER_PARETO, Regime.SCHRODER_WEIBULL)
    step = spec.step
    if reg is Regime.SCHRODER_PARETO:
        return DeviationResult(reg, "log_n", step.alpha, branch="pareto", aux={"x_star": spec.x_star})
    c = c_hat(spec)
    return DeviationResult(reg, "n_alpha", step.lam * c, branch=_branch(spec),
                           aux={"c_hat": c, "x_star": spec.x_star, "alpha": step.alpha})


# ---------------------------------------------------------------------------
# Bottcher case, bounded tail
# ---------------------------------------------------------------------------

def a_star(spec, L=None):
    _require(spec, Regime.BOTTCHER_BOUNDED)
    L = spec.L if L is None else float(L)
    xs, th = spec.x_star, spec.theta
    first = (spec.a_threshold * (L + th * xs) / (L + xs)
             + ((1 - th) * xs / (L + xs)) * math.log(spec.off.b))
    return min(first, spec.upper_a)


def F_L(spec, c, L=None):
    L = spec.L if L is None else float(L)
    xs, th = spec.x_star, spec.theta
    val = spec.I((th * xs + L * c) / (1.0 - c))
    if math.isinf(val):
        return -INF
    return spec.log_m - val - (spec.a - c * math.log(spec.off.b)) / (1.0 - c)


def c_bar(spec, L=None):
    """Unique root of F_L on (0, (1-theta) x*/(L + x*))."""
    _require(spec, Regime.BOTTCHER_BOUNDED)
    L = spec.L if L is None else float(L)
    right = (1.0 - spec.theta) * spec.x_star / (L + spec.x_star)
    if spec.a < a_star(spec, L):
        raise ValueError("c_bar needs a >= a*")
    F = lambda c: F_L(spec, c, L)  # noqa: E731
    f0 = F(0.0)
    if not f0 > 0:
        raise NoBracket(f"F_L(0) = {f0} is not positive")
    grid = np.linspace(0.0, right, GRID + 1)
    for lo, hi in zip(grid[:-1], grid[1:]):
        if F(hi) < 0:
            return _last_nonneg(F, float(lo), float(hi), tol=1e-13)
    if abs(F(right)) <= 1e-12:
        return right
    raise NoBracket(f"F_L(right endpoint) = {F(right)} is not negative")


def c_star(spec, L=None):
    """Strategy horizon fraction: c-bar above a*, else (1-theta) x*/(L + x*)."""
    L = spec.L if L is None else float(L)
    if spec.a > a_star(spec, L) and a_star(spec, L) < spec.upper_a:
        return c_bar(spec, L)
    return (1.0 - spec.theta) * spec.x_star / (L + spec.x_star)


def bottcher_bounded_rate(spec):
    _require(spec, Regime.BOTTCHER_BOUNDED)
    astar = a_star(spec)
    log_b = math.log(spec.off.b)
    aux = {"a_star": astar, "x_star": spec.x_star, "L": spec.L}
    if spec.a > astar:
        cb = c_bar(spec)
        aux["c_bar"] = cb
        return DeviationResult(Regime.BOTTCHER_BOUNDED, "loglog_linear_n", cb * log_b, branch="a>=a*", aux=aux)
    frac = (1.0 - spec.theta) * spec.x_star / (spec.L + spec.x_star)
    return DeviationResult(Regime.BOTTCHER_BOUNDED, "loglog_linear_n", frac * log_b, branch="a<a*", aux=aux)


# ---------------------------------------------------------------------------
# Bottcher case, Weibull / Gumbel / Pareto tails
# ---------------------------------------------------------------------------

def weibull_prefactor(alpha, b):
    """``b`` for alpha <= 1, ``(b^{1/(alpha-1)} - 1)^{alpha-1}`` for alpha > 1."""
    if alpha <= 1:
        return float(b)
    u = math.log(b) / (alpha - 1.0)
    return b * math.exp((alpha - 1.0) * math.log1p(-math.exp(-u)))


def bottcher_weibull_rate(spec):
    _require(spec, Regime.BOTTCHER_WEIBULL)
    step = spec.step
    c = c_hat(spec)
    pref = weibull_prefactor(step.alpha, spec.off.b)
    C = pref * c**step.alpha
    return DeviationResult(Regime.BOTTCHER_WEIBULL, "n_alpha", step.lam * C, branch=_branch(spec),
                           aux={"C": C, "c_hat": c, "prefactor": pref, "alpha": step.alpha,
                                "x_star": spec.x_star})


def bottcher_remark_rates(spec):
    reg = _require(spec, Regime.BOTTCHER_GUMBEL, Regime.BOTTCHER_PARETO)
    step = spec.step
    b = spec.off.b
    if reg is Regime.BOTTCHER_PARETO:
        return DeviationResult(reg, "log_n", step.alpha * b, branch="pareto", aux={"x_star": spec.x_star})
    c = c_hat(spec)
    e = step.alpha / (1.0 + step.alpha)
    const = (e * math.log(b)) ** e * c**e
    return DeviationResult(reg, "loglog_n_power", const, branch=_branch(spec),
                           aux={"c_hat": c, "exponent": e, "x_star": spec.x_star})


def curve_points(spec, name, points=GRID):
    """Sample one of the curves ``f``, ``d`` (both over rho) or ``F_L`` (over c).

    Returns ``(xs, ys)``; ``f`` and ``d`` run over ``(0, rho_bar]`` and
    ``F_L`` over ``(0, (1-theta) x*/(L + x*)]``.
    """
    if name in ("f", "d"):
        top = rho_bar(spec)
        fn = (lambda r: f_rho(spec, r)) if name == "f" else (lambda r: d_of_rho(spec, r))  # noqa: E731
    elif name == "F_L":
        top = (1.0 - spec.theta) * spec.x_star / (spec.L + spec.x_star)
        fn = lambda c: F_L(spec, c)  # noqa: E731
    else:
        raise ValueError(f"unknown curve {name!r}; expected 'f', 'd' or 'F_L'")
    xs = top * np.arange(1, points + 1) / points
    return xs, np.array([fn(float(x)) for x in xs])


def dump_curve_csv(spec, name, path, points=GRID, preamble=""):
    xs, ys = curve_points(spec, name, points)
    var = "c" if name == "F_L" else "rho"
    with open(path, "w", newline="") as fh:
        fh.write(preamble)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([var, name])
        for x, y in zip(xs, ys):
            w.writerow([repr(float(x)), repr(float(y))])


_DISPATCH = {
    Regime.SCHRODER_LIGHT: schroder_light_rate,
    Regime.SCHRODER_PARETO: schroder_heavy_rate,
    Regime.SCHRODER_WEIBULL: schroder_heavy_rate,
    Regime.BOTTCHER_BOUNDED: bottcher_bounded_rate,
    Regime.BOTTCHER_WEIBULL: bottcher_weibull_rate,
    Regime.BOTTCHER_GUMBEL: bottcher_remark_rates,
    Regime.BOTTCHER_PARETO: bottcher_remark_rates,
}


def rate(spec):
    """Rate constant of the regime ``spec`` falls in."""
    return _DISPATCH[classify_regime(spec)](spec)
