"""Offspring and step laws for the branching random walk.

Step laws are always centred (mean exactly zero) and have a light right
tail.  The left tail can be bounded, Gaussian, or one of three exact
heavy/light families (Weibull, Pareto, Gumbel) glued onto a uniform core.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .errors import TiltOutsideDomain

INF = math.inf
_PROB_TOL = 1e-12


# ---------------------------------------------------------------------------
# offspring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support reproduction law ``{k: p_k}`` with ``p_0 = 0``."""

    probs: tuple

    def __init__(self, probs):
        if isinstance(probs, dict):
            items = probs.items()
        else:
            items = probs
        pairs = sorted((int(k), float(p)) for k, p in items if float(p) != 0.0)
        object.__setattr__(self, "probs", tuple(pairs))
        self._validate()

    def _validate(self):
        if not self.probs:
            raise ValueError("empty offspring law")
        total = sum(p for _, p in self.probs)
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"offspring probabilities sum to {total!r}, not 1")
        if any(p < 0 for _, p in self.probs):
            raise ValueError("negative offspring probability")
        if any(k < 0 for k, _ in self.probs):
            raise ValueError("negative offspring count")
        if self.pmf(0) > 0:
            raise ValueError("p_0 must be 0")
        if self.p1 >= 1.0:
            raise ValueError("p_1 must be < 1")
        if not self.m > 1.0:
            raise ValueError("mean offspring must exceed 1")

    @property
    def support(self):
        return np.array([k for k, _ in self.probs], dtype=np.int64)

    @property
    def weights(self):
        return np.array([p for _, p in self.probs])

    def pmf(self, k):
        for j, p in self.probs:
            if j == k:
                return p
        return 0.0

    @property
    def m(self):
        return math.fsum(k * p for k, p in self.probs)

    @property
    def b(self):
        return self.probs[0][0]

    @property
    def p1(self):
        return self.pmf(1)

    @property
    def pb(self):
        return self.pmf(self.b)

    def pgf(self, s):
        return sum(p * s**k for k, p in self.probs)

    def to_dict(self):
        return {str(k): p for k, p in self.probs}


def sample_offspring(law, rng, size=None):
    """Draw offspring counts from ``law``."""
    if len(law.probs) == 1:
        k = law.probs[0][0]
        return k if size is None else np.full(size, k, dtype=np.int64)
    return rng.choice(law.support, size=size, p=law.weights)


# ---------------------------------------------------------------------------
# step laws
# ---------------------------------------------------------------------------

class StepLaw:
    """Common interface of the step families.

    Subclasses provide ``log_mgf``, ``sample``, ``cdf_left`` and the
    support/abscissa metadata used by the rate-function engine.
    """

    family = "abstract"
    tail = "light"          # left-tail class: light, weibull, pareto, gumbel
    ess_inf = -INF
    ess_sup = INF
    right_abscissa = INF    # lambda* = sup{t >= 0 : Lambda(t) < inf}
    left_abscissa = -INF    # inf{t <= 0 : Lambda(t) < inf}

    def atom(self, x):
        return 0.0

    def lattice(self):
        """``(offset, span, pmf)`` if steps take values offset + span*j, else None."""
        return None

    def log_mgf(self, t):
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def cdf_left(self, y):
        """P(X <= y)."""
        raise NotImplementedError

    def log_cdf_left(self, y):
        p = self.cdf_left(y)
        return math.log(p) if p > 0 else -INF

    def mean(self):
        raise NotImplementedError

    def tilted(self, t):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


def _log_cosh(u):
    u = abs(u)
    return u + math.log1p(math.exp(-2.0 * u)) - math.log(2.0)


class DiscreteStep(StepLaw):
    """Finite-support step law, recentred to mean zero."""

    family = "finite"

    def __init__(self, points, center=True):
        pts = sorted((float(x), float(p)) for x, p in points if float(p) > 0)
        xs = np.array([x for x, _ in pts])
        ps = np.array([p for _, p in pts])
        if abs(ps.sum() - 1.0) > _PROB_TOL:
            raise ValueError("step probabilities must sum to 1")
        shift = float(np.dot(xs, ps)) if center else 0.0
        xs = xs - shift
        self.center_shift = -shift
        self.values = xs
        self.probs = ps / ps.sum()
        self._logp = np.log(self.probs)
        self.ess_inf = float(xs[0])
        self.ess_sup = float(xs[-1])
        if len(xs) < 2 or np.all(np.abs(xs) < 1e-300):
            raise ValueError("step law must not be degenerate at 0")
        self._raw = tuple(pts)
        self._centered = center

    def atom(self, x):
        hit = np.isclose(self.values, x, rtol=0, atol=1e-12 * max(1.0, abs(x)))
        return float(self.probs[hit].sum())

    def log_mgf(self, t):
        t = float(t)
        if t == 0.0:
            return 0.0      # exact; the summed log-probabilities can round to -1e-17
        z = t * self.values + self._logp
        zmax = z.max()
        return float(zmax + math.log(np.exp(z - zmax).sum()))

    def sample(self, rng, size=None):
        return rng.choice(self.values, size=size, p=self.probs)

    def cdf_left(self, y):
        return float(self.probs[self.values <= y + 1e-12 * max(1.0, abs(y))].sum())

    def mean(self):
        return float(np.dot(self.values, self.probs))

    def lattice(self):
        diffs = np.diff(self.values)
        span = 0.0
        for d in diffs:
            span = _float_gcd(span, float(d))
        if span <= 0:
            return None
        idx = (self.values - self.values[0]) / span
        if np.max(np.abs(idx - np.round(idx))) > 1e-8 or idx[-1] > 10_000:
            return None
        pmf = np.zeros(int(round(idx[-1])) + 1)
        pmf[np.round(idx).astype(int)] = self.probs
        return float(self.values[0]), span, pmf

    def tilted(self, t):
        return _DiscreteTilt(self, t)

    def to_dict(self):
        return {"family": "finite", "points": [[x, p] for x, p in self._raw]}


class Rademacher(DiscreteStep):
    """Symmetric two-point law on ``{-s, +s}``."""

    family = "rademacher"

    def __init__(self, s=1.0):
        if s <= 0:
            raise ValueError("s must be positive")
        self.s = float(s)
        super().__init__([(-s, 0.5), (s, 0.5)])

    def log_mgf(self, t):
        return _log_cosh(self.s * float(t))

    def lattice(self):
        return -self.s, 2.0 * self.s, np.array([0.5, 0.5])

    def to_dict(self):
        return {"family": "rademacher", "s": self.s}


def _float_gcd(a, b, tol=1e-9):
    a, b = abs(a), abs(b)
    while b > tol * max(1.0, a):
        a, b = b, math.fmod(a, b)
    return a


class Gaussian(StepLaw):
    family = "gaussian"

    def __init__(self, sigma=1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.center_shift = 0.0

    def log_mgf(self, t):
        return 0.5 * (self.sigma * float(t)) ** 2

    def sample(self, rng, size=None):
        return rng.normal(0.0, self.sigma, size)

    def cdf_left(self, y):
        return float(special.ndtr(y / self.sigma))

    def mean(self):
        return 0.0

    def tilted(self, t):
        return _GaussianTilt(self, t)

    def to_dict(self):
        return {"family": "gaussian", "sigma": self.sigma}


# ---------------------------------------------------------------------------
# exact-tail families: uniform core [c - x0, c + x0] plus analytic left tail
# ---------------------------------------------------------------------------

class _TailStep(StepLaw):
    """Left tail ``P(X <= -y) = S(y)`` for ``y >= x0`` glued to a uniform core.

    The core has mass ``1 - S(x0)`` and is centred at ``c > 0`` chosen so the
    total mean is exactly zero; the tail piece is left untouched.
    """

    def _setup(self, x0, q):
        self.x0 = float(x0)
        self.q = float(q)
        if self.x0 <= 0:
            raise ValueError("x0 must be positive")
        T = self.survival(self.x0)
        if not 0 < T < 1:
            raise ValueError(f"tail mass S(x0)={T!r} must lie in (0, 1)")
        self.tail_mass = T
        tail_mean = self.x0 * T + self._integrated_survival()
        self.core_center = tail_mean / (1.0 - T)
        self.center_shift = self.core_center
        self.core_lo = self.core_center - self.x0
        self.core_hi = self.core_center + self.x0
        self.ess_sup = self.core_hi
        self._mgf_cache = {}

    # subclass hooks, all in terms of y = -x >= x0
    def survival(self, y):
        raise NotImplementedError

    def log_density(self, y):
        raise NotImplementedError

    def _integrated_survival(self):
        val, _ = integrate.quad(self.survival, self.x0, INF, epsabs=1e-14, epsrel=1e-12, limit=200)
        return val

    def _sample_tail(self, rng, n):
        raise NotImplementedError

    def log_survival(self, y):
        s = self.survival(y)
        return math.log(s) if s > 0 else -INF

    # -- law interface ------------------------------------------------------
    def log_cdf_left(self, y):
        if y <= -self.x0:
            return self.log_survival(-y)
        return math.log(self.cdf_left(y))

    def cdf_left(self, y):
        if y <= -self.x0:
            return float(self.survival(-y))
        if y < self.core_lo:
            return self.tail_mass
        if y >= self.core_hi:
            return 1.0
        return self.tail_mass + (1.0 - self.tail_mass) * (y - self.core_lo) / (2.0 * self.x0)

    def mean(self):
        return (1.0 - self.tail_mass) * self.core_center - (self.x0 * self.tail_mass + self._integrated_survival())

    def sample(self, rng, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = rng.random(n)
        out = rng.uniform(self.core_lo, self.core_hi, n)
        tail = u < self.tail_mass
        k = int(tail.sum())
        if k:
            out[tail] = -self._sample_tail(rng, k)
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def _log_core_mgf(self, t):
        w = 2.0 * self.x0
        if t == 0:
            return 0.0
        if t > 0:
            return t * self.core_hi + math.log(-math.expm1(-t * w) / (t * w))
        return t * self.core_lo + math.log(math.expm1(t * w) / (t * w))

    def _log_tail_mgf(self, t):
        """log of int_{x0}^inf e^{-t y} f(y) dy (y = -x)."""
        return _log_integral(lambda y: -t * y + self.log_density(y), self.x0)

    def log_mgf(self, t):
        t = float(t)
        if t == 0.0:
            return 0.0
        if t < self.left_abscissa or (t == self.left_abscissa and not self._left_closed):
            return INF
        hit = self._mgf_cache.get(t)
        if hit is not None:
            return hit
        lc = math.log1p(-self.tail_mass) + self._log_core_mgf(t)
        lt = self._log_tail_mgf(t)
        val = float(np.logaddexp(lc, lt))
        if len(self._mgf_cache) < 200_000:
            self._mgf_cache[t] = val
        return val

    _left_closed = False

    def tilted(self, t):
        return _TailTilt(self, t)


class NegWeibullTail(_TailStep):
    """``P(X <= -y) = q exp(-lam * y**alpha)`` exactly for ``y >= x0``."""

    family = "neg_weibull"
    tail = "weibull"

    def __init__(self, lam, alpha, q, x0):
        if lam <= 0 or alpha <= 0:
            raise ValueError("lambda and alpha must be positive")
        self.lam = float(lam)
        self.alpha = float(alpha)
        if self.alpha > 1:
            self.left_abscissa = -INF
        elif self.alpha == 1:
            self.left_abscissa = -self.lam
        else:
            self.left_abscissa = 0.0
        self._setup(x0, q)

    def survival(self, y):
        return self.q * math.exp(-self.lam * y**self.alpha)

    def log_survival(self, y):
        return math.log(self.q) - self.lam * y**self.alpha

    def log_density(self, y):
        a = self.alpha
        return math.log(self.q * self.lam * a) + (a - 1) * math.log(y) - self.lam * y**a

    def _integrated_survival(self):
        a, lam = self.alpha, self.lam
        s = 1.0 / a
        return self.q * lam ** (-s) * s * special.gamma(s) * special.gammaincc(s, lam * self.x0**a)

    def _sample_tail(self, rng, n):
        e = rng.standard_exponential(n)
        return (self.x0**self.alpha + e / self.lam) ** (1.0 / self.alpha)

    def to_dict(self):
        return {"family": "neg_weibull", "lambda": self.lam, "alpha": self.alpha, "q": self.q, "x0": self.x0}


class NegParetoTail(_TailStep):
    """``P(X < -y) = q * y**(-alpha)`` exactly for ``y >= x0``; needs alpha > 1."""

    family = "neg_pareto"
    tail = "pareto"
    left_abscissa = 0.0

    def __init__(self, alpha, q, x0):
        if alpha <= 1:
            raise ValueError("Pareto exponent must exceed 1 so the step can be centred")
        self.alpha = float(alpha)
        self._setup(x0, q)

    def survival(self, y):
        return self.q * y ** (-self.alpha)

    def log_survival(self, y):
        return math.log(self.q) - self.alpha * math.log(y)

    def log_density(self, y):
        return math.log(self.q * self.alpha) - (self.alpha + 1) * math.log(y)

    def _integrated_survival(self):
        return self.q * self.x0 ** (1 - self.alpha) / (self.alpha - 1)

    def _log_tail_mgf(self, t):
        a, x0 = self.alpha, self.x0
        if t < 0:
            return INF
        kw = dict(epsabs=0.0, epsrel=1e-13, limit=200)
        if t * x0 <= 1.0:
            # y = x0 / u maps the tail onto (0, 1] with a smooth integrand
            f = lambda u: math.exp(-t * x0 / u) * u ** (a - 1) if u > 0 else 0.0  # noqa: E731
            val, _ = integrate.quad(f, 0.0, 1.0, **kw)
            return math.log(self.q * a) - a * math.log(x0) + math.log(val)
        # y = x0 + v / t pulls out exp(-t x0)
        f = lambda v: math.exp(-v) * (1.0 + v / (t * x0)) ** (-a - 1)  # noqa: E731
        val, _ = integrate.quad(f, 0.0, INF, **kw)
        return math.log(self.q * a) - a * math.log(x0) - t * x0 - math.log(t * x0) + math.log(val)

    def _sample_tail(self, rng, n):
        v = 1.0 - rng.random(n)
        return self.x0 * v ** (-1.0 / self.alpha)

    def to_dict(self):
        return {"family": "neg_pareto", "alpha": self.alpha, "q": self.q, "x0": self.x0}


class NegGumbelTail(_TailStep):
    """``P(X <= -y) = q exp(-exp(y**alpha))`` exactly for ``y >= x0``."""

    family = "neg_gumbel"
    tail = "gumbel"
    left_abscissa = -INF

    def __init__(self, alpha, x0, q=1.0):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)
        self._setup(x0, q)

    def survival(self, y):
        u = y**self.alpha
        if u > 700.0:
            return 0.0
        return self.q * math.exp(-math.exp(u))

    def log_density(self, y):
        a = self.alpha
        u = y**a
        if u > 700.0:
            return -INF
        return math.log(self.q * a) + (a - 1) * math.log(y) + u - math.exp(u)

    def _sample_tail(self, rng, n):
        v = 1.0 - rng.random(n)
        return np.log(math.exp(self.x0**self.alpha) - np.log(v)) ** (1.0 / self.alpha)

    def to_dict(self):
        return {"family": "neg_gumbel", "alpha": self.alpha, "x0": self.x0, "q": self.q}


def _log_integral(logf, a):
    """log of int_a^inf exp(logf(y)) dy for a unimodal log-integrand."""
    f_a = logf(a)
    h = 1e-7 * max(1.0, abs(a))
    if logf(a + h) <= f_a:
        mode = a
    else:
        hi = a + 1.0
        while logf(hi) > logf(a + (hi - a) / 2):
            hi = a + 2 * (hi - a)
            if hi - a > 1e8:
                break
        res = optimize.minimize_scalar(lambda y: -logf(y), bounds=(a, hi), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, hi)})
        mode = float(res.x)
    top = logf(mode)
    if not math.isfinite(top):
        return -INF
    d = 1e-9 * max(1.0, abs(mode))
    while logf(mode + d) > top - 40.0:
        d *= 2.0
        if d > 1e12:
            break

    def g(y):
        return math.exp(logf(y) - top)

    kw = dict(epsabs=1e-15, epsrel=1e-12, limit=400)
    total = 0.0
    if mode > a:
        total += integrate.quad(g, a, mode, **kw)[0]
    total += integrate.quad(g, mode, mode + d, **kw)[0]
    total += integrate.quad(g, mode + d, INF, **kw)[0]
    return top + math.log(total)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def sample_step(law, rng, size=None):
    return law.sample(rng, size)


def log_mgf(law, t):
    """Lambda(t) = log E[exp(t X)], ``inf`` outside the domain."""
    return law.log_mgf(t)


def log_mgf_derivative(law, t, h=None):
    """Centred finite difference of Lambda with step ``1e-5 * max(1, |t|)``.

    Next to a domain boundary (one neighbour infinite) a second-order
    one-sided difference is used instead.
    """
    if h is None:
        h = 1e-5 * max(1.0, abs(t))
    up, down = law.log_mgf(t + h), law.log_mgf(t - h)
    if math.isfinite(up) and math.isfinite(down):
        return (up - down) / (2.0 * h)
    mid = law.log_mgf(t)
    if math.isfinite(up):
        return (-3.0 * mid + 4.0 * up - law.log_mgf(t + 2 * h)) / (2.0 * h)
    if math.isfinite(down):
        return (3.0 * mid - 4.0 * down + law.log_mgf(t - 2 * h)) / (2.0 * h)
    return INF


def tilt(law, t):
    """Exponentially tilted law ``dP_t = exp(t x - Lambda(t)) dP``.

    Returns an object with ``sample(rng, size)``, ``log_ratio(x)`` (which is
    ``log dP_t/dP`` at ``x``) and ``log_norm`` (Lambda(t)).
    """
    val = law.log_mgf(t)
    if not math.isfinite(val):
        raise TiltOutsideDomain(f"Lambda({t}) is infinite for {law!r}")
    if t == 0:
        return _ZeroTilt(law)
    return law.tilted(t)


class _Tilt:
    def __init__(self, law, t):
        self.law = law
        self.t = float(t)
        self.log_norm = law.log_mgf(t)

    def log_ratio(self, x):
        return self.t * np.asarray(x) - self.log_norm

    def mean(self):
        return log_mgf_derivative(self.law, self.t)


class _ZeroTilt(_Tilt):
    def __init__(self, law):
        super().__init__(law, 0.0)

    def sample(self, rng, size=None):
        return self.law.sample(rng, size)


class _DiscreteTilt(_Tilt):
    def __init__(self, law, t):
        super().__init__(law, t)
        logw = t * law.values + law._logp - self.log_norm
        w = np.exp(logw)
        self.probs = w / w.sum()

    def sample(self, rng, size=None):
        return rng.choice(self.law.values, size=size, p=self.probs)


class _GaussianTilt(_Tilt):
    def sample(self, rng, size=None):
        s = self.law.sigma
        return rng.normal(s * s * self.t, s, size)


class _TailTilt(_Tilt):
    """Tilted core (truncated exponential) mixed with a tilted tail piece."""

    def __init__(self, law, t):
        super().__init__(law, t)
        lc = math.log1p(-law.tail_mass) + law._log_core_mgf(t)
        self.log_tail_z = law._log_tail_mgf(t)
        self.p_tail = math.exp(self.log_tail_z - self.log_norm)
        self.p_core = math.exp(lc - self.log_norm)
        if self.t < 0:
            self._setup_devroye()

    def _sample_core(self, rng, n):
        lo, hi, t = self.law.core_lo, self.law.core_hi, self.t
        w = hi - lo
        u = rng.random(n)
        if t > 0:
            return hi + np.log(u + (1 - u) * math.exp(-t * w)) / t
        return lo + np.log(1 - u + u * math.exp(t * w)) / t

    def _log_tail_pdf(self, y):
        return -self.t * y + self.law.log_density(y) - self.log_tail_z

    def _setup_devroye(self):
        law = self.law
        x0 = law.x0
        ys = x0 + np.geomspace(1e-6, 1e3, 400)
        grid = np.concatenate(([x0], ys))
        vals = np.array([self._log_tail_pdf(y) for y in grid])
        keep = np.isfinite(vals)
        grid, vals = grid[keep], vals[keep]
        # Devroye's envelope needs a log-concave tilted density
        slopes = np.diff(vals) / np.diff(grid)
        if np.any(np.diff(slopes) > 1e-6 * (1 + np.abs(slopes[1:]))):
            raise TiltOutsideDomain("negative tilt of a non log-concave tail is not supported")
        imax = int(np.argmax(vals))
        lo = grid[max(imax - 1, 0)]
        hi = grid[min(imax + 1, len(grid) - 1)]
        if imax == 0:
            self.mode = x0
        else:
            res = optimize.minimize_scalar(lambda y: -self._log_tail_pdf(y), bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-12})
            self.mode = float(res.x)
        self.peak = math.exp(self._log_tail_pdf(self.mode))

    def _sample_tail_tilted(self, rng, n):
        law, t = self.law, self.t
        out = np.empty(n)
        filled = 0
        if t > 0:
            # rejection from the untilted tail, acceptance exp(-t (y - x0))
            while filled < n:
                k = max(2 * (n - filled), 16)
                y = law._sample_tail(rng, k)
                keep = y[rng.random(k) < np.exp(-t * (y - law.x0))]
                take = min(len(keep), n - filled)
                out[filled:filled + take] = keep[:take]
                filled += take
            return out
        M, m = self.peak, self.mode
        while filled < n:
            k = max(4 * (n - filled), 16)
            half = rng.random(k) < 0.5
            z = np.where(half, rng.random(k), 1.0 + rng.standard_exponential(k))
            z = np.where(rng.random(k) < 0.5, z, -z)
            y = m + z / M
            env = np.minimum(1.0, np.exp(1.0 - np.abs(z)))
            ok = y >= law.x0
            logpdf = np.full(k, -INF)
            logpdf[ok] = [self._log_tail_pdf(v) for v in y[ok]]
            keep = y[rng.random(k) * env <= np.exp(logpdf) / M]
            take = min(len(keep), n - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out

    def sample(self, rng, size=None):
        n = 1 if size is None else int(np.prod(size))
        from_tail = rng.random(n) < self.p_tail
        out = self._sample_core(rng, n)
        k = int(from_tail.sum())
        if k:
            out[from_tail] = -self._sample_tail_tilted(rng, k)
        if size is None:
            return float(out[0])
        return out.reshape(size)


# ---------------------------------------------------------------------------
# construction from config dictionaries
# ---------------------------------------------------------------------------

def step_from_dict(d):
    d = dict(d)
    fam = d.pop("family")
    if fam == "rademacher":
        return Rademacher(d.get("s", 1.0))
    if fam == "finite":
        return DiscreteStep([tuple(p) for p in d["points"]])
    if fam == "gaussian":
        return Gaussian(d.get("sigma", 1.0))
    if fam == "neg_weibull":
        return NegWeibullTail(d["lambda"], d["alpha"], d["q"], d["x0"])
    if fam == "neg_pareto":
        return NegParetoTail(d["alpha"], d["q"], d["x0"])
    if fam == "neg_gumbel":
        return NegGumbelTail(d["alpha"], d["x0"], d.get("q", 1.0))
    raise ValueError(f"unknown step family {fam!r}")


def offspring_from_dict(d):
    return OffspringLaw({int(k): float(v) for k, v in d.items()})
