"""Branching random walk simulation and walk/branching-process oracles.

Two engines produce generation-by-generation level-set counts:

* ``particle``: the literal definition, one array entry per particle;
* ``cohort``: lattice steps only; counts per lattice site evolve by
  multinomial draws, and sites whose count exceeds ``mean_field_threshold``
  evolve by their expectation with stochastic rounding.

Both run many replicas at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .distributions import DiscreteStep, log_mgf_derivative, tilt
from .errors import EmptyLevelSet, NonLatticeStep, PopulationCapExceeded, TiltOutsideDomain
from .rng import as_generator

DEFAULT_CAP = 20_000_000
MEAN_FIELD_THRESHOLD = 1_000_000


class Level:
    """Moving threshold ``theta * x_star * n + shift``."""

    def __init__(self, theta, x_star, shift=0.0):
        self.theta = float(theta)
        self.x_star = float(x_star)
        self.shift = float(shift)
        self.key = self.theta if self.shift == 0.0 else (self.theta, self.shift)

    def __call__(self, n):
        return self.theta * self.x_star * n + self.shift

    def __repr__(self):
        return f"Level(theta={self.theta}, x_star={self.x_star}, shift={self.shift})"


class Fixed:
    """Constant threshold ``y``."""

    def __init__(self, y):
        self.y = float(y)
        self.key = ("y", self.y)

    def __call__(self, n):
        return self.y


def _as_thresholds(thresholds):
    out = []
    for thr in thresholds or ():
        out.append(thr if callable(thr) else Fixed(thr))
    return out


@dataclass
class GenerationRecord:
    n: int
    total: float
    level_counts: dict = field(default_factory=dict)
    mode: str = "exact_particles"

    @property
    def log_total(self):
        return math.log(self.total) if self.total > 0 else -math.inf

    def count(self, key):
        return self.level_counts[key]


@dataclass
class BatchResult:
    """Per-replica totals ``(reps, n+1)`` and level counts ``(reps, n+1, k)``."""

    totals: np.ndarray
    counts: np.ndarray
    keys: list
    modes: list

    def records(self, rep=0):
        out = []
        for n in range(self.totals.shape[1]):
            lc = {k: float(self.counts[rep, n, i]) for i, k in enumerate(self.keys)}
            out.append(GenerationRecord(n, float(self.totals[rep, n]), lc, self.modes[n]))
        return out


# ---------------------------------------------------------------------------
# particle engine
# ---------------------------------------------------------------------------

def _particle_batch(off, step, n_max, thr, reps, rng, initial=1):
    pos = np.zeros(reps * initial)
    rep = np.repeat(np.arange(reps), initial)
    k = len(thr)
    totals = np.zeros((reps, n_max + 1))
    counts = np.zeros((reps, n_max + 1, k))
    support, weights = off.support, off.weights
    deterministic = len(support) == 1

    def record(n):
        totals[:, n] = np.bincount(rep, minlength=reps)
        for i, f in enumerate(thr):
            y = f(n)
            counts[:, n, i] = np.bincount(rep, weights=(pos >= y - 1e-9 * max(1.0, abs(y))), minlength=reps)

    record(0)
    for n in range(1, n_max + 1):
        if deterministic:
            kids = np.full(len(pos), support[0])
        else:
            kids = rng.choice(support, size=len(pos), p=weights)
        pos = np.repeat(pos, kids)
        rep = np.repeat(rep, kids)
        pos = pos + step.sample(rng, len(pos))
        record(n)
    return totals, counts


# ---------------------------------------------------------------------------
# lattice cohort engine
# ---------------------------------------------------------------------------

def _round_stochastic(x, rng):
    fl = np.floor(x)
    frac = x - fl
    return fl + (rng.random(x.shape) < frac)


def _cohort_batch(off, step, n_max, thr, reps, rng, mean_field_threshold, stochastic_rounding, initial=1):
    lat = step.lattice()
    if lat is None:
        raise NonLatticeStep(f"{step!r} is not supported on a lattice")
    offset, span, pmf = lat
    K = len(pmf)
    support = off.support.astype(float)
    weights = off.weights
    m = off.m
    deterministic = len(support) == 1
    cnt = np.full((reps, 1), float(initial))
    k = len(thr)
    totals = np.zeros((reps, n_max + 1))
    counts = np.zeros((reps, n_max + 1, k))
    modes = []

    def rnd(x):
        return _round_stochastic(x, rng) if stochastic_rounding else x

    def record(n, c):
        totals[:, n] = c.sum(axis=1)
        for i, f in enumerate(thr):
            y = f(n)
            jmin = math.ceil((y - n * offset) / span - 1e-9)
            jmin = max(jmin, 0)
            counts[:, n, i] = c[:, jmin:].sum(axis=1) if jmin < c.shape[1] else 0.0

    record(0, cnt)
    modes.append("lattice_cohort")
    for n in range(1, n_max + 1):
        S = cnt.shape[1]
        big = cnt > mean_field_threshold
        small = (cnt > 0) & ~big
        used_mf = bool(big.any())
        # branching
        if deterministic:
            kids = cnt * support[0]
        else:
            kids = np.zeros_like(cnt)
            if small.any():
                draws = rng.multinomial(cnt[small].astype(np.int64), weights)
                kids[small] = draws @ support
            if used_mf:
                kids[big] = rnd(cnt[big] * m)
        # displacement
        new = np.zeros((reps, S + K - 1))
        big = kids > mean_field_threshold
        small = (kids > 0) & ~big
        if big.any():
            used_mf = True
            mf = np.where(big, kids, 0.0)
            for i in range(K):
                new[:, i:i + S] += mf * pmf[i]
            if stochastic_rounding:
                new = np.where(new > 0, _round_stochastic(new, rng), new)
        if small.any():
            r_idx, s_idx = np.nonzero(small)
            draws = rng.multinomial(kids[small].astype(np.int64), pmf)
            flat = (r_idx * (S + K - 1) + s_idx)[:, None] + np.arange(K)[None, :]
            new += np.bincount(flat.ravel(), weights=draws.ravel().astype(float),
                               minlength=reps * (S + K - 1)).reshape(reps, S + K - 1)
        cnt = new
        modes.append("mean_field" if used_mf else "lattice_cohort")
        record(n, cnt)
    return totals, counts, modes


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def run_brw_batch(off, step, n_max, thresholds=(), reps=1, rng=None, mode="particle",
                  cap=DEFAULT_CAP, mean_field_threshold=MEAN_FIELD_THRESHOLD, stochastic_rounding=True,
                  initial=1):
    """Simulate ``reps`` independent replicas for ``n_max`` generations.

    Each replica starts from ``initial`` particles at the origin.
    """
    rng = as_generator(rng)
    thr = _as_thresholds(thresholds)
    keys = [getattr(f, "key", i) for i, f in enumerate(thr)]
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    if mode == "particle":
        expected = initial * off.m**n_max
        if expected > cap:
            raise PopulationCapExceeded(f"expected population {expected:.3g} exceeds cap {cap:.3g}")
        chunk = max(1, int(cap // max(expected, 1.0)))
        tots, cnts = [], []
        for start in range(0, reps, chunk):
            t, c = _particle_batch(off, step, n_max, thr, min(chunk, reps - start), rng, initial)
            tots.append(t)
            cnts.append(c)
        return BatchResult(np.concatenate(tots), np.concatenate(cnts), keys, ["exact_particles"] * (n_max + 1))
    if mode == "cohort":
        lat = step.lattice()
        if lat is None:
            raise NonLatticeStep(f"{step!r} is not supported on a lattice")
        sites = n_max * (len(lat[2]) - 1) + 1
        chunk = max(1, 4_000_000 // sites)
        tots, cnts, modes = [], [], None
        for start in range(0, reps, chunk):
            t, c, md = _cohort_batch(off, step, n_max, thr, min(chunk, reps - start), rng,
                                     mean_field_threshold, stochastic_rounding, initial)
            tots.append(t)
            cnts.append(c)
            modes = md if modes is None else [a if a == "mean_field" else b for a, b in zip(modes, md)]
        return BatchResult(np.concatenate(tots), np.concatenate(cnts), keys, modes)
    raise ValueError(f"unknown mode {mode!r}")


def run_brw(off, step, n_max, thresholds=(), mode="particle", rng=None, **kw):
    """One replica; returns a list of :class:`GenerationRecord` for n = 0..n_max."""
    return run_brw_batch(off, step, n_max, thresholds, 1, rng, mode, **kw).records(0)


def particle_positions(off, step, n, rng=None, reps=1, cap=DEFAULT_CAP):
    """Generation-``n`` positions of ``reps`` replicas: ``(positions, replica_ids)``."""
    rng = as_generator(rng)
    if reps * off.m**n > cap:
        raise PopulationCapExceeded(f"expected population {reps * off.m**n:.3g} exceeds cap")
    pos = np.zeros(reps)
    rep = np.arange(reps)
    for _ in range(n):
        kids = rng.choice(off.support, size=len(pos), p=off.weights)
        pos = np.repeat(pos, kids)
        rep = np.repeat(rep, kids)
        pos = pos + step.sample(rng, len(pos))
    return pos, rep


def upper_lattice(step, h, tail_mass=1e-13):
    """Lattice law dominating ``step``: every value is rounded up to ``h Z``.

    Mass below the point where ``P(X <= -R) < tail_mass`` is lumped at ``-R``
    (also a rounding up).  The result is not recentred.
    """
    top = math.ceil(step.ess_sup / h - 1e-12)
    if math.isfinite(step.ess_inf):
        bottom = math.ceil(step.ess_inf / h - 1e-12)
    else:
        R = 1.0
        while step.cdf_left(-R) > tail_mass:
            R *= 1.25
        bottom = math.ceil(-R / h)
    grid = np.arange(bottom, top + 1) * h
    cdf = np.array([step.cdf_left(y) for y in grid])
    cdf[-1] = 1.0
    probs = np.diff(np.concatenate(([0.0], cdf)))
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    return DiscreteStep(list(zip(grid, probs)), center=False)


def prob_level_below(off, step, generations, y, bound, reps, rng=None, h=0.05,
                     mean_field_threshold=MEAN_FIELD_THRESHOLD, initial=1):
    """Direct MC of ``P(Z_g([y, inf)) < bound)`` from ``initial`` particles at 0.

    Lattice steps are simulated exactly; other steps through
    :func:`upper_lattice`, which can only raise level counts, so the returned
    probability stays a lower estimate.
    """
    rng = as_generator(rng)
    law = step if step.lattice() is not None else upper_lattice(step, h)
    if generations == 0:
        count = initial if 0.0 >= y else 0
        return (1.0 if count < bound else 0.0), 0.0
    res = run_brw_batch(off, law, generations, [Fixed(y)], reps, rng, "cohort",
                        mean_field_threshold=mean_field_threshold, initial=initial)
    final = res.counts[:, -1, 0]
    ind = (final < bound).astype(float)
    p = float(ind.mean())
    se = float(ind.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return p, se


def walk_pmf(step, n):
    """Exact lattice distribution of ``S_n``: returns (offset, span, pmf)."""
    lat = step.lattice()
    if lat is None:
        raise NonLatticeStep(f"{step!r} is not supported on a lattice")
    offset, span, pmf = lat
    out = np.array([1.0])
    for _ in range(n):
        out = np.convolve(out, pmf)
    return n * offset, span, out


def expected_level_count(off, step, n, y):
    """``m^n P(S_n >= y)``, exact on a lattice."""
    off0, span, pmf = walk_pmf(step, n)
    j = max(math.ceil((y - off0) / span - 1e-9), 0)
    return off.m**n * float(pmf[j:].sum())


# ---------------------------------------------------------------------------
# Biggins growth slope
# ---------------------------------------------------------------------------

def biggins_slope(records, theta, window):
    """Least-squares slope of ``log Z_n([theta x* n, inf))`` over ``window``."""
    n_lo, n_hi = window
    sel = [r for r in records if n_lo <= r.n <= n_hi]
    if len(sel) < 2 or sel[-1].n < n_hi:
        raise ValueError(f"window {window} not covered by records")
    ns = np.array([r.n for r in sel], dtype=float)
    cs = np.array([r.level_counts[theta] for r in sel], dtype=float)
    if np.any(cs <= 0):
        raise EmptyLevelSet(f"level set at theta={theta} is empty inside window {window}")
    slope, _ = np.polyfit(ns, np.log(cs), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Galton-Watson generating function
# ---------------------------------------------------------------------------

@dataclass
class GWDistribution:
    """Law of ``|Z_n|`` on ``{0..cap}`` plus the mass above ``cap``."""

    n: int
    probs: np.ndarray
    overflow: float

    def prob_below(self, a):
        """``P(|Z_n| < a)`` for ``a <= cap + 1``."""
        k = math.ceil(a)
        if k > len(self.probs):
            raise ValueError("threshold exceeds truncation cap")
        return float(self.probs[:k].sum())

    def pgf(self, s):
        """``E[s^{|Z_n|}]``; the overflow contributes at most ``s^{cap+1}``."""
        ks = np.arange(len(self.probs))
        return float(np.dot(self.probs, s**ks)) + self.overflow * s ** len(self.probs)


def gw_pgf_iterate(off, n, cap):
    """Distribution of ``|Z_n|`` by iterating ``f_n = f(f_{n-1})`` on truncated vectors."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    vec = np.zeros(cap + 1)
    vec[1] = 1.0
    kmax = max(k for k, _ in off.probs)
    for _ in range(n):
        new = np.zeros(cap + 1)
        power = vec.copy()
        for k in range(1, kmax + 1):
            pk = off.pmf(k)
            if pk:
                new += pk * power
            if k < kmax:
                power = np.convolve(power, vec)[:cap + 1]
        vec = new
    overflow = max(0.0, 1.0 - float(vec.sum()))
    return GWDistribution(n, vec, overflow)


# ---------------------------------------------------------------------------
# random-walk oracles
# ---------------------------------------------------------------------------

@dataclass
class WalkOracleResult:
    n: int
    x: float
    log_prob_estimate: float
    std_error: float        # standard error of the probability estimate
    theory: float           # n * I(-x)
    tilt: float = 0.0

    @property
    def rate_estimate(self):
        return -self.log_prob_estimate / self.n

    @property
    def log_std_error(self):
        """Delta-method standard error of ``log_prob_estimate``."""
        if not math.isfinite(self.log_prob_estimate):
            return math.inf
        return self.std_error / math.exp(self.log_prob_estimate)


def solve_tilt(step, slope):
    """t with Lambda'(t) = slope."""
    if slope == 0:
        return 0.0
    sign = 1.0 if slope > 0 else -1.0
    abscissa = step.right_abscissa if sign > 0 else step.left_abscissa
    if abscissa == 0.0:
        raise TiltOutsideDomain("no exponential moment on that side")
    d = lambda t: log_mgf_derivative(step, t) - slope  # noqa: E731
    t = sign
    while sign * d(t) < 0:
        t *= 2.0
        if math.isfinite(abscissa) and abs(t) >= abs(abscissa):
            t = abscissa * (1 - 1e-9)
            if sign * d(t) < 0:
                raise TiltOutsideDomain("slope not reached inside the domain")
            break
        if abs(t) > 2.0**60:
            raise TiltOutsideDomain("slope not reached")
    lo, hi = (0.0, t) if sign > 0 else (t, 0.0)
    return optimize.brentq(d, lo, hi, xtol=1e-13, rtol=1e-13)


def cramer_is_estimate(step, x, n, reps, rng=None, rf=None, chunk=2_000_000):
    """Importance-sampling estimate of ``P(S_n <= -x n)`` under the tilt with mean ``-x``."""
    rng = as_generator(rng)
    theory = n * rf(-x) if rf is not None else math.nan
    target = -x * n
    tol = 1e-9 * max(1.0, abs(target))
    if math.isfinite(step.ess_inf):
        if -x < step.ess_inf - 1e-12:
            return WalkOracleResult(n, x, -math.inf, 0.0, theory, math.nan)
        if abs(-x - step.ess_inf) <= 1e-12:
            p = step.atom(step.ess_inf)
            return WalkOracleResult(n, x, n * math.log(p) if p > 0 else -math.inf, 0.0, theory, -math.inf)
    t = solve_tilt(step, -x) if x != 0 else 0.0
    tl = tilt(step, t)
    per = max(1, chunk // max(n, 1))
    logw_all = []
    for start in range(0, reps, per):
        k = min(per, reps - start)
        S = tl.sample(rng, (k, n)).sum(axis=1)
        hit = S <= target + tol
        lw = np.full(k, -np.inf)
        lw[hit] = -t * S[hit] + n * tl.log_norm
        logw_all.append(lw)
    lw = np.concatenate(logw_all)
    if not np.isfinite(lw).any():
        return WalkOracleResult(n, x, -math.inf, 0.0, theory, t)
    top = lw[np.isfinite(lw)].max()
    w = np.exp(lw - top)
    mean = w.mean()
    sd = w.std(ddof=1) if reps > 1 else 0.0
    log_p = float(top + math.log(mean))
    se = float(math.exp(top) * sd / math.sqrt(reps))
    return WalkOracleResult(n, x, log_p, se, theory, t)


@dataclass
class HeavyTailReport:
    family: str
    n: int
    thresholds: list
    probs: list
    std_errors: list
    bound_log: list         # log of the bound shape at each threshold
    fitted_constant: float
    holds: bool
    ratios: list = field(default_factory=list)


def heavy_tail_sum_check(step, n, x, reps, rng=None, eps=0.2, chunk=5_000_000):
    """Direct MC of ``P(S_n <= -x)`` against the heavy-tail sum bounds.

    Pareto: ``C n^2 x^-alpha`` with ``C`` fitted as the smallest constant
    covering every sampled point; Weibull (alpha < 1):
    ``log P <= -(1 - eps) lam x^alpha``.
    """
    rng = as_generator(rng)
    xs = [float(v) for v in np.atleast_1d(x)]
    if step.tail not in ("pareto", "weibull"):
        raise ValueError("heavy_tail_sum_check needs a Pareto or Weibull left tail")
    hits = np.zeros(len(xs))
    per = max(1, chunk // max(n, 1))
    for start in range(0, reps, per):
        k = min(per, reps - start)
        S = step.sample(rng, (k, n)).sum(axis=1)
        for i, v in enumerate(xs):
            hits[i] += np.count_nonzero(S <= -v)
    probs = hits / reps
    ses = np.sqrt(probs * (1 - probs) / reps)
    if step.tail == "pareto":
        shape = [n * n * v ** (-step.alpha) if v > 0 else math.inf for v in xs]
        covered = [p / s for p, s in zip(probs, shape) if v > 0 and math.isfinite(s)] if xs else []
        C = max(covered) if covered else 0.0
        bound_log = [math.log(C * s) if C > 0 and math.isfinite(s) else 0.0 for s in shape]
        holds = all(p <= C * s + 1e-15 for p, s in zip(probs, shape))
    else:
        C = 1.0 - eps
        bound_log = [-(1 - eps) * step.lam * v**step.alpha if v > 0 else 0.0 for v in xs]
        holds = all((p == 0 or math.log(p) <= b) for p, b in zip(probs, bound_log))
    ratios = [probs[i + 1] / probs[i] if probs[i] > 0 else math.nan for i in range(len(xs) - 1)]
    return HeavyTailReport(step.family, n, xs, probs.tolist(), ses.tolist(), bound_log, C, holds, ratios)


def direct_level_probability(off, step, n, y, bound, reps, rng=None, mode="particle", **kw):
    """Indicator samples of ``{Z_n([y, inf)) < bound}`` over ``reps`` replicas."""
    res = run_brw_batch(off, step, n, [Fixed(y)], reps, rng, mode, **kw)
    return res.counts[:, -1, 0] < bound


def logsumexp_weights(lw):
    return float(logsumexp(lw))
