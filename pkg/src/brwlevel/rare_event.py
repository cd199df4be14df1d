"""Lower bounds on level-set lower deviations from explicit survival strategies.

Each bound multiplies analytic factors (forced births, forced steps) by
simulated ones (a walk probability, a residual probability that tends to 1).
All logs are combined with ``math.fsum``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .deviation import (Regime, _require, bottcher_bounded_rate, bottcher_weibull_rate, c_hat, c_star,
                        d_of_rho, rho_bar, schroder_light_rate, weibull_prefactor)
from .errors import RegimeMismatch, ScheduleInvariantError, ScheduleTooShort
from .rng import as_generator
from .simulator import cramer_is_estimate, prob_level_below

Z95 = 1.959963984540054


@dataclass
class StrategySchedule:
    kind: str                       # SchroderSingleLine, BottcherUniform, BottcherGeometric
    t_n: int
    targets: list                   # per-step displacement targets
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, "t_n": self.t_n, "targets": list(map(float, self.targets)),
                "params": {k: float(v) for k, v in self.params.items()}}


@dataclass
class BoundReport:
    kind: str
    n: int
    params: dict
    analytic: dict                  # name -> log factor
    simulated: dict                 # name -> {"prob", "std_error", "log", "log_se"}
    log_bound: float
    log_bound_ci: tuple
    scale: str
    scaled: float                   # the bound on the regime's scale
    theory: float
    ratio: float
    schedule: StrategySchedule | None = None

    def to_dict(self):
        out = {
            "kind": self.kind, "n": self.n,
            "params": {k: _num(v) for k, v in self.params.items()},
            "analytic": {k: _num(v) for k, v in self.analytic.items()},
            "simulated": {k: {kk: _num(vv) for kk, vv in v.items()} for k, v in self.simulated.items()},
            "log_bound": _num(self.log_bound),
            "log_bound_ci": [_num(v) for v in self.log_bound_ci],
            "scale": self.scale, "scaled": _num(self.scaled),
            "theory": _num(self.theory), "ratio": _num(self.ratio),
        }
        if self.schedule is not None:
            out["schedule"] = self.schedule.to_dict()
        return out


def _num(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _factor(p, se):
    lg = math.log(p) if p > 0 else -math.inf
    lse = se / p if p > 0 else math.inf
    return {"prob": p, "std_error": se, "log": lg, "log_se": lse}


def _assemble(analytic, simulated):
    logs = list(analytic.values()) + [v["log"] for v in simulated.values()]
    if any(v == -math.inf for v in logs):
        return -math.inf, (-math.inf, -math.inf)
    total = math.fsum(logs)
    se = math.sqrt(math.fsum(v["log_se"] ** 2 for v in simulated.values()))
    return total, (total - Z95 * se, total + Z95 * se)


def _geom_count(b, lo, hi):
    """sum_{k=lo}^{hi} b^k."""
    if hi < lo:
        return 0.0
    if b == 1:
        return float(hi - lo + 1)
    return (float(b) ** (hi + 1) - float(b) ** lo) / (b - 1)


# ---------------------------------------------------------------------------
# Schroder case: one thin line, then a free residual
# ---------------------------------------------------------------------------

def schroder_strategy_bound(spec, rho, n, reps, rng=None, eps=None, residual_reps=2000, theory=None):
    """Single-lineage strategy: ``floor(rho n)`` single births while the walk drops
    below ``-(d + eps) n``, then the descendants must keep the level set small."""
    _require(spec, Regime.SCHRODER_LIGHT)
    rb = rho_bar(spec)
    if not 0 < rho <= rb * (1 + 1e-12):
        raise ValueError(f"rho={rho} outside (0, {rb}]")
    g_walk, g_res = as_generator(rng).spawn(2)
    k = math.floor(rho * n)
    d = d_of_rho(spec, rho)
    eps = 0.05 * d if eps is None else float(eps)
    depth = (d + eps) * n
    analytic = {"single_births": k * math.log(spec.off.p1)}
    if k == 0:
        walk = _factor(1.0 if depth <= 0 else 0.0, 0.0)
    else:
        res = cramer_is_estimate(spec.step, depth / k, k, reps, g_walk)
        p = math.exp(res.log_prob_estimate) if res.log_prob_estimate > -700 else 0.0
        walk = {"prob": p, "std_error": res.std_error, "log": res.log_prob_estimate, "log_se": res.log_std_error}
    y = depth + spec.theta * spec.x_star * n
    p, se = prob_level_below(spec.off, spec.step, n - k, y, math.exp(spec.a * n), residual_reps, g_res)
    simulated = {"walk": walk, "residual": _factor(p, se)}
    log_L, ci = _assemble(analytic, simulated)
    if theory is None:
        theory = schroder_light_rate(spec).constant
    scaled = -log_L / n
    return BoundReport("SchroderSingleLine", n, {"rho": rho, "k": k, "d": d, "eps": eps, "rho_bar": rb},
                       analytic, simulated, log_L, ci, "n", scaled, theory,
                       scaled / theory if theory else math.nan,
                       StrategySchedule("SchroderSingleLine", k, [d + eps], {"rho": rho}))


def optimized_schroder_bound(spec, n, reps, rng=None, rhos=None, eps=None, residual_reps=2000):
    """Best single-line bound over a grid of ``rho``; returns (best, all reports)."""
    rb = rho_bar(spec)
    if rhos is None:
        rhos = np.linspace(rb / 16, rb, 16)
    theory = schroder_light_rate(spec).constant
    gens = as_generator(rng).spawn(len(rhos))
    reports = [schroder_strategy_bound(spec, float(r), n, reps, g, eps, residual_reps, theory)
               for r, g in zip(rhos, gens)]
    best = max(reports, key=lambda r: r.log_bound)
    return best, reports


# ---------------------------------------------------------------------------
# Bottcher case, bounded tail: uniform push
# ---------------------------------------------------------------------------

def bottcher_uniform_bound(spec, L_prime=None, delta=None, n=24, reps=200, rng=None):
    """Every particle has ``b`` children and steps below ``-L'`` for ``t_n`` generations."""
    _require(spec, Regime.BOTTCHER_BOUNDED)
    L = spec.L
    L_prime = 0.99 * L if L_prime is None else float(L_prime)
    if not 0 < L_prime < L:
        raise ValueError("need 0 < L' < L")
    cs = c_star(spec, L_prime)
    delta = 0.05 * cs if delta is None else float(delta)
    t = math.floor((cs + delta) * n)
    t = min(t, n)
    b = spec.off.b
    log_pb = math.log(spec.off.pb)
    log_step = spec.step.log_cdf_left(-L_prime)
    analytic = {"forced_births": _geom_count(b, 0, t - 1) * log_pb,
                "forced_steps": _geom_count(b, 1, t) * log_step}
    y = spec.theta * spec.x_star * n + L_prime * t
    p, se = prob_level_below(spec.off, spec.step, n - t, y, math.exp(spec.a * n), reps, rng,
                             initial=int(round(float(b) ** t)))
    simulated = {"residual": _factor(p, se)}
    log_L, ci = _assemble(analytic, simulated)
    theory = bottcher_bounded_rate(spec).constant
    scaled = math.log(-log_L) / n if log_L < 0 else -math.inf
    return BoundReport("BottcherUniform", n,
                       {"L_prime": L_prime, "delta": delta, "c_star": cs, "t_n": t,
                        "skeleton": (cs + delta) * math.log(b)},
                       analytic, simulated, log_L, ci, "loglog_linear_n", scaled, theory,
                       scaled / theory if theory else math.nan,
                       StrategySchedule("BottcherUniform", t, [-L_prime] * t, {"c_star": cs, "delta": delta}))


# ---------------------------------------------------------------------------
# Bottcher case, Weibull tail with alpha > 1: geometric push
# ---------------------------------------------------------------------------

def geometric_horizon(alpha, b, n):
    return math.floor(alpha / (2.0 * math.log(b)) * math.log(n))


def bottcher_geometric_schedule(spec, n, delta=None):
    """Displacements ``a_k = (b_a - 1) b_a^-k (c_hat + delta) n`` for k = 1..t_n.

    The default ``delta`` is ``0.05 c_hat``, raised if needed so the truncated
    sum still reaches ``(c_hat + delta/2) n``.
    """
    _require(spec, Regime.BOTTCHER_WEIBULL)
    alpha = spec.step.alpha
    if alpha <= 1:
        raise RegimeMismatch("geometric schedule needs alpha > 1")
    b = spec.off.b
    t = geometric_horizon(alpha, b, n)
    if t < 1:
        raise ScheduleTooShort(f"t_n = {t} < 1 at n = {n}")
    ba = b ** (1.0 / (alpha - 1.0))
    ch = c_hat(spec)
    r = ba ** (-t)
    if delta is None:
        if r >= 0.5:
            raise ScheduleTooShort(f"b_alpha^-t_n = {r:.3g} >= 1/2; no delta satisfies the sum bound")
        delta = max(0.05 * ch, ch * r / (0.5 - r) * (1 + 1e-9))
    a = [(ba - 1.0) * ba ** (-k) * (ch + delta) * n for k in range(1, t + 1)]
    total = math.fsum(a)
    weighted = math.fsum(ak**alpha * float(b) ** k for k, ak in enumerate(a, start=1))
    lo, hi = (ch + delta / 2) * n, (ch + delta) * n
    tol = 1e-12 * hi
    if not lo - tol <= total <= hi + tol:
        raise ScheduleInvariantError(f"sum a_k = {total} outside [{lo}, {hi}]")
    cap = weibull_prefactor(alpha, b) * (ch + delta) ** alpha * n**alpha
    if weighted > cap * (1 + 1e-12):
        raise ScheduleInvariantError(f"sum a_k^alpha b^k = {weighted} exceeds {cap}")
    return StrategySchedule("BottcherGeometric", t, a,
                            {"c_hat": ch, "delta": delta, "b_alpha": ba, "sum_a": total,
                             "weighted_sum": weighted, "weighted_cap": cap})


def bottcher_geometric_bound(spec, n, reps=100, rng=None, delta=None, h=0.05):
    """Bound ``(1/n^alpha) log L`` of the geometric strategy."""
    sched = bottcher_geometric_schedule(spec, n, delta)
    step, b, alpha = spec.step, spec.off.b, spec.step.alpha
    t = sched.t_n
    tail = math.fsum(float(b) ** k * step.log_cdf_left(-ak) for k, ak in enumerate(sched.targets, start=1))
    analytic = {"forced_births": _geom_count(b, 0, t - 1) * math.log(spec.off.pb), "forced_steps": tail}
    y = spec.theta * spec.x_star * n + sched.params["sum_a"]
    p, se = prob_level_below(spec.off, step, n - t, y, math.exp(spec.a * n), reps, rng, h=h,
                             initial=int(round(float(b) ** t)))
    simulated = {"residual": _factor(p, se)}
    log_L, ci = _assemble(analytic, simulated)
    theory = bottcher_weibull_rate(spec).constant
    scaled = log_L / n**alpha
    skeleton = -step.lam * weibull_prefactor(alpha, b) * (sched.params["c_hat"] + sched.params["delta"]) ** alpha
    return BoundReport("BottcherGeometric", n,
                       {"delta": sched.params["delta"], "c_hat": sched.params["c_hat"], "t_n": t,
                        "skeleton": skeleton},
                       analytic, simulated, log_L, ci, "n_alpha", scaled, theory,
                       -scaled / theory if theory else math.nan, sched)
