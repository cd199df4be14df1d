import json
import math

import pytest

from brwlevel.deviation import ModelSpec, c_star, schroder_light_rate
from brwlevel.distributions import NegWeibullTail, OffspringLaw
from brwlevel.errors import RegimeMismatch, ScheduleInvariantError, ScheduleTooShort
from brwlevel.rare_event import (bottcher_geometric_bound, bottcher_geometric_schedule, bottcher_uniform_bound,
                                 geometric_horizon, optimized_schroder_bound, schroder_strategy_bound)
from brwlevel.rng import stream


def test_schroder_components_multiply(schroder_spec):
    rep = schroder_strategy_bound(schroder_spec, 0.35, 40, 5000, stream(1), residual_reps=300)
    k = rep.params["k"]
    assert k == math.floor(0.35 * 40)
    assert rep.analytic["single_births"] == pytest.approx(k * math.log(0.5))
    total = math.fsum([rep.analytic["single_births"], rep.simulated["walk"]["log"],
                       rep.simulated["residual"]["log"]])
    assert rep.log_bound == pytest.approx(total, abs=1e-12)
    lo, hi = rep.log_bound_ci
    assert lo <= rep.log_bound <= hi
    json.dumps(rep.to_dict())


def test_schroder_rho_range(schroder_spec):
    with pytest.raises(ValueError):
        schroder_strategy_bound(schroder_spec, 0.9, 20, 100, stream(0))


def test_schroder_argmax_near_argmin(schroder_spec):
    best, reports = optimized_schroder_bound(schroder_spec, 60, 20000, stream(2), residual_reps=300)
    rho_opt = schroder_light_rate(schroder_spec).aux["rho_opt"]
    assert abs(best.params["rho"] - rho_opt) < 0.1
    assert best.simulated["residual"]["prob"] >= 0.5


def test_uniform_regime_mismatch(schroder_spec):
    with pytest.raises(RegimeMismatch):
        bottcher_uniform_bound(schroder_spec, 0.9, 0.01, 20, 10, stream(0))


def test_uniform_skeleton(bottcher_spec):
    cs = c_star(bottcher_spec, 0.99)
    rep = bottcher_uniform_bound(bottcher_spec, 0.99, 0.1 * cs, 24, 200, stream(3))
    t = rep.params["t_n"]
    assert t == math.floor(1.1 * cs * 24)
    assert rep.simulated["residual"]["prob"] >= 0.5
    log_step = math.log(0.5)        # p_b = 1, P(X <= -0.99) = 1/2
    skeleton = t * math.log(2) + math.log(-log_step)
    # the geometric sum over generations 1..t adds at most log(b/(b-1))
    assert 0 <= math.log(-rep.log_bound) - skeleton <= math.log(2) + 1e-12


def test_geometric_schedule_alpha2(weibull2_spec):
    n = 200
    sch = bottcher_geometric_schedule(weibull2_spec, n)
    ch, d = sch.params["c_hat"], sch.params["delta"]
    assert sch.params["b_alpha"] == pytest.approx(2.0)
    for k, a in enumerate(sch.targets, start=1):
        assert a == pytest.approx((ch + d) * n / 2**k)
    assert (ch + d / 2) * n <= sch.params["sum_a"] <= (ch + d) * n
    assert sch.params["weighted_sum"] <= (ch + d) ** 2 * n**2


def test_geometric_horizon_monotone():
    ts = [geometric_horizon(2.0, 2, n) for n in range(1, 500)]
    assert all(x <= y for x, y in zip(ts, ts[1:]))
    assert ts[0] == 0


def test_schedule_too_short(weibull2_spec):
    with pytest.raises(ScheduleTooShort):
        bottcher_geometric_schedule(weibull2_spec, 1)


def test_schedule_invariant_error(weibull2_spec):
    # delta far below c_hat b_a^-t / (1/2 - b_a^-t) breaks the lower sum bound
    with pytest.raises(ScheduleInvariantError):
        bottcher_geometric_schedule(weibull2_spec, 40, delta=1e-4)


def test_schedule_regime_mismatch(bottcher_spec):
    with pytest.raises(RegimeMismatch):
        bottcher_geometric_schedule(bottcher_spec, 40)
    s = ModelSpec(OffspringLaw({2: 1.0}), NegWeibullTail(1.0, 0.5, 0.3, 1.0), 0.0, 0.0)
    with pytest.raises(RegimeMismatch):
        bottcher_geometric_schedule(s, 40)


def test_geometric_tail_factor_identity(weibull2_spec):
    rep = bottcher_geometric_bound(weibull2_spec, 40, reps=5, rng=stream(4))
    sch = rep.schedule
    law = weibull2_spec.step
    lower = math.fsum(2.0**k * (math.log(law.q) - law.lam * a**law.alpha)
                      for k, a in enumerate(sch.targets, start=1))
    assert rep.analytic["forced_steps"] >= lower - 1e-9
    # every a_k here exceeds x0, so the closed tail form is exact
    assert all(a >= law.x0 for a in sch.targets)
    assert rep.analytic["forced_steps"] == pytest.approx(lower, rel=1e-12)


def test_geometric_delta_sweep(weibull2_spec):
    ch = bottcher_geometric_schedule(weibull2_spec, 40).params["c_hat"]
    vals = []
    for f in (0.4, 0.2, 0.1):
        rep = bottcher_geometric_bound(weibull2_spec, 40, reps=10, rng=stream(5), delta=f * ch)
        vals.append(rep.scaled)
        assert rep.simulated["residual"]["prob"] >= 0.5
    assert vals[0] < vals[1] < vals[2]
