"""Property tests over randomly drawn laws and parameters."""
import functools
import math

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from brwlevel.config import parse_config
from brwlevel.deviation import ModelSpec, weibull_prefactor
from brwlevel.distributions import DiscreteStep, NegWeibullTail, OffspringLaw, log_mgf
from brwlevel.rare_event import bottcher_geometric_schedule, geometric_horizon
from brwlevel.rate_fn import RateFunction
from brwlevel.rng import stream
from brwlevel.simulator import gw_pgf_iterate, run_brw_batch

SLOW = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def finite_laws(draw):
    k = draw(st.integers(2, 5))
    xs = draw(st.lists(st.integers(-4, 4), min_size=k, max_size=k, unique=True))
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    w = np.array(w) / sum(w)
    return DiscreteStep(list(zip(xs, w)))


@st.composite
def offspring_laws(draw, min_child=1):
    ks = draw(st.lists(st.integers(min_child, 5), min_size=1, max_size=3, unique=True))
    assume(max(ks) >= 2)
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=len(ks), max_size=len(ks)))
    s = sum(w)
    return OffspringLaw({k: x / s for k, x in zip(ks, w)})


@SLOW
@given(finite_laws(), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_log_mgf_convex(law, ts):
    assert log_mgf(law, 0.0) == 0.0
    a, b = sorted(ts)[0], sorted(ts)[2]
    for lam in (0.25, 0.5, 0.75):
        mid = lam * a + (1 - lam) * b
        assert log_mgf(law, mid) <= lam * log_mgf(law, a) + (1 - lam) * log_mgf(law, b) + 1e-10


@SLOW
@given(finite_laws())
def test_rate_nonneg_convex_monotone(law):
    rf = RateFunction(law)
    top = law.ess_sup
    xs = np.linspace(0, top, 12)[:-1]
    v = np.array([rf(x) for x in xs])
    assert np.all(v >= -1e-12)
    assert np.all(np.diff(v) >= -1e-8)
    assert np.all(v[:-2] + v[2:] - 2 * v[1:-1] >= -1e-7)
    assert rf(0.0) <= 1e-12


@SLOW
@given(offspring_laws(), st.integers(1, 6))
def test_gw_probabilities_sum(off, n):
    d = gw_pgf_iterate(off, n, 400)
    assert np.all(d.probs >= 0)
    assert math.isclose(d.probs.sum() + d.overflow, 1.0, abs_tol=1e-12)
    assert d.probs[:1].sum() == 0                 # no extinction without 0 children


@SLOW
@given(offspring_laws(), st.lists(st.floats(-6, 6), min_size=1, max_size=4), st.integers(0, 2**31))
def test_level_counts_nonincreasing(off, ys, seed):
    ys = sorted(ys)
    res = run_brw_batch(off, DiscreteStep([(-1, 0.5), (1, 0.5)]), 6, ys, 3, stream(seed), "cohort")
    assert np.all(np.diff(res.counts, axis=2) <= 0)
    assert np.all(res.counts <= res.totals[:, :, None])


@functools.lru_cache(maxsize=None)
def _weibull_spec(alpha, b):
    return ModelSpec(OffspringLaw({b: 1.0}), NegWeibullTail(1.0, alpha, 0.3, 1.0), 0.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1.25, 1.5, 2.0, 3.0, 4.0]), st.sampled_from([2, 3]), st.integers(20, 5000))
def test_geometric_schedule_invariants(alpha, b, n):
    assume(geometric_horizon(alpha, b, n) >= 1)
    ba = b ** (1 / (alpha - 1))
    assume(ba ** -geometric_horizon(alpha, b, n) < 0.45)
    spec = _weibull_spec(alpha, b)
    sch = bottcher_geometric_schedule(spec, n)
    ch, d = sch.params["c_hat"], sch.params["delta"]
    t = sch.t_n
    assert t == math.floor(alpha / (2 * math.log(b)) * math.log(n))
    assert (ch + d / 2) * n <= sch.params["sum_a"] * (1 + 1e-12)
    assert sch.params["sum_a"] <= (ch + d) * n * (1 + 1e-12)
    w = math.fsum(a**alpha * b**k for k, a in enumerate(sch.targets, start=1))
    # sum over k >= 1 of b_a^-k is 1/(b_a - 1), which gives the prefactor
    assert w <= weibull_prefactor(alpha, b) * (ch + d) ** alpha * n**alpha * (1 + 1e-12)
    assert all(x > y for x, y in zip(sch.targets, sch.targets[1:]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), theta=st.floats(0, 0.9), a=st.floats(0, 1),
       probs=st.dictionaries(st.integers(1, 6), st.integers(1, 9), min_size=1, max_size=3),
       alpha=st.floats(0.3, 3.0))
def test_config_roundtrip(seed, theta, a, probs, alpha):
    tot = sum(probs.values())
    off = ", ".join(f"{k} = {v / tot!r}" for k, v in sorted(probs.items()))
    text = (f"seed = {seed}\n[model]\ntheta = {theta!r}\na = {a!r}\noffspring = {{ {off} }}\n"
            f'step = {{ family = "neg_weibull", lambda = 1.0, alpha = {alpha!r}, q = 0.3, x0 = 1.0 }}\n'
            '[[tasks]]\nkind = "rates"\n')
    cfg = parse_config(text)
    again = parse_config(cfg.dumps())
    assert again.dumps() == cfg.dumps() and again.hash == cfg.hash
    assert again.model["theta"] == theta and again.seed == seed
