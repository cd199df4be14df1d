import math

import numpy as np
import pytest
from scipy import integrate, stats

from brwlevel.distributions import (DiscreteStep, Gaussian, NegGumbelTail, NegParetoTail, NegWeibullTail,
                                    OffspringLaw, Rademacher, log_mgf, log_mgf_derivative, offspring_from_dict,
                                    sample_offspring, sample_step, step_from_dict, tilt)
from brwlevel.errors import TiltOutsideDomain

TAIL_LAWS = [
    NegWeibullTail(1.0, 0.5, 0.2, 1.0),
    NegWeibullTail(1.0, 2.0, 0.3, 1.0),
    NegParetoTail(2.0, 0.3, 1.0),
    NegGumbelTail(1.0, 0.5, 0.3),
    NegParetoTail(2.5, 0.3, 2.5),
    NegWeibullTail(0.5, 1.5, 0.4, 2.0),
]


# --- offspring -------------------------------------------------------------

@pytest.mark.parametrize("probs", [{0: 0.1, 2: 0.9}, {1: 0.5, 2: 0.4}, {1: 1.0}, {1: 0.5, 2: 0.5, 3: -0.0001}])
def test_offspring_validation(probs):
    with pytest.raises(ValueError):
        OffspringLaw(probs)


def test_offspring_basic():
    law = OffspringLaw({1: 0.5, 2: 0.5})
    assert law.m == 1.5 and law.b == 1 and law.p1 == 0.5
    assert OffspringLaw({2: 0.3, 4: 0.7}).b == 2
    assert law.pgf(1.0) == pytest.approx(1.0)
    assert law.pgf(0.5) == pytest.approx(0.5 * 0.5 + 0.5 * 0.25)
    assert offspring_from_dict(law.to_dict()) == law


def test_offspring_sampling(rng):
    assert np.all(sample_offspring(OffspringLaw({2: 1.0}), rng, 100) == 2)
    k = sample_offspring(OffspringLaw({1: 0.5, 2: 0.5}), rng, 10**6)
    assert abs(k.mean() - 1.5) < 0.002
    assert abs(np.mean(k == 1) - 0.5) < 0.002


# --- step laws -------------------------------------------------------------

def test_rademacher_sampling(rng):
    x = sample_step(Rademacher(), rng, 10**6)
    assert set(np.unique(x)) == {-1.0, 1.0}
    assert abs(np.mean(x == 1) - 0.5) < 0.002


def test_gaussian_sampling(rng):
    x = sample_step(Gaussian(1.0), rng, 10**6)
    assert abs(x.mean()) < 0.004
    assert abs(x.var() - 1) < 0.01


def test_weibull_tail_ratio(rng):
    law = NegWeibullTail(1.0, 0.5, 0.2, 1.0)
    hits = 0
    for _ in range(10):
        hits += np.count_nonzero(law.sample(rng, 10**6) <= -4.0)
    ratio = hits / 1e7 / (0.2 * math.exp(-2.0))
    assert abs(ratio - 1) < 0.05


@pytest.mark.parametrize("law", TAIL_LAWS, ids=lambda l: f"{l.family}-{l.alpha}-{l.x0}")
def test_tail_mean_zero(law):
    # mean from the pieces: core mass times centre minus the integrated tail
    assert abs(law.mean()) < 1e-10
    # and independently by quadrature of the CDF: E X = int_0^inf P(X>y) - int_0^inf P(X<=-y)
    pos, _ = integrate.quad(lambda y: 1 - law.cdf_left(y), 0, law.ess_sup, limit=200)
    neg, _ = integrate.quad(lambda y: law.cdf_left(-y), 0, np.inf, limit=400)
    assert abs(pos - neg) < 1e-7


@pytest.mark.parametrize("law", TAIL_LAWS, ids=lambda l: f"{l.family}-{l.alpha}-{l.x0}")
def test_tail_formula_vs_empirical(law, rng):
    n = 10**7
    x = np.concatenate([law.sample(rng, 10**6) for _ in range(n // 10**6)])
    for y in law.x0 * np.array([1.0, 1.3, 1.7, 2.2, 3.0]):
        p = law.cdf_left(-y)
        if law.family == "neg_weibull":
            assert p == pytest.approx(law.q * math.exp(-law.lam * y**law.alpha), rel=1e-12)
        if law.family == "neg_pareto":
            assert p == pytest.approx(law.q * y**-law.alpha, rel=1e-12)
        emp = np.mean(x <= -y)
        se = math.sqrt(p * (1 - p) / n)
        assert abs(emp - p) < 3.5 * se + 1e-12


@pytest.mark.parametrize("law", TAIL_LAWS, ids=lambda l: f"{l.family}-{l.alpha}-{l.x0}")
def test_tail_ks(law, rng):
    x = law.sample(rng, 20000)
    res = stats.kstest(x, np.vectorize(law.cdf_left))
    assert res.pvalue > 0.01


def test_log_mgf_examples():
    assert log_mgf(Rademacher(), 1.0) == pytest.approx(0.433780, abs=1e-6)
    assert log_mgf(Gaussian(1.0), 2.0) == pytest.approx(2.0, abs=1e-12)
    for law in [Rademacher(), Gaussian(2.0)] + TAIL_LAWS:
        assert log_mgf(law, 0.0) == 0.0
        if law.left_abscissa < 0:
            assert abs(log_mgf_derivative(law, 0.0)) < 1e-6
        else:
            # only a one-sided difference exists; with an infinite variance
            # (Pareto alpha=2) its bias is of order h log(1/h)
            assert abs(log_mgf_derivative(law, 0.0)) < 1e-4


@pytest.mark.parametrize("law", TAIL_LAWS, ids=lambda l: f"{l.family}-{l.alpha}-{l.x0}")
def test_tail_log_mgf_quadrature(law):
    # independent evaluation from the density of each piece
    def core(t):
        lo, hi = law.core_lo, law.core_hi
        v, _ = integrate.quad(lambda x: math.exp(t * x), lo, hi)
        return (1 - law.tail_mass) * v / (hi - lo)

    def tail(t):
        v, _ = integrate.quad(lambda y: math.exp(-t * y + law.log_density(y)), law.x0, np.inf, limit=400)
        return v

    for t in (0.5, 1.0, 3.0):
        assert log_mgf(law, t) == pytest.approx(math.log(core(t) + tail(t)), abs=1e-9)


def test_left_abscissa():
    assert math.isinf(NegWeibullTail(1.0, 0.5, 0.2, 1.0).log_mgf(-0.01))
    assert math.isinf(NegParetoTail(2.0, 0.3, 1.0).log_mgf(-0.01))
    assert math.isfinite(NegWeibullTail(1.0, 2.0, 0.3, 1.0).log_mgf(-5.0))
    assert math.isfinite(NegWeibullTail(2.0, 1.0, 0.3, 1.0).log_mgf(-1.0))
    assert math.isinf(NegWeibullTail(2.0, 1.0, 0.3, 1.0).log_mgf(-2.5))


def test_discrete_step_centering():
    law = DiscreteStep([(0, 0.2), (1, 0.5), (3, 0.3)])
    assert abs(law.mean()) < 1e-14
    off, span, pmf = law.lattice()
    assert span == pytest.approx(1.0)
    assert pmf.sum() == pytest.approx(1.0)


def test_rademacher_tilt(rng):
    t = 0.7
    tl = tilt(Rademacher(), t)
    x = tl.sample(rng, 10**6)
    p_up = math.exp(t) / (math.exp(t) + math.exp(-t))
    assert abs(np.mean(x == 1) - p_up) < 0.002
    assert tl.log_ratio(1.0) == pytest.approx(t - math.log(math.cosh(t)))


def test_zero_tilt(rng):
    for law in [Rademacher(), Gaussian(1.0), TAIL_LAWS[0]]:
        tl = tilt(law, 0.0)
        assert np.all(tl.log_ratio(np.linspace(-3, 1, 9)) == 0)


def test_gaussian_tilt(rng):
    x = tilt(Gaussian(1.0), -1.0).sample(rng, 10**6)
    assert abs(x.mean() + 1) < 0.005


@pytest.mark.parametrize("law,t", [(TAIL_LAWS[1], -1.0), (TAIL_LAWS[1], 1.5), (TAIL_LAWS[0], 1.0),
                                   (TAIL_LAWS[2], 0.8), (TAIL_LAWS[3], -0.5)])
def test_tail_tilt_mean(law, t, rng):
    tl = tilt(law, t)
    x = tl.sample(rng, 4 * 10**5)
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean() - log_mgf_derivative(law, t)) < 4 * se


def test_tilt_outside_domain():
    with pytest.raises(TiltOutsideDomain):
        tilt(NegParetoTail(2.0, 0.3, 1.0), -0.5)


def test_step_roundtrip():
    for law in [Rademacher(2.0), Gaussian(1.5)] + TAIL_LAWS:
        again = step_from_dict(law.to_dict())
        assert again.to_dict() == law.to_dict()
        assert log_mgf(again, 0.3) == log_mgf(law, 0.3)
