import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twostation.values import (
    Decision,
    ModelParams,
    ParetoValue,
    ServiceDistribution,
    ValueDistribution,
    decide,
    sample_service,
    sample_value,
)

from oracles import ks_distance, quad_shifted_tail_integral, quad_tail_integral

nonneg = st.floats(min_value=0.0, max_value=20.0, allow_nan=False)


class TestModelParams:
    def test_valid(self):
        p = ModelParams(1, 2, 3, 0)
        assert p.as_tuple() == (1.0, 2.0, 3.0, 0.0)
        assert p.swapped() == ModelParams(2, 1, 3, 0)

    @pytest.mark.parametrize(
        "kwargs, field",
        [
            (dict(lambda1=0, lambda2=1, theta=1, switch_cost=0), "lambda1"),
            (dict(lambda1=1, lambda2=-1, theta=1, switch_cost=0), "lambda2"),
            (dict(lambda1=1, lambda2=1, theta=0, switch_cost=0), "theta"),
            (dict(lambda1=1, lambda2=1, theta=1, switch_cost=-0.1), "switch_cost"),
            (dict(lambda1=math.inf, lambda2=1, theta=1, switch_cost=0), "lambda1"),
            (dict(lambda1=1, lambda2=1, theta=math.nan, switch_cost=0), "theta"),
        ],
    )
    def test_invalid(self, kwargs, field):
        with pytest.raises(ValueError, match=field):
            ModelParams(**kwargs)


class TestTail:
    def test_examples(self):
        assert ParetoValue(3).tail(0.0) == 1.0
        assert ParetoValue(3).tail(-2.0) == 1.0
        assert ParetoValue(1).tail(1.0) == 0.5

    @given(x1=st.floats(-5, 50), x2=st.floats(-5, 50), theta=st.floats(0.05, 10))
    def test_non_increasing(self, x1, x2, theta):
        lo, hi = sorted((x1, x2))
        h = ParetoValue(theta)
        assert h.tail(lo) >= h.tail(hi)
        assert 0 < h.tail(hi) <= 1

    def test_vanishes(self):
        assert ParetoValue(2).tail(1e8) < 1e-15


class TestTailIntegrals:
    def test_examples(self):
        assert ParetoValue(3.7).tail_integral(0.0, 2.0) == 2.0
        assert ParetoValue(1).tail_integral(1.0, 1.0) == pytest.approx(0.6931471805599454, abs=1e-14)
        assert ParetoValue(2).tail_integral(1.0, 2.0) == pytest.approx(1.5, abs=1e-14)

    def test_shifted_examples(self):
        assert ParetoValue(2).shifted_tail_integral(1.0, 1.0, 0.0) == pytest.approx(0.5, abs=1e-15)
        assert ParetoValue(1).shifted_tail_integral(0.0, 1.0, 1.0) == pytest.approx(0.5, abs=1e-15)
        assert ParetoValue(1).shifted_tail_integral(1.0, 2.0, 1.0) == pytest.approx(0.9054651081081644, abs=1e-14)

    @pytest.mark.parametrize("bad", [dict(v=-1.0, a=1.0), dict(v=1.0, a=-0.5)])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            ParetoValue(2).tail_integral(**bad)
        with pytest.raises(ValueError):
            ParetoValue(2).shifted_tail_integral(c=0.1, **bad)
        with pytest.raises(ValueError):
            ParetoValue(2).shifted_tail_integral(1.0, 1.0, -0.1)

    @given(v=nonneg, a=nonneg, theta=st.floats(0.05, 8))
    def test_bounds_and_monotone(self, v, a, theta):
        h = ParetoValue(theta)
        val = h.tail_integral(v, a)
        assert -1e-12 <= val <= a + 1e-12
        assert h.tail_integral(v, a + 0.5) >= val
        assert h.tail_integral(0.0, a) == pytest.approx(a, rel=1e-15, abs=1e-15)

    @given(v=nonneg, a=nonneg, theta=st.floats(0.05, 8))
    def test_shift_zero_reduces(self, v, a, theta):
        h = ParetoValue(theta)
        assert h.shifted_tail_integral(v, a, 0.0) == pytest.approx(h.tail_integral(v, a), rel=1e-13, abs=1e-15)

    def test_closed_form_vs_quadrature(self):
        rng = np.random.default_rng(2024)
        thetas = np.concatenate([[1.0, 1 + 1e-6, 1 - 1e-6, 1 + 1e-10, 1 - 1e-10], rng.uniform(0.1, 6, 60)])
        for theta in thetas:
            v, a, c = rng.uniform(0, 5), rng.uniform(0, 8), rng.uniform(0, 3)
            h = ParetoValue(theta)
            ref = quad_tail_integral(v, a, theta)
            assert h.tail_integral(v, a) == pytest.approx(ref, rel=1e-8, abs=1e-12)
            ref = quad_shifted_tail_integral(v, a, c, theta)
            assert h.shifted_tail_integral(v, a, c) == pytest.approx(ref, rel=1e-8, abs=1e-12)

    def test_continuity_across_theta_one(self):
        h = [ParetoValue(t).tail_integral(2.5, 3.0) for t in (1 - 1e-7, 1 - 1e-10, 1.0, 1 + 1e-10, 1 + 1e-7)]
        assert np.ptp(h) < 1e-6

    def test_vectorized(self):
        h = ParetoValue(2.0)
        v = np.array([0.0, 1.0, 3.0])
        a = np.array([1.0, 2.0, 0.5])
        out = h.tail_integral(v, a)
        assert out.shape == (3,)
        assert out[1] == pytest.approx(1.5)


class _QuadPareto(ValueDistribution):
    """Pareto tail without closed forms, to exercise the quadrature fallback."""

    def __init__(self, theta):
        self.theta = theta

    def tail(self, x):
        return np.where(np.asarray(x) <= 0, 1.0, (1 + np.maximum(x, 0)) ** -self.theta)


def test_quadrature_fallback_matches_closed_form():
    q, h = _QuadPareto(1.7), ParetoValue(1.7)
    assert q.tail_integral(2.0, 3.0) == pytest.approx(h.tail_integral(2.0, 3.0), rel=1e-10)
    assert q.shifted_tail_integral(2.0, 3.0, 0.4) == pytest.approx(h.shifted_tail_integral(2.0, 3.0, 0.4), rel=1e-10)


class TestDecide:
    def test_examples(self):
        assert decide(0.0, 0.0, 0.5, 0.1) is Decision.JOIN_LOCAL
        assert decide(2.0, 1.0, 0.5, 3.0) is Decision.SWITCH
        assert decide(2.0, 1.8, 0.5, 1.0) is Decision.BALK

    def test_ties(self):
        # indifferent between stations: stay local
        assert decide(1.5, 1.0, 0.5, 3.0) is Decision.JOIN_LOCAL
        # cost equal to value: balk
        assert decide(1.0, 5.0, 0.5, 1.0) is Decision.BALK
        assert decide(3.0, 1.0, 0.5, 1.5) is Decision.BALK

    @given(vl=nonneg, vo=nonneg, c=nonneg, r=nonneg)
    def test_partition(self, vl, vo, c, r):
        conds = {
            Decision.JOIN_LOCAL: vl <= vo + c and vl < r,
            Decision.SWITCH: vl > vo + c and vo + c < r,
            Decision.BALK: min(vl, vo + c) >= r,
        }
        assert sum(conds.values()) == 1
        assert conds[decide(vl, vo, c, r)]


class TestSampling:
    def test_value_examples(self):
        assert sample_value(ParetoValue(1), 0.5) == pytest.approx(1.0)
        assert sample_value(ParetoValue(2), 0.25) == pytest.approx(1.0)
        assert 0 <= sample_value(ParetoValue(4), 1 - 1e-12) < 1e-11

    def test_service_examples(self):
        assert sample_service(ServiceDistribution.exponential(1), 1 - math.exp(-2)) == pytest.approx(2.0)
        assert sample_service(ServiceDistribution.pareto(2), 0.75) == pytest.approx(1.0)
        assert sample_service(ServiceDistribution.exponential(5), 1 - math.exp(-5)) == pytest.approx(1.0)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.2, 1.5])
    def test_domain(self, u):
        with pytest.raises(ValueError):
            sample_value(ParetoValue(1), u)
        with pytest.raises(ValueError):
            sample_service(ServiceDistribution.exponential(1), u)

    def test_bad_service(self):
        with pytest.raises(ValueError):
            ServiceDistribution("gamma", 1.0)
        with pytest.raises(ValueError):
            ServiceDistribution.pareto(0.0)

    @pytest.mark.parametrize(
        "dist",
        [ServiceDistribution.exponential(1), ServiceDistribution.exponential(5),
         ServiceDistribution.pareto(2), ServiceDistribution.pareto(6)],
    )
    def test_service_ks(self, dist):
        u = np.random.default_rng(1).uniform(size=100_000)
        assert ks_distance(dist.sample(u), dist.cdf) <= 0.01

    @pytest.mark.parametrize("theta", [1.0, 3.0])
    def test_value_ks(self, theta):
        h = ParetoValue(theta)
        u = np.random.default_rng(2).uniform(size=100_000)
        assert ks_distance(h.sample(u), lambda x: 1 - h.tail(x)) <= 0.01
