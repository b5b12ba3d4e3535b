"""Service-value and service-time distributions, and the customer decision rule.

The service value R of a customer is compared against the cheapest joining
cost. The tail ``H(x) = P(R > x)`` therefore doubles as the joining
probability at cost ``x``; it equals 1 for nonpositive costs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "ModelParams",
    "ValueDistribution",
    "ParetoValue",
    "ServiceDistribution",
    "Decision",
    "decide",
    "sample_value",
    "sample_service",
]


@dataclass(frozen=True)
class ModelParams:
    """Potential arrival rates, Pareto tail exponent and switching cost."""

    lambda1: float
    lambda2: float
    theta: float
    switch_cost: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "theta", "switch_cost"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
        if self.lambda1 <= 0:
            raise ValueError(f"lambda1 must be > 0, got {self.lambda1}")
        if self.lambda2 <= 0:
            raise ValueError(f"lambda2 must be > 0, got {self.lambda2}")
        if self.theta <= 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if self.switch_cost < 0:
            raise ValueError(f"switch_cost must be >= 0, got {self.switch_cost}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (float(self.lambda1), float(self.lambda2), float(self.theta), float(self.switch_cost))

    def rate(self, station: int) -> float:
        return self.lambda1 if station == 1 else self.lambda2

    def swapped(self) -> "ModelParams":
        """Same system with the station labels exchanged."""
        return ModelParams(self.lambda2, self.lambda1, self.theta, self.switch_cost)


def _check_nonnegative(**kwargs):
    for name, value in kwargs.items():
        if np.any(np.asarray(value) < 0):
            raise ValueError(f"{name} must be nonnegative, got {value!r}")


class ValueDistribution:
    """Distribution of the perceived service value.

    Subclasses must implement :meth:`tail` and :meth:`sample`. The integrals
    default to adaptive quadrature; closed forms should override them.
    All methods accept scalars or arrays and broadcast.
    """

    def tail(self, x):
        raise NotImplementedError

    def log_tail(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.tail(x))

    def sample(self, u):
        raise NotImplementedError

    def _quad(self, f, lo, hi, breaks=()):
        if hi <= lo:
            return 0.0
        pts = [p for p in breaks if lo < p < hi]
        val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    def tail_integral(self, v, a):
        """Integral of ``tail(v - u)`` over ``u`` in ``[0, a]``."""
        _check_nonnegative(v=v, a=a)
        fn = np.vectorize(lambda vv, aa: self._quad(lambda u: float(self.tail(vv - u)), 0.0, aa, (vv,)))
        return _unwrap(fn(v, a))

    def shifted_tail_integral(self, v, a, c):
        """Integral of ``tail(max(v - u, 0) + c)`` over ``u`` in ``[0, a]``."""
        _check_nonnegative(v=v, a=a, c=c)
        fn = np.vectorize(
            lambda vv, aa, cc: self._quad(lambda u: float(self.tail(max(vv - u, 0.0) + cc)), 0.0, aa, (vv,))
        )
        return _unwrap(fn(v, a, c))


def _unwrap(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _power_integral(w_lo, w_hi, theta):
    """Integral of ``w**-theta`` over ``[w_lo, w_hi]`` for ``1 <= w_lo <= w_hi``.

    Written as ``w_lo**(1-theta) * d * expm1(z)/z`` with ``d = log(w_hi/w_lo)``
    and ``z = (1-theta)*d``, which is exact at theta = 1 (log form) and keeps
    full relative precision near it.
    """
    d = np.log(w_hi) - np.log(w_lo)
    one_minus = 1.0 - theta
    z = one_minus * d
    small = np.abs(one_minus) < 1e-9
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(np.abs(z) > 0, np.expm1(z) / np.where(z == 0, 1.0, z), 1.0)
    # second-order series once the generic form loses digits
    ratio = np.where(small, 1.0 + 0.5 * z, ratio)
    return np.exp(one_minus * np.log(w_lo)) * d * ratio


@dataclass(frozen=True)
class ParetoValue(ValueDistribution):
    """Pareto-type value with tail ``(1 + x)**-theta`` for ``x >= 0``."""

    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _unwrap(np.exp(self.log_tail(x)))

    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        return _unwrap(-self.theta * np.log1p(np.maximum(x, 0.0)))

    def sample(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("uniform variate must lie in (0, 1)")
        return _unwrap(u ** (-1.0 / self.theta) - 1.0)

    def tail_integral(self, v, a):
        _check_nonnegative(v=v, a=a)
        return _unwrap(pareto_tail_integral(np.asarray(v, float), np.asarray(a, float), self.theta))

    def shifted_tail_integral(self, v, a, c):
        _check_nonnegative(v=v, a=a, c=c)
        return _unwrap(
            pareto_shifted_tail_integral(np.asarray(v, float), np.asarray(a, float), np.asarray(c, float), self.theta)
        )


def pareto_tail_integral(v, a, theta):
    """Unchecked array kernel behind :meth:`ParetoValue.tail_integral`."""
    m = np.minimum(a, v)
    return _power_integral(1.0 + v - m, 1.0 + v, theta) + (a - m)


def pareto_shifted_tail_integral(v, a, c, theta):
    """Unchecked array kernel behind :meth:`ParetoValue.shifted_tail_integral`."""
    m = np.minimum(a, v)
    base = 1.0 + c
    return _power_integral(base + v - m, base + v, theta) + (a - m) * np.exp(-theta * np.log(base))


class ServiceKind(str, enum.Enum):
    EXPONENTIAL = "exponential"
    PARETO = "pareto"


@dataclass(frozen=True)
class ServiceDistribution:
    """Service time law: ``exponential`` (rate beta) or ``pareto`` (``1-(1+x)**-beta``)."""

    kind: ServiceKind
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ServiceKind(self.kind))
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"service beta must be > 0, got {self.beta}")

    @classmethod
    def exponential(cls, beta: float) -> "ServiceDistribution":
        return cls(ServiceKind.EXPONENTIAL, beta)

    @classmethod
    def pareto(cls, beta: float) -> "ServiceDistribution":
        return cls(ServiceKind.PARETO, beta)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        if self.kind is ServiceKind.EXPONENTIAL:
            return _unwrap(-np.expm1(-self.beta * x))
        return _unwrap(1.0 - (1.0 + x) ** (-self.beta))

    def sample(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("uniform variate must lie in (0, 1)")
        if self.kind is ServiceKind.EXPONENTIAL:
            return _unwrap(-np.log1p(-u) / self.beta)
        return _unwrap((1.0 - u) ** (-1.0 / self.beta) - 1.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "beta": self.beta}


class Decision(enum.Enum):
    JOIN_LOCAL = "join_local"
    SWITCH = "switch"
    BALK = "balk"


def decide(v_local: float, v_other: float, c: float, r: float) -> Decision:
    """Join, switch or balk for a customer holding value ``r``.

    Ties follow the weak/strict inequalities verbatim: an arrival indifferent
    between stations stays local, and one indifferent between cost and value
    balks.
    """
    if v_local <= v_other + c:
        return Decision.JOIN_LOCAL if v_local < r else Decision.BALK
    return Decision.SWITCH if v_other + c < r else Decision.BALK


def sample_value(dist: ValueDistribution, u):
    return dist.sample(u)


def sample_service(dist: ServiceDistribution, u):
    return dist.sample(u)
