"""Conditional density of (inter-join time, joined station) and the log-likelihood.

Between two joins both workloads drain at unit rate, so the effective
arrival stream is an inhomogeneous Poisson process whose rate depends only
on the post-jump workloads and the elapsed time. The density of a factor is
``rate_i(a) * exp(-cumulative_rate(a))``. Which arrivals end up at which
station is piecewise in ``a`` depending on how far apart the workloads are
relative to the switching cost; :func:`classify_case` names the regimes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import integrate

from .simulator import Observations, reconstruct_states
from .values import (
    ModelParams,
    ParetoValue,
    ValueDistribution,
    pareto_shifted_tail_integral,
    pareto_tail_integral,
)

__all__ = [
    "CaseKind",
    "LogLikelihoodReport",
    "QuadratureError",
    "classify_case",
    "log_density",
    "log_density_array",
    "cumulative_rate",
    "effective_rate",
    "log_likelihood",
    "PreparedObservations",
    "prepare",
    "density_total_mass",
]


class CaseKind(enum.Enum):
    WITHIN_C = "within_c"
    JOINED_HIGHER = "joined_higher"
    JOINED_LOWER = "joined_lower"


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class LogLikelihoodReport:
    total: float
    per_factor: np.ndarray
    n_zero_density: int


def classify_case(v_joined: float, v_other: float, c: float) -> CaseKind:
    if v_joined - v_other > c:
        return CaseKind.JOINED_HIGHER
    if v_other - v_joined > c:
        return CaseKind.JOINED_LOWER
    return CaseKind.WITHIN_C


class _Kernels:
    """Vectorized tail pieces for a value distribution (closed form for Pareto)."""

    def __init__(self, theta: float, dist: ValueDistribution | None):
        if dist is None or type(dist) is ParetoValue:
            theta = dist.theta if dist is not None else theta
            self.log_tail = lambda x: -theta * np.log1p(np.maximum(x, 0.0))
            self.T = lambda v, a: pareto_tail_integral(v, a, theta)
            self.S = lambda v, a, c: pareto_shifted_tail_integral(v, a, c, theta)
        else:
            self.log_tail = lambda x: np.asarray(dist.log_tail(x), float)
            self.T = lambda v, a: np.asarray(dist.tail_integral(v, a), float)
            self.S = lambda v, a, c: np.asarray(dist.shifted_tail_integral(v, a, c), float)


def _pieces(a, i, v1, v2, lam1, lam2, c, kern):
    """Return ``(log_rate, cumulative_rate)`` arrays for the joined stations ``i``."""
    first = i == 1
    vi = np.where(first, v1, v2)
    vo = np.where(first, v2, v1)
    li = np.where(first, lam1, lam2)
    lo = np.where(first, lam2, lam1)
    gap = vi - vo
    higher = gap > c
    lower = -gap > c

    # time at which the gap shrinks back to c; zero when the workloads start within c
    switch_at = np.where(higher, vi - c, np.where(lower, vo - c, 0.0))
    tm = np.minimum(a, switch_at)
    drained = np.where(higher, vo, vi)
    backlog = np.where(higher, vi, vo)

    t_i = kern.T(vi, a)
    t_o = kern.T(vo, a)
    detour = kern.S(drained, tm, c) - kern.T(backlog, tm)
    cum = li * t_i + lo * t_o + np.where(higher, li * detour, 0.0) + np.where(lower, lo * detour, 0.0)

    with np.errstate(divide="ignore"):
        base = np.log(li) + kern.log_tail(vi - a)
        early = a < switch_at
        pooled = np.logaddexp(base, np.log(lo) + kern.log_tail(np.maximum(vi - a, 0.0) + c))
    log_rate = np.where(higher & early, -np.inf, np.where(lower & early, pooled, base))
    return log_rate, cum


def _check_density_inputs(a, i, v1, v2):
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise ValueError("a must be finite and > 0")
    if np.any((i != 1) & (i != 2)):
        raise ValueError("station must be 1 or 2")
    if np.any(v1 < 0) or np.any(v2 < 0) or np.any(~np.isfinite(v1)) or np.any(~np.isfinite(v2)):
        raise ValueError("workloads must be finite and >= 0")


def log_density_array(a, i, v1, v2, params: ModelParams, dist: ValueDistribution | None = None) -> np.ndarray:
    """Vectorized :func:`log_density`; ``-inf`` marks zero density."""
    a, i, v1, v2 = np.broadcast_arrays(
        np.asarray(a, float), np.asarray(i, np.int64), np.asarray(v1, float), np.asarray(v2, float)
    )
    _check_density_inputs(a, i, v1, v2)
    kern = _Kernels(params.theta, dist)
    log_rate, cum = _pieces(a, i, v1, v2, params.lambda1, params.lambda2, params.switch_cost, kern)
    return log_rate - cum


def log_density(a: float, i: int, v1: float, v2: float, params: ModelParams, dist: ValueDistribution | None = None) -> float:
    """Log density of the next join happening after ``a`` at station ``i``.

    ``v1, v2`` are the workloads right after the previous join.
    """
    return float(log_density_array(a, i, v1, v2, params, dist))


def cumulative_rate(a, v1, v2, params: ModelParams, dist: ValueDistribution | None = None):
    """Integrated effective arrival rate over ``[0, a]`` (minus log survival)."""
    a, v1, v2 = np.broadcast_arrays(np.asarray(a, float), np.asarray(v1, float), np.asarray(v2, float))
    kern = _Kernels(params.theta, dist)
    # the exponent is shared by both stations, so evaluate it for station 1
    _, cum = _pieces(a, np.ones(a.shape, np.int64), v1, v2, params.lambda1, params.lambda2, params.switch_cost, kern)
    return float(cum) if cum.ndim == 0 else cum


def effective_rate(t: float, v1: float, v2: float, params: ModelParams, dist: ValueDistribution | None = None) -> float:
    """Rate of joins at time ``t`` after a jump, straight from the decision rule."""
    dist = dist if dist is not None else ParetoValue(params.theta)
    w1 = max(v1 - t, 0.0)
    w2 = max(v2 - t, 0.0)
    c = params.switch_cost
    h = dist.tail
    return params.lambda1 * max(h(w1), h(w2 + c)) + params.lambda2 * max(h(w1 + c), h(w2))


@dataclass(frozen=True, eq=False)
class PreparedObservations:
    """Observations with the conditioning workloads of every factor precomputed."""

    a: np.ndarray
    i: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    c_tilde: float

    def __len__(self):
        return len(self.a)


def prepare(observations: Observations, states: np.ndarray | None = None) -> PreparedObservations:
    from .estimator import lower_bound_c

    if states is None:
        states = reconstruct_states(observations)
    prev = np.vstack([np.zeros((1, 2)), states[:-1]])
    return PreparedObservations(
        a=observations.a,
        i=observations.i,
        v1=np.ascontiguousarray(prev[:, 0]),
        v2=np.ascontiguousarray(prev[:, 1]),
        c_tilde=lower_bound_c(observations, states),
    )


@njit(cache=True)
def _power_integral_scalar(w_lo, w_hi, theta):
    d = math.log(w_hi) - math.log(w_lo)
    z = (1.0 - theta) * d
    if abs(1.0 - theta) < 1e-9:
        ratio = 1.0 + 0.5 * z
    elif z == 0.0:
        ratio = 1.0
    else:
        ratio = math.expm1(z) / z
    return math.exp((1.0 - theta) * math.log(w_lo)) * d * ratio


@njit(cache=True)
def _tail_int(v, a, theta):
    m = min(a, v)
    return _power_integral_scalar(1.0 + v - m, 1.0 + v, theta) + (a - m)


@njit(cache=True)
def _shifted_int(v, a, c, theta):
    m = min(a, v)
    base = 1.0 + c
    return _power_integral_scalar(base + v - m, base + v, theta) + (a - m) * math.exp(-theta * math.log(base))


@njit(cache=True)
def _pareto_total(a, i, v1, v2, lam1, lam2, theta, c):
    total = 0.0
    log1, log2 = math.log(lam1), math.log(lam2)
    for k in range(a.shape[0]):
        ak = a[k]
        if i[k] == 1:
            vi, vo, li, lo, lli, llo = v1[k], v2[k], lam1, lam2, log1, log2
        else:
            vi, vo, li, lo, lli, llo = v2[k], v1[k], lam2, lam1, log2, log1
        cum = li * _tail_int(vi, ak, theta) + lo * _tail_int(vo, ak, theta)
        base = lli - theta * math.log1p(max(vi - ak, 0.0))
        gap = vi - vo
        if gap > c:
            tau = vi - c
            if ak < tau:
                return -math.inf
            cum += li * (_shifted_int(vo, tau, c, theta) - _tail_int(vi, tau, theta))
            log_rate = base
        elif -gap > c:
            tau = vo - c
            tm = min(ak, tau)
            cum += lo * (_shifted_int(vi, tm, c, theta) - _tail_int(vo, tm, theta))
            if ak < tau:
                other = llo - theta * math.log1p(max(vi - ak, 0.0) + c)
                hi = max(base, other)
                log_rate = hi + math.log1p(math.exp(min(base, other) - hi))
            else:
                log_rate = base
        else:
            log_rate = base
        total += log_rate - cum
    return total


def total_log_likelihood(prep: PreparedObservations, lam1: float, lam2: float, theta: float, c: float) -> float:
    """Hot-path total log-likelihood for the optimizer (Pareto values, no validation)."""
    if c < prep.c_tilde:
        return -math.inf
    total = _pareto_total(prep.a, prep.i, prep.v1, prep.v2, lam1, lam2, theta, c)
    return total if not math.isnan(total) else -math.inf


def log_likelihood(
    observations: Observations | PreparedObservations,
    params: ModelParams,
    dist: ValueDistribution | None = None,
) -> LogLikelihoodReport:
    """Sum of log densities over all joins, conditioning on reconstructed workloads.

    Service times enter only through the workload reconstruction; their own
    likelihood is not included.
    """
    prep = observations if isinstance(observations, PreparedObservations) else prepare(observations)
    kern = _Kernels(params.theta, dist)
    log_rate, cum = _pieces(prep.a, prep.i, prep.v1, prep.v2, params.lambda1, params.lambda2, params.switch_cost, kern)
    per_factor = log_rate - cum
    n_zero = int(np.count_nonzero(np.isneginf(per_factor)))
    total = -math.inf if n_zero else float(np.sum(per_factor))
    return LogLikelihoodReport(total=total, per_factor=per_factor, n_zero_density=n_zero)


def density_total_mass(
    v1: float, v2: float, params: ModelParams, a_max: float, dist: ValueDistribution | None = None, tol: float = 1e-12
) -> float:
    """Integral of ``f(a, 1) + f(a, 2)`` over ``(0, a_max]``.

    Splits the range at the kinks of the integrand (workloads draining to zero
    and gaps closing to ``c``) and raises :class:`QuadratureError` when a
    piece does not reach ``tol``.
    """
    if a_max <= 0:
        raise ValueError("a_max must be > 0")
    c = params.switch_cost
    kinks = sorted({k for k in (v1, v2, v1 - c, v2 - c) if 0.0 < k < a_max})
    edges = [0.0, *kinks, a_max]

    def f(a):
        return float(np.sum(np.exp(log_density_array(a, np.array([1, 2]), v1, v2, params, dist))))

    total = 0.0
    err_total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err, info = integrate.quad(f, lo, hi, epsabs=tol, epsrel=tol, limit=200, full_output=True)[:3]
        total += val
        err_total += err
    if err_total > max(1e3 * tol, 1e-9):
        raise QuadratureError(f"quadrature did not converge (error estimate {err_total:.3g})")
    return total
