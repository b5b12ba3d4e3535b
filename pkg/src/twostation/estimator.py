"""Maximum likelihood fit of (lambda1, lambda2, theta, c) from observed joins."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .simulator import Observations, pre_decision_workloads, reconstruct_states
from .values import ModelParams

__all__ = ["EstimatorOptions", "EstimationResult", "lower_bound_c", "estimate", "MIN_OBSERVATIONS"]

log = logging.getLogger(__name__)

MIN_OBSERVATIONS = 20
SIMPLEX_SCALE = 0.3
PINNED_LOG_OFFSET = -20.0
_MAX_RESTARTS = 4
_PROFILE_ROUNDS = 10


@dataclass(frozen=True)
class EstimatorOptions:
    n_starts: int = 8
    max_evals: int = 20000
    tolerance: float = 1e-8
    seed: int = 0
    # "log" searches eta = (log l1, log l2, log theta, log(c - c_tilde));
    # "box" searches the natural parameters with bound clamping.
    parameterization: str = "log"

    def __post_init__(self):
        if self.n_starts < 1 or self.max_evals < 1 or not self.tolerance > 0 or self.seed < 0:
            raise ValueError("estimator options must be positive")
        if self.parameterization not in ("log", "box"):
            raise ValueError(f"unknown parameterization {self.parameterization!r}")


@dataclass(frozen=True)
class EstimationResult:
    params_hat: ModelParams | None
    log_lik: float
    c_tilde: float
    n_restarts: int
    converged: bool
    n_evals: int
    message: str = ""
    start_log_liks: tuple[float, ...] = field(default=(), repr=False)


def lower_bound_c(observations: Observations, states: np.ndarray | None = None) -> float:
    """Largest workload gap a joiner accepted at the busier station, or 0.

    A customer who joins the station with the larger pre-decision workload
    would have switched unless the switching cost exceeded the gap.
    """
    w = pre_decision_workloads(observations, states)
    joined = observations.i - 1
    w_joined = w[np.arange(len(w)), joined]
    w_other = w[np.arange(len(w)), 1 - joined]
    gap = w_joined - w_other
    gap = gap[gap > 0]
    return float(gap.max()) if gap.size else 0.0


def _moment_seed(obs: Observations, c_tilde: float, w: np.ndarray) -> np.ndarray:
    k = len(obs)
    total_time = float(np.sum(obs.a))
    lam_total = k / total_time / 0.8
    share1 = float(np.mean(obs.i == 1))
    share1 = min(max(share1, 0.05), 0.95)
    joined = obs.i - 1
    gap = w[np.arange(k), joined] - w[np.arange(k), 1 - joined]
    pos = gap[gap > 0]
    c0 = max(c_tilde, float(pos.mean()) if pos.size else 0.0)
    offset = max(c0 - c_tilde, 0.1 * max(c_tilde, 0.1))
    return np.array([math.log(lam_total * share1), math.log(lam_total * (1 - share1)), 0.0, math.log(offset)])


def _to_params(eta: np.ndarray, c_tilde: float) -> tuple[float, float, float, float]:
    return (math.exp(eta[0]), math.exp(eta[1]), math.exp(eta[2]), c_tilde + math.exp(eta[3]))


class _Objective:
    """Negative log-likelihood with an evaluation counter; ``-inf`` becomes ``+inf``."""

    def __init__(self, prep):
        from .likelihood import total_log_likelihood

        self.prep = prep
        self.ll = total_log_likelihood
        self.n_evals = 0

    def natural(self, p) -> float:
        self.n_evals += 1
        l1, l2, th, c = (float(v) for v in p)
        if not (l1 > 0 and l2 > 0 and th > 0 and math.isfinite(l1 + l2 + th + c)):
            return math.inf
        val = self.ll(self.prep, l1, l2, th, c)
        return -val if math.isfinite(val) else math.inf

    def eta(self, eta) -> float:
        if np.any(np.abs(eta[:3]) > 30) or eta[3] > 30:
            self.n_evals += 1
            return math.inf
        return self.natural(_to_params(eta, self.prep.c_tilde))


def _jump_points(obs: Observations, w: np.ndarray, c_tilde: float) -> np.ndarray:
    """Values of ``c`` where the likelihood drops discontinuously.

    A join at the less loaded station with pre-decision gap ``g`` could also
    have been a switch only while ``c < g``, so the likelihood loses that
    pooled rate as ``c`` crosses ``g``.
    """
    joined = obs.i - 1
    gap = w[np.arange(len(obs)), 1 - joined] - w[np.arange(len(obs)), joined]
    return np.unique(gap[gap > c_tilde])


def _profile_c(obj: _Objective, p, jumps: np.ndarray, c_tilde: float):
    """Scan ``c`` just below every jump point with the other parameters held fixed."""
    best_c, best_f = p[3], obj.natural(p)
    for g in jumps:
        c = max(c_tilde, g - 1e-12 * max(g, 1.0))
        f = obj.natural((p[0], p[1], p[2], c))
        if f < best_f:
            best_c, best_f = c, f
    return (p[0], p[1], p[2], best_c), best_f


def _simplex(x0: np.ndarray, scale) -> np.ndarray:
    return np.vstack([x0, x0 + np.diag(np.broadcast_to(scale, x0.shape))])


def _nelder_mead(fun, x0, scale, max_evals, tol, bounds=None):
    res = minimize(
        fun,
        x0,
        method="Nelder-Mead",
        bounds=bounds,
        options={
            "initial_simplex": _simplex(x0, scale),
            "maxfev": max_evals,
            "maxiter": max_evals,
            "fatol": tol,
            "xatol": np.inf,
        },
    )
    return res


def _run_start(obj: _Objective, x0, scale, opts: EstimatorOptions, bounds=None, fun=None):
    """Nelder-Mead from ``x0``, restarted from the best vertex until the value settles."""
    if fun is None:
        fun = obj.eta if bounds is None else obj.natural
    budget = opts.max_evals
    best_x, best_f = np.asarray(x0, float), fun(x0)
    settled = False
    restarts = 0
    for restarts in range(_MAX_RESTARTS + 1):
        before = obj.n_evals
        res = _nelder_mead(fun, best_x, scale, budget, opts.tolerance, bounds)
        budget -= obj.n_evals - before
        improved = best_f - res.fun
        if res.fun <= best_f:
            best_x, best_f = np.asarray(res.x, float), float(res.fun)
        if res.status == 1 or budget <= 0:
            break
        if not improved > opts.tolerance:
            settled = True
            break
    return best_x, best_f, restarts, settled


def estimate(observations: Observations, options: EstimatorOptions | None = None) -> EstimationResult:
    """Maximize the log-likelihood over ``lambda1, lambda2, theta > 0`` and ``c >= c_tilde``.

    The search runs in log coordinates with ``c = c_tilde + exp(eta4)`` from a
    moment-based seed, ``n_starts - 1`` dispersed copies of it, and one extra
    start pinned at ``c`` just above ``c_tilde``. The best vertex wins.
    """
    from .likelihood import prepare

    opts = options or EstimatorOptions()
    states = reconstruct_states(observations)
    prep = prepare(observations, states)
    c_tilde = prep.c_tilde
    if len(observations) < MIN_OBSERVATIONS:
        return EstimationResult(
            None, -math.inf, c_tilde, 0, False, 0,
            message=f"need at least {MIN_OBSERVATIONS} observations, got {len(observations)}",
        )

    w = pre_decision_workloads(observations, states)
    seed_eta = _moment_seed(observations, c_tilde, w)
    rng = np.random.default_rng(opts.seed)
    starts = [seed_eta]
    for _ in range(opts.n_starts - 1):
        starts.append(seed_eta + rng.normal(0.0, 0.5, size=4))
    pinned = seed_eta.copy()
    pinned[3] = PINNED_LOG_OFFSET
    starts.append(pinned)

    obj = _Objective(prep)
    bounds = [(1e-12, None), (1e-12, None), (1e-12, None), (c_tilde, None)]

    def fit_from(p0):
        if opts.parameterization == "box":
            p0 = np.array(p0)
            x, f, r, ok = _run_start(obj, p0, SIMPLEX_SCALE * np.maximum(p0, 1e-3), opts, bounds)
            return tuple(float(v) for v in x), f, r, ok
        c_off = max(p0[3] - c_tilde, math.exp(PINNED_LOG_OFFSET))
        eta0 = np.log([p0[0], p0[1], p0[2], c_off])
        x, f, r, ok = _run_start(obj, eta0, SIMPLEX_SCALE, opts)
        return _to_params(x, c_tilde), f, r, ok

    best_p, best_f, best_ok = None, math.inf, False
    finals = []
    n_restarts = 0
    for x0 in starts:
        p, f, r, ok = fit_from(_to_params(x0, c_tilde))
        n_restarts += r
        finals.append(-f)
        if f < best_f:
            best_p, best_f, best_ok = p, f, ok

    # The simplex rarely crosses a jump in c and stalls when the optimum sits
    # right below one, so alternate a scan over c with a fit of the rest.
    jumps = _jump_points(observations, w, c_tilde)
    for _ in range(_PROFILE_ROUNDS if best_p is not None and math.isfinite(best_f) else 0):
        p, _ = _profile_c(obj, best_p, jumps, c_tilde)
        c = p[3]
        x, f, r, ok = _run_start(
            obj, np.log(p[:3]), SIMPLEX_SCALE, opts, fun=lambda e: obj.natural((*np.exp(e), c))
        )
        n_restarts += r
        gain = best_f - f
        if f <= best_f:
            best_p, best_f, best_ok = (*(float(v) for v in np.exp(x)), c), f, best_ok or ok
        if not gain > opts.tolerance:
            break

    if best_p is None or not math.isfinite(best_f):
        return EstimationResult(
            None, -math.inf, c_tilde, n_restarts, False, obj.n_evals,
            message="every start stayed at zero likelihood", start_log_liks=tuple(finals),
        )
    msg = "function-value spread below tolerance" if best_ok else "evaluation budget exhausted"
    log.debug("fit done: ll=%.6f evals=%d (%s)", -best_f, obj.n_evals, msg)
    return EstimationResult(
        ModelParams(*best_p), -best_f, c_tilde, n_restarts, best_ok, obj.n_evals,
        message=msg, start_log_liks=tuple(finals),
    )
