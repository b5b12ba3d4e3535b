"""Sample paths of the two-station system with switching and balking."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .values import ModelParams, ParetoValue, ServiceDistribution, ServiceKind, ValueDistribution

__all__ = [
    "WorkloadState",
    "EffectiveArrival",
    "Observations",
    "SimRunOutput",
    "run_rng",
    "simulate_run",
    "workload_after",
    "reconstruct_states",
    "pre_decision_workloads",
    "ServerConfig",
    "simulate_multiserver_throughput",
]

_BLOCK = 2048


class WorkloadState(NamedTuple):
    v1: float
    v2: float
    clock: float = 0.0


class EffectiveArrival(NamedTuple):
    a: float
    i: int
    x: float


@dataclass(frozen=True, eq=False)
class Observations:
    """What the manager sees: inter-join times, joined stations and jump sizes."""

    a: np.ndarray
    i: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=float)
        i = np.ascontiguousarray(self.i, dtype=np.int64)
        x = np.ascontiguousarray(self.x, dtype=float)
        if not (a.ndim == i.ndim == x.ndim == 1 and len(a) == len(i) == len(x)):
            raise ValueError("a, i, x must be 1-d arrays of equal length")
        for arr in (a, i, x):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_records(cls, records: Sequence[tuple[float, int, float]]) -> "Observations":
        if len(records) == 0:
            return cls(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0))
        a, i, x = zip(*records)
        return cls(np.array(a, float), np.array(i, np.int64), np.array(x, float))

    def __len__(self) -> int:
        return len(self.a)

    def __iter__(self) -> Iterator[EffectiveArrival]:
        for a, i, x in zip(self.a, self.i, self.x):
            yield EffectiveArrival(float(a), int(i), float(x))

    def __getitem__(self, k) -> EffectiveArrival:
        return EffectiveArrival(float(self.a[k]), int(self.i[k]), float(self.x[k]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Observations):
            return NotImplemented
        return (
            np.array_equal(self.a, other.a)
            and np.array_equal(self.i, other.i)
            and np.array_equal(self.x, other.x)
        )

    def validate(self) -> None:
        if len(self) == 0:
            raise ValueError("observation sequence is empty")
        if not np.all(np.isfinite(self.a)) or np.any(self.a <= 0):
            k = int(np.argmax(~(np.isfinite(self.a) & (self.a > 0))))
            raise ValueError(f"inter-join time must be finite and > 0 (row {k + 1})")
        if not np.all(np.isfinite(self.x)) or np.any(self.x <= 0):
            k = int(np.argmax(~(np.isfinite(self.x) & (self.x > 0))))
            raise ValueError(f"jump size must be finite and > 0 (row {k + 1})")
        bad = (self.i != 1) & (self.i != 2)
        if np.any(bad):
            raise ValueError(f"station must be 1 or 2 (row {int(np.argmax(bad)) + 1})")


@dataclass(frozen=True, eq=False)
class SimRunOutput:
    """One simulated run stopped at the ``k_target``-th join.

    ``arrival_station`` and ``pre_jump`` are simulator-side records kept for
    testing; they are not part of what the manager observes.
    """

    observations: Observations
    total_time: float
    n_switches: int
    n_potential: int
    n_balks: int
    seed: int | None
    arrival_station: np.ndarray = field(repr=False)
    pre_jump: np.ndarray = field(repr=False)
    post_jump: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return len(self.observations)

    def joining_fraction(self, params: ModelParams) -> float:
        return self.k / ((params.lambda1 + params.lambda2) * self.total_time)

    def switching_fraction(self) -> float:
        return self.n_switches / self.k

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimRunOutput):
            return NotImplemented
        return (
            self.observations == other.observations
            and self.total_time == other.total_time
            and (self.n_switches, self.n_potential, self.n_balks, self.seed)
            == (other.n_switches, other.n_potential, other.n_balks, other.seed)
            and np.array_equal(self.arrival_station, other.arrival_station)
            and np.array_equal(self.pre_jump, other.pre_jump)
            and np.array_equal(self.post_jump, other.post_jump)
        )


def run_rng(master_seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent PCG64 substream for ``(master_seed, run_index)``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(run_index),))
    return np.random.Generator(np.random.PCG64(ss))


class _Uniforms:
    """Block-buffered open-interval uniforms from a generator."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buf = np.empty(0)
        self.pos = 0

    def next(self) -> float:
        if self.pos >= len(self.buf):
            buf = self.rng.random(_BLOCK)
            # random() is on [0, 1); map the (measure-zero) 0 to the open interval
            buf[buf == 0.0] = 2.0**-54
            self.buf = buf.tolist()
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


def _value_sampler(dist: ValueDistribution):
    if isinstance(dist, ParetoValue):
        power = -1.0 / dist.theta
        return lambda u: u**power - 1.0
    return lambda u: float(dist.sample(u))


def _service_sampler(dist: ServiceDistribution):
    beta = dist.beta
    if dist.kind is ServiceKind.EXPONENTIAL:
        return lambda u: -math.log1p(-u) / beta
    power = -1.0 / beta
    return lambda u: (1.0 - u) ** power - 1.0


def workload_after(state: WorkloadState, dt: float) -> WorkloadState:
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    return WorkloadState(max(0.0, state.v1 - dt), max(0.0, state.v2 - dt), state.clock + dt)


def reconstruct_states(observations: Observations) -> np.ndarray:
    """Post-jump workloads after every join, shape ``(K, 2)``.

    Row ``k`` holds the conditioning state for join ``k+1``; the state before
    the first join is the empty system.
    """
    observations.validate()
    a, i, x = observations.a.tolist(), observations.i.tolist(), observations.x.tolist()
    out = np.empty((len(a), 2))
    v1 = v2 = 0.0
    for k in range(len(a)):
        v1 = v1 - a[k]
        v2 = v2 - a[k]
        v1 = v1 if v1 > 0.0 else 0.0
        v2 = v2 if v2 > 0.0 else 0.0
        if i[k] == 1:
            v1 += x[k]
        else:
            v2 += x[k]
        out[k, 0] = v1
        out[k, 1] = v2
    return out


def pre_decision_workloads(observations: Observations, states: np.ndarray | None = None) -> np.ndarray:
    """Workloads seen by each joining customer just before its jump, shape ``(K, 2)``."""
    if states is None:
        states = reconstruct_states(observations)
    prev = np.vstack([np.zeros((1, 2)), states[:-1]])
    return np.maximum(prev - observations.a[:, None], 0.0)


def simulate_run(
    params: ModelParams,
    g1: ServiceDistribution,
    g2: ServiceDistribution,
    k_target: int,
    seed: int | None = None,
    *,
    rng: np.random.Generator | None = None,
    value_dist: ValueDistribution | None = None,
) -> SimRunOutput:
    """Simulate from an empty system until ``k_target`` customers have joined.

    Potential arrivals form one merged Poisson stream of rate
    ``lambda1 + lambda2`` labelled by station. Each draws a value and acts
    according to :func:`~twostation.values.decide`. Service times are drawn
    from a separate substream, and only for customers who join.

    Either ``seed`` or ``rng`` must be given; ``seed`` maps to
    ``run_rng(seed, 0)``.
    """
    if k_target < 1:
        raise ValueError(f"k_target must be >= 1, got {k_target}")
    if not isinstance(params, ModelParams):
        raise TypeError("params must be ModelParams")
    if rng is None:
        if seed is None:
            raise ValueError("either seed or rng is required")
        rng = run_rng(seed, 0)
    arrivals_rng, service_rng = rng.spawn(2)
    dist = value_dist if value_dist is not None else ParetoValue(params.theta)

    lam_total = params.lambda1 + params.lambda2
    p1 = params.lambda1 / lam_total
    c = params.switch_cost
    services = (_service_sampler(g1), _service_sampler(g2))
    unif = _Uniforms(arrivals_rng)
    svc_unif = _Uniforms(service_rng)
    sample_value = _value_sampler(dist)

    a_out = np.empty(k_target)
    i_out = np.empty(k_target, dtype=np.int64)
    x_out = np.empty(k_target)
    arrived = np.empty(k_target, dtype=np.int64)
    pre = np.empty((k_target, 2))
    post = np.empty((k_target, 2))

    w = [0.0, 0.0]
    clock = 0.0
    since_join = 0.0
    k = n_potential = n_switches = 0
    while k < k_target:
        dt = -math.log(unif.next()) / lam_total
        s = 0 if unif.next() < p1 else 1
        r = sample_value(unif.next())
        clock += dt
        since_join += dt
        n_potential += 1
        w0 = w[0] - dt
        w1 = w[1] - dt
        w[0] = w0 if w0 > 0.0 else 0.0
        w[1] = w1 if w1 > 0.0 else 0.0
        o = 1 - s
        if w[s] <= w[o] + c:
            if not w[s] < r:
                continue
            joined = s
        else:
            if not w[o] + c < r:
                continue
            joined = o
            n_switches += 1
        pre[k, 0], pre[k, 1] = w
        x = services[joined](svc_unif.next())
        w[joined] += x
        a_out[k] = since_join
        i_out[k] = joined + 1
        x_out[k] = x
        arrived[k] = s + 1
        post[k, 0], post[k, 1] = w
        since_join = 0.0
        k += 1

    obs = Observations(a_out, i_out, x_out)
    return SimRunOutput(
        observations=obs,
        total_time=clock,
        n_switches=n_switches,
        n_potential=n_potential,
        n_balks=n_potential - k_target,
        seed=seed,
        arrival_station=arrived,
        pre_jump=pre,
        post_jump=post,
    )


class ServerConfig(str, enum.Enum):
    ONE_EACH = "one_each"
    BOTH_AT_STATION1 = "both_at_station1"


def simulate_multiserver_throughput(
    config: ServerConfig | str,
    lambda1: float,
    lambda2: float,
    value_dist: ValueDistribution,
    c: float,
    k_target: int,
    seed: int | None = None,
    *,
    rng: np.random.Generator | None = None,
) -> float:
    """Joins per unit time until ``k_target`` joins, for two rate-1 exponential servers.

    Each station keeps a sorted vector of per-server residual work; an
    arrival's waiting time is its smallest entry. A join adds the service
    time to that entry (Kiefer-Wolfowitz). A station with no server has
    infinite waiting time.
    """
    config = ServerConfig(config)
    if k_target < 1:
        raise ValueError(f"k_target must be >= 1, got {k_target}")
    if lambda1 < 0 or lambda2 < 0 or lambda1 + lambda2 <= 0:
        raise ValueError("arrival rates must be nonnegative with a positive sum")
    if rng is None:
        if seed is None:
            raise ValueError("either seed or rng is required")
        rng = run_rng(seed, 0)
    arrivals_rng, service_rng = rng.spawn(2)
    unif = _Uniforms(arrivals_rng)
    svc_unif = _Uniforms(service_rng)
    sample_value = _value_sampler(value_dist)

    if config is ServerConfig.ONE_EACH:
        servers = [[0.0], [0.0]]
    else:
        servers = [[0.0, 0.0], []]

    lam_total = lambda1 + lambda2
    p1 = lambda1 / lam_total
    clock = 0.0
    k = 0
    while k < k_target:
        dt = -math.log(unif.next()) / lam_total
        s = 0 if unif.next() < p1 else 1
        r = sample_value(unif.next())
        clock += dt
        for vec in servers:
            for j in range(len(vec)):
                vec[j] = vec[j] - dt if vec[j] > dt else 0.0
        waits = [vec[0] if vec else math.inf for vec in servers]
        o = 1 - s
        if waits[s] <= waits[o] + c:
            if not waits[s] < r:
                continue
            joined = s
        else:
            if not waits[o] + c < r:
                continue
            joined = o
        vec = servers[joined]
        vec[0] += -math.log(svc_unif.next())
        vec.sort()
        k += 1
    return k_target / clock
