"""Monte Carlo studies: estimator replication, estimate histograms, throughput sweep."""
from __future__ import annotations

import csv
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .estimator import EstimatorOptions, estimate
from .io import format_float
from .simulator import ServerConfig, run_rng, simulate_multiserver_throughput, simulate_run
from .svgplot import PALETTE, Figure
from .values import ModelParams, ServiceDistribution, ValueDistribution

__all__ = [
    "PARAM_NAMES",
    "ReplicationRow",
    "RunRecord",
    "replicate",
    "aggregate",
    "histogram_report",
    "write_table",
    "SweepResult",
    "throughput_sweep",
    "find_crossover",
]

log = logging.getLogger(__name__)

PARAM_NAMES = ("lambda1", "lambda2", "theta", "c")

TABLE_HEADER = (
    "true_lambda1", "true_lambda2", "true_theta", "true_c",
    "service1", "beta1", "service2", "beta2", "k_target", "n_runs", "n_failed",
    "mean_lambda1", "mean_lambda2", "mean_theta", "mean_c",
    "std_lambda1", "std_lambda2", "std_theta", "std_c",
    "avg_joining_rate", "avg_switching_rate",
)


@dataclass(frozen=True)
class RunRecord:
    run: int
    estimate: tuple[float, float, float, float] | None
    log_lik: float
    converged: bool
    joining_rate: float
    switching_rate: float


@dataclass(frozen=True)
class ReplicationRow:
    true_params: ModelParams
    service_specs: tuple[ServiceDistribution, ServiceDistribution]
    k_target: int
    n_runs: int
    n_failed: int
    means: tuple[float, float, float, float]
    stds: tuple[float, float, float, float]
    avg_joining_rate: float
    avg_switching_rate: float

    def as_csv_row(self) -> list[str]:
        g1, g2 = self.service_specs
        vals = [
            *self.true_params.as_tuple(),
            g1.kind.value, g1.beta, g2.kind.value, g2.beta,
            self.k_target, self.n_runs, self.n_failed,
            *self.means, *self.stds,
            self.avg_joining_rate, self.avg_switching_rate,
        ]
        return [format_float(v) if isinstance(v, float) else str(v) for v in vals]


def _one_replication(args) -> RunRecord:
    params, g1, g2, k_target, master_seed, run, options = args
    sim = simulate_run(params, g1, g2, k_target, rng=run_rng(master_seed, run))
    res = estimate(sim.observations, options)
    est = res.params_hat.as_tuple() if res.params_hat is not None else None
    return RunRecord(
        run=run,
        estimate=est,
        log_lik=res.log_lik,
        converged=res.converged and est is not None,
        joining_rate=sim.joining_fraction(params),
        switching_rate=sim.switching_fraction(),
    )


def _pool_map(fn, tasks, jobs: int | None, progress: str = ""):
    jobs = jobs or os.cpu_count() or 1
    out = []
    if jobs <= 1:
        for n, t in enumerate(tasks, 1):
            out.append(fn(t))
            _progress(progress, n, len(tasks))
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for n, r in enumerate(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (8 * jobs))), 1):
            out.append(r)
            _progress(progress, n, len(tasks))
    return out


def _progress(label: str, n: int, total: int) -> None:
    if label and (n == total or n % max(1, total // 10) == 0):
        print(f"[{label}] {n}/{total}", file=sys.stderr, flush=True)


def aggregate(records: list[RunRecord], params, g1, g2, k_target) -> ReplicationRow:
    """Means and (L-1)-denominator standard deviations over converged runs.

    Joining and switching rates average over every run, since they do not
    depend on the fit.
    """
    good = np.array([r.estimate for r in records if r.converged], dtype=float).reshape(-1, 4)
    n_failed = len(records) - len(good)
    if len(good):
        means = tuple(float(v) for v in good.mean(axis=0))
    else:
        means = (math.nan,) * 4
    if len(good) > 1:
        stds = tuple(float(v) for v in good.std(axis=0, ddof=1))
    else:
        stds = (math.nan,) * 4
    return ReplicationRow(
        true_params=params,
        service_specs=(g1, g2),
        k_target=k_target,
        n_runs=len(records),
        n_failed=n_failed,
        means=means,
        stds=stds,
        avg_joining_rate=float(np.mean([r.joining_rate for r in records])),
        avg_switching_rate=float(np.mean([r.switching_rate for r in records])),
    )


def replicate(
    true_params: ModelParams,
    g1: ServiceDistribution,
    g2: ServiceDistribution,
    k_target: int,
    n_runs: int,
    master_seed: int,
    options: EstimatorOptions | None = None,
    jobs: int | None = 1,
    runs: list[int] | None = None,
) -> tuple[ReplicationRow, list[RunRecord]]:
    """Simulate and fit ``n_runs`` independent datasets.

    Run ``l`` always uses substream ``(master_seed, l)``, so results do not
    depend on worker count or execution order. ``runs`` overrides the order
    in which run indices are dispatched.
    """
    if n_runs < 2:
        raise ValueError(f"n_runs must be >= 2, got {n_runs}")
    options = options or EstimatorOptions()
    order = list(range(n_runs)) if runs is None else list(runs)
    if sorted(order) != list(range(n_runs)):
        raise ValueError("runs must be a permutation of range(n_runs)")
    tasks = [(true_params, g1, g2, k_target, master_seed, run, options) for run in order]
    records = _pool_map(_one_replication, tasks, jobs, progress="replicate")
    records.sort(key=lambda r: r.run)
    return aggregate(records, true_params, g1, g2, k_target), records


def write_table(rows: list[ReplicationRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for row in rows:
            w.writerow(row.as_csv_row())


def write_estimates(records: list[RunRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("run", *PARAM_NAMES, "log_lik", "converged", "joining_rate", "switching_rate"))
        for r in records:
            est = r.estimate if r.estimate is not None else (math.nan,) * 4
            w.writerow(
                (r.run, *map(format_float, est), format_float(r.log_lik), int(r.converged),
                 format_float(r.joining_rate), format_float(r.switching_rate))
            )


def histogram_bins(values: np.ndarray) -> np.ndarray:
    """Freedman-Diaconis edges; a single bin when the spread is zero."""
    values = np.asarray(values, float)
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 0:
        return np.array([lo - 0.5, lo + 0.5])
    return np.histogram_bin_edges(values, bins="fd")


def histogram_report(estimates, out_dir, names=PARAM_NAMES) -> list[Path]:
    """Write ``hist_<name>.csv`` and ``hist_<name>.svg`` per column plus ``estimates.csv``.

    ``estimates`` is an ``(n_runs, len(names))`` array, or a list of
    :class:`RunRecord`. The overlay is the normal density with the sample
    mean and (L-1) standard deviation; it is omitted when the spread is zero.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    written = []
    if len(estimates) and isinstance(estimates[0], RunRecord):
        records = estimates
        path = out_dir / "estimates.csv"
        write_estimates(records, path)
        written.append(path)
        table = np.array([r.estimate for r in records if r.converged], float).reshape(-1, 4)
    else:
        table = np.asarray(estimates, float)
        if table.ndim == 1:
            table = table[:, None]
    if len(table) < 2:
        raise ValueError("need at least 2 runs for a histogram")

    for col, name in enumerate(names):
        x = table[:, col]
        edges = histogram_bins(x)
        counts, _ = np.histogram(x, bins=edges)
        mean = float(x.mean())
        std = float(x.std(ddof=1))
        overlay = std > 0 and math.isfinite(std)
        expected = len(x) * np.diff(stats.norm.cdf(edges, mean, std)) if overlay else None

        csv_path = out_dir / f"hist_{name}.csv"
        try:
            with open(csv_path, "w", newline="") as fh:
                fh.write(f"# n={len(x)} mean={format_float(mean)} std={format_float(std)} "
                         f"overlay={'on' if overlay else 'off (zero spread)'}\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("bin_left", "bin_right", "count", "normal_expected"))
                for j in range(len(counts)):
                    exp_j = format_float(expected[j]) if overlay else ""
                    w.writerow((format_float(edges[j]), format_float(edges[j + 1]), int(counts[j]), exp_j))
        except OSError as exc:
            raise OSError(f"cannot write {csv_path}: {exc}") from exc

        fig = Figure(title=f"{name}: mean {mean:.4g}, std {std:.3g}", xlabel=name, ylabel="count")
        fig.bars(edges[:-1], edges[1:], counts)
        if overlay:
            grid = np.linspace(edges[0], edges[-1], 200)
            width = float(np.mean(np.diff(edges)))
            fig.line(grid, len(x) * width * stats.norm.pdf(grid, mean, std), color=PALETTE[3], label="normal fit")
        else:
            fig.notes.append("zero spread: normal overlay omitted")
        svg_path = out_dir / f"hist_{name}.svg"
        try:
            fig.save(svg_path)
        except OSError as exc:
            raise OSError(f"cannot write {svg_path}: {exc}") from exc
        written += [csv_path, svg_path]
    return written


@dataclass(frozen=True)
class SweepResult:
    lambda1: np.ndarray
    lambda2: np.ndarray
    one_each: np.ndarray
    both_at_station1: np.ndarray
    crossover: float

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "sweep.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("lambda1", "lambda2", "one_each", "both_at_station1"))
            for row in zip(self.lambda1, self.lambda2, self.one_each, self.both_at_station1):
                w.writerow(tuple(format_float(v) for v in row))
        fig = Figure(title="mean throughput per unit time", xlabel="lambda1", ylabel="throughput")
        fig.line(self.lambda1, self.one_each, color=PALETTE[0], label="one server each")
        fig.line(self.lambda1, self.both_at_station1, color=PALETTE[1], label="both at station 1")
        if math.isfinite(self.crossover):
            fig.notes.append(f"crossover at lambda1 = {self.crossover:.3f}")
        svg_path = out_dir / "sweep.svg"
        fig.save(svg_path)
        return [csv_path, svg_path]


def find_crossover(x, first, second) -> float:
    """Smallest ``x`` where ``second - first`` turns positive (linear interpolation), else nan."""
    d = np.asarray(second, float) - np.asarray(first, float)
    for j in range(1, len(d)):
        if d[j - 1] <= 0 < d[j]:
            return float(x[j - 1] + (x[j] - x[j - 1]) * (-d[j - 1]) / (d[j] - d[j - 1]))
    return math.nan


def _one_throughput(args) -> tuple[float, float]:
    l1, l2, dist, c, k_target, master_seed, run = args
    # same substream for both configurations: common random numbers
    one = simulate_multiserver_throughput(ServerConfig.ONE_EACH, l1, l2, dist, c, k_target, rng=run_rng(master_seed, run))
    both = simulate_multiserver_throughput(
        ServerConfig.BOTH_AT_STATION1, l1, l2, dist, c, k_target, rng=run_rng(master_seed, run)
    )
    return one, both


def throughput_sweep(
    lambda_total: float,
    grid_step: float,
    value_dist: ValueDistribution,
    c: float,
    k_target: int,
    n_runs: int,
    master_seed: int,
    jobs: int | None = 1,
) -> SweepResult:
    """Mean throughput of both server allocations for ``lambda1`` from half to all of the total."""
    if not (lambda_total > 0 and grid_step > 0):
        raise ValueError("lambda_total and grid_step must be > 0")
    n_pts = int(round(0.5 * lambda_total / grid_step)) + 1
    lam1 = np.linspace(0.5 * lambda_total, lambda_total, n_pts)
    lam2 = np.maximum(lambda_total - lam1, 0.0)
    tasks = [
        (float(l1), float(l2), value_dist, c, k_target, master_seed, g * n_runs + r)
        for g, (l1, l2) in enumerate(zip(lam1, lam2))
        for r in range(n_runs)
    ]
    res = np.array(_pool_map(_one_throughput, tasks, jobs, progress="throughput")).reshape(n_pts, n_runs, 2)
    one = res[:, :, 0].mean(axis=1)
    both = res[:, :, 1].mean(axis=1)
    return SweepResult(lam1, lam2, one, both, find_crossover(lam1, one, both))
