"""File formats: observation CSV, run-config JSON, result JSON."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


from .estimator import EstimationResult, EstimatorOptions
from .simulator import Observations, SimRunOutput
from .values import ModelParams, ServiceDistribution

__all__ = [
    "ConfigError",
    "ObservationFormatError",
    "RunConfig",
    "format_float",
    "write_observations_csv",
    "read_observations_csv",
    "observations_to_csv",
    "observations_from_csv",
    "load_config",
    "dump_json",
    "summary_dict",
    "estimate_dict",
]

OBS_HEADER = ("k", "a", "i", "x")


class ConfigError(ValueError):
    pass


class ObservationFormatError(ValueError):
    pass


def format_float(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


def observations_to_csv(obs: Observations) -> str:
    lines = [",".join(OBS_HEADER)]
    for k, (a, i, x) in enumerate(obs, start=1):
        lines.append(f"{k},{format_float(a)},{i},{format_float(x)}")
    return "\n".join(lines) + "\n"


def observations_from_csv(text: str) -> Observations:
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(c.strip() for c in rows[0]) != OBS_HEADER:
        raise ObservationFormatError("row 1: expected header 'k,a,i,x'")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ObservationFormatError(f"row {lineno}: expected 4 fields, got {len(row)}")
        try:
            k, a, i, x = int(row[0]), float(row[1]), int(row[2]), float(row[3])
        except ValueError as exc:
            raise ObservationFormatError(f"row {lineno}: {exc}") from None
        if k != len(records) + 1:
            raise ObservationFormatError(f"row {lineno}: k must count up from 1, got {k}")
        if not (math.isfinite(a) and a > 0):
            raise ObservationFormatError(f"row {lineno}: a must be finite and > 0")
        if i not in (1, 2):
            raise ObservationFormatError(f"row {lineno}: i must be 1 or 2")
        if not (math.isfinite(x) and x > 0):
            raise ObservationFormatError(f"row {lineno}: x must be finite and > 0")
        records.append((a, i, x))
    if not records:
        raise ObservationFormatError("no observation rows")
    return Observations.from_records(records)


def write_observations_csv(obs: Observations, path) -> None:
    Path(path).write_text(observations_to_csv(obs), newline="")


def read_observations_csv(path) -> Observations:
    return observations_from_csv(Path(path).read_text())


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    service1: ServiceDistribution
    service2: ServiceDistribution
    k_target: int = 1000
    n_runs: int = 200
    seed: int = 0
    estimator: EstimatorOptions = field(default_factory=EstimatorOptions)
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "service1": self.service1.to_dict(),
            "service2": self.service2.to_dict(),
            "k_target": self.k_target,
            "n_runs": self.n_runs,
            "seed": self.seed,
            "estimator": asdict(self.estimator),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown(d, {f.name for f in fields(cls)}, "")
        for key in ("params", "service1", "service2"):
            if key not in d:
                raise ConfigError(f"missing field '{key}'")
        params = _build(ModelParams, d["params"], "params")
        s1 = _build(ServiceDistribution, d["service1"], "service1")
        s2 = _build(ServiceDistribution, d["service2"], "service2")
        est = _build(EstimatorOptions, d.get("estimator", {}), "estimator")
        out = {}
        for key, kind, lo in (("k_target", int, 1), ("n_runs", int, 1), ("seed", int, 0)):
            if key in d:
                val = d[key]
                if isinstance(val, bool) or not isinstance(val, kind) or val < lo:
                    raise ConfigError(f"field '{key}' must be an integer >= {lo}, got {val!r}")
                out[key] = val
        if "output_dir" in d:
            if not isinstance(d["output_dir"], str):
                raise ConfigError("field 'output_dir' must be a string")
            out["output_dir"] = d["output_dir"]
        return cls(params=params, service1=s1, service2=s2, estimator=est, **out)


def _reject_unknown(d: dict, allowed: set, prefix: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown field '{prefix}{unknown[0]}'")


def _build(cls, d, name):
    if not isinstance(d, dict):
        raise ConfigError(f"field '{name}' must be an object")
    _reject_unknown(d, {f.name for f in fields(cls)}, name + ".")
    for key, val in d.items():
        if isinstance(val, bool):
            raise ConfigError(f"field '{name}.{key}' has invalid value {val!r}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"field '{name}': {exc}") from None
    except ValueError as exc:
        # messages from the constructors start with the offending field name
        msg = str(exc)
        field_name = msg.split()[0] if msg else ""
        if field_name in {f.name for f in fields(cls)}:
            raise ConfigError(f"field '{name}.{field_name}': {msg}") from None
        raise ConfigError(f"field '{name}': {msg}") from None


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(data)


def summary_dict(run: SimRunOutput, params: ModelParams) -> dict:
    return {
        "T": run.total_time,
        "N": run.n_switches,
        "k": run.k,
        "n_potential": run.n_potential,
        "n_balks": run.n_balks,
        "seed": run.seed,
        "joining_fraction": run.joining_fraction(params),
        "switching_fraction": run.switching_fraction(),
    }


def estimate_dict(res: EstimationResult) -> dict:
    return {
        "params_hat": asdict(res.params_hat) if res.params_hat is not None else None,
        "log_lik": res.log_lik if math.isfinite(res.log_lik) else None,
        "c_tilde": res.c_tilde,
        "converged": res.converged,
        "n_evals": res.n_evals,
        "n_restarts": res.n_restarts,
        "message": res.message,
    }
