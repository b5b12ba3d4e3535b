import json
import math
import subprocess
import sys
import time
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twostation.cli import main
from twostation.estimator import EstimatorOptions
from twostation.io import (
    ConfigError,
    ObservationFormatError,
    RunConfig,
    observations_from_csv,
    observations_to_csv,
)
from twostation.simulator import Observations
from twostation.values import ModelParams, ServiceDistribution

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ROW1 = CONFIGS / "exp_1_1_1_0p5.json"


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def write_config(path, **overrides):
    cfg = json.loads(ROW1.read_text())
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


class TestSimulate:
    def test_outputs(self, tmp_path):
        assert main(["simulate", "--config", str(ROW1), "--seed", "42", "--k", "1000", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "obs.csv").read_text().splitlines()
        assert lines[0] == "k,a,i,x" and len(lines) == 1001
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["seed"] == 42 and summary["k"] == 1000
        assert summary["n_potential"] == 1000 + summary["n_balks"]

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            main(["simulate", "--config", str(ROW1), "--seed", "42", "--k", "300", "--out", str(tmp_path / name)])
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_bad_field(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "bad.json", params={"lambda1": -1, "lambda2": 1, "theta": 1, "switch_cost": 0.5})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "params.lambda1" in capsys.readouterr().err

    def test_syntax_error_location(self, tmp_path, capsys):
        cfg = tmp_path / "broken.json"
        cfg.write_text('{\n  "params": {\n    "lambda1": 1,,\n')
        assert main(["simulate", "--config", str(cfg)]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 3

    def test_unwritable_out(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["simulate", "--config", str(ROW1), "--k", "30", "--out", str(blocker / "sub")]) == 3


class TestEstimate:
    def test_end_to_end(self, tmp_path):
        main(["simulate", "--config", str(ROW1), "--seed", "7", "--k", "1000", "--out", str(tmp_path / "sim")])
        for name in ("a", "b"):
            assert main(["estimate", str(tmp_path / "sim" / "obs.csv"), "--out", str(tmp_path / name)]) == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
        res = json.loads((tmp_path / "a" / "estimate.json").read_text())
        assert res["converged"] and math.isfinite(res["log_lik"])
        assert res["params_hat"]["switch_cost"] >= res["c_tilde"]

    def test_empty_file(self, tmp_path):
        (tmp_path / "obs.csv").write_text("")
        assert main(["estimate", str(tmp_path / "obs.csv"), "--out", str(tmp_path / "o")]) == 2

    def test_bad_row_reported(self, tmp_path, capsys):
        (tmp_path / "obs.csv").write_text("k,a,i,x\n1,0.5,1,1.0\n2,0.5,3,1.0\n")
        assert main(["estimate", str(tmp_path / "obs.csv"), "--out", str(tmp_path / "o")]) == 2
        assert "row 3" in capsys.readouterr().err

    def test_single_row_not_converged(self, tmp_path):
        (tmp_path / "obs.csv").write_text("k,a,i,x\n1,0.5,1,1.0\n")
        assert main(["estimate", str(tmp_path / "obs.csv"), "--out", str(tmp_path / "o")]) == 4
        res = json.loads((tmp_path / "o" / "estimate.json").read_text())
        assert res["converged"] is False and res["message"]


class TestReplicateCommand:
    def test_smoke_and_determinism(self, tmp_path):
        args = ["replicate", "--config", str(ROW1), "--runs", "2", "--k", "200", "--jobs", "1", "--seed", "3"]
        t0 = time.perf_counter()
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert time.perf_counter() - t0 < 30
        main(args + ["--out", str(tmp_path / "b")])
        files = tree_bytes(tmp_path / "a")
        assert files == tree_bytes(tmp_path / "b")
        assert {"table.csv", "estimates.csv", "hist_theta.csv", "hist_c.svg"} <= set(files)

    def test_too_few_runs(self, tmp_path):
        assert main(["replicate", "--config", str(ROW1), "--runs", "1", "--out", str(tmp_path)]) == 2


class TestThroughputCommand:
    def test_outputs_and_determinism(self, tmp_path):
        args = ["throughput", "--step", "0.25", "--k", "200", "--runs", "3", "--jobs", "1"]
        for name in ("a", "b"):
            assert main(args + ["--out", str(tmp_path / name)]) == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
        header = (tmp_path / "a" / "sweep.csv").read_text().splitlines()[0]
        assert "one_each" in header and "both_at_station1" in header


def test_no_writes_outside_out(tmp_path, monkeypatch):
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)
    out = tmp_path / "dest"
    main(["simulate", "--config", str(ROW1), "--k", "50", "--out", str(out)])
    main(["estimate", str(out / "obs.csv"), "--out", str(out)])
    main(["replicate", "--config", str(ROW1), "--runs", "2", "--k", "50", "--jobs", "1", "--out", str(out)])
    main(["throughput", "--step", "0.5", "--k", "50", "--runs", "2", "--jobs", "1", "--out", str(out)])
    assert list(work.iterdir()) == []
    assert sorted(p.name for p in tmp_path.iterdir()) == ["dest", "work"]


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "twostation.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout


positive = st.floats(min_value=1e-300, max_value=1e300, allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(positive, st.sampled_from([1, 2]), positive), min_size=1, max_size=40))
def test_observation_csv_round_trip(records):
    obs = Observations.from_records(records)
    back = observations_from_csv(observations_to_csv(obs))
    assert back == obs
    assert back.a.tobytes() == obs.a.tobytes() and back.x.tobytes() == obs.x.tobytes()


rate = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False)


@settings(max_examples=60)
@given(
    l1=rate, l2=rate, th=rate, c=st.floats(0, 1e3), kind=st.sampled_from(["exponential", "pareto"]), b=rate,
    k=st.integers(1, 10**6), seed=st.integers(0, 2**63), starts=st.integers(1, 20),
)
def test_config_round_trip(l1, l2, th, c, kind, b, k, seed, starts):
    cfg = RunConfig(
        ModelParams(l1, l2, th, c), ServiceDistribution(kind, b), ServiceDistribution("exponential", b),
        k_target=k, seed=seed, estimator=EstimatorOptions(n_starts=starts),
    )
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.update(bogus=1), "bogus"),
        (lambda d: d["params"].update(theta=0), "params.theta"),
        (lambda d: d["service1"].update(kind="gamma"), "service1"),
        (lambda d: d.update(k_target=0), "k_target"),
        (lambda d: d["estimator"].update(n_starts=True), "estimator.n_starts"),
    ],
)
def test_config_errors_name_field(mutate, field):
    d = json.loads(ROW1.read_text())
    d.setdefault("estimator", {})
    mutate(d)
    with pytest.raises(ConfigError, match=field):
        RunConfig.from_dict(d)


def test_observation_errors_are_value_errors():
    assert issubclass(ObservationFormatError, ValueError)
    with pytest.raises(ObservationFormatError, match="row 2"):
        observations_from_csv("k,a,i,x\n2,1,1,1\n")
