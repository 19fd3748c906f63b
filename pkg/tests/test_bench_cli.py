import csv
import io

import pytest

from enmesh import bench, cli
from enmesh.bench import (
    CSV_FIELDS,
    run_engine,
    run_experiment,
    run_opt,
    run_sharded,
    sweep,
    write_csv,
)
from enmesh.engine import ALGORITHMS, EngineConfig, SoundnessError
from enmesh.workload import WorkloadConfig, generate_trace

CFG = WorkloadConfig(num_queries=3000, num_users=700, group_interval=150, seed=2)
SMALL_FLAGS = ["--queries", "3000", "--users", "700", "--group-interval", "150"]


@pytest.fixture(scope="module")
def trace():
    return generate_trace(CFG)


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_report_accounting(trace, alg):
    r = run_experiment(trace, EngineConfig(alg, delay=150))
    assert r.committed + r.pending == r.total == len(trace)
    assert 0 <= r.match_pct <= 1
    assert 2 <= r.avg_group_size <= 12
    assert r.mean_lat >= 0 and r.med_lat <= r.p90_lat
    assert r.avg_processing_us > 0


def test_opt_report(trace):
    r = run_opt(trace)
    assert r.match_pct == 1.0 and r.pending == 0
    assert r.p90_lat < CFG.group_interval


def test_harness_catches_unsound_group(trace, monkeypatch):
    monkeypatch.setattr(bench, "verify_committable", lambda *a: False)
    with pytest.raises(SoundnessError):
        run_engine(trace, EngineConfig("NES"))


def test_csv_deterministic_without_timing(trace):
    a = write_csv([run_experiment(trace, EngineConfig("BMA", seed=4))], timing=False)
    b = write_csv([run_experiment(trace, EngineConfig("BMA", seed=4))], timing=False)
    assert a == b
    assert "avg_us" not in a.splitlines()[0]
    c = write_csv([run_experiment(trace, EngineConfig("BMA", seed=5))], timing=False)
    assert c != a


def test_csv_columns(trace, tmp_path):
    path = tmp_path / "out.csv"
    text = write_csv([run_opt(trace)], path)
    assert path.read_text() == text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_FIELDS and rows[0]["algorithm"] == "OPT"


def test_single_value_sweep_is_run_experiment(trace):
    eng = EngineConfig("NES", seed=1)
    (swept,) = sweep("delay", [150], CFG, eng, trace=trace)
    direct = run_experiment(trace, EngineConfig("DELAY", delay=150, seed=1))
    assert write_csv([swept], timing=False) == write_csv([direct], timing=False)


def test_group_interval_sweep_regenerates():
    reports = sweep("group_interval", [100, 300], CFG, EngineConfig("NES"))
    assert [r.group_interval for r in reports] == [100, 300]


def test_sweep_rejects_bad_input():
    with pytest.raises(ValueError):
        sweep("delay", [], CFG, EngineConfig())
    with pytest.raises(ValueError):
        sweep("seed", [1], CFG, EngineConfig())


def test_sharded_run(trace):
    one = run_sharded(trace, EngineConfig("NES"), 1)
    many = run_sharded(trace, EngineConfig("NES"), 4, workers=1)
    assert one.committed == run_experiment(trace, EngineConfig("NES")).committed
    assert many.total == len(trace) and many.algorithm == "NESx4"
    assert many.match_pct <= one.match_pct + 0.02


# -- command line ----------------------------------------------------------


def test_cli_generate_then_run(tmp_path, capsys):
    out = tmp_path / "w.trace"
    assert cli.main(["generate", "-o", str(out), *SMALL_FLAGS, "--seed", "2"]) == 0
    capsys.readouterr()
    assert cli.main(["run", "-t", str(out), "-a", "NES", "--no-timing"]) == 0
    text = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rows[0]["algorithm"] == "NES" and 0 < float(rows[0]["match_pct"]) <= 1


def test_cli_opt(tmp_path, capsys):
    assert cli.main(["run", *SMALL_FLAGS, "-a", "OPT", "--no-timing"]) == 0
    assert ",1.000000," in capsys.readouterr().out


def test_cli_seed_env_overrides(monkeypatch, capsys):
    args = ["run", *SMALL_FLAGS, "-a", "BMA", "--no-timing"]
    monkeypatch.setenv("ENMESH_SEED", "3")
    cli.main(args + ["--seed", "8"])
    env_out = capsys.readouterr().out
    monkeypatch.delenv("ENMESH_SEED")
    cli.main(args + ["--seed", "3"])
    assert capsys.readouterr().out == env_out


def test_cli_sweep_csv(tmp_path, capsys):
    path = tmp_path / "s.csv"
    rc = cli.main(["sweep", "--param", "delay", "--values", "15,150", *SMALL_FLAGS, "--csv", str(path)])
    assert rc == 0
    rows = list(csv.DictReader(path.open()))
    assert [r["delay"] for r in rows] == ["15", "150"]
    assert all(r["algorithm"] == "DELAY" for r in rows)


def test_cli_oracle(capsys):
    assert cli.main(["oracle", "--k", "3"]) == 0
    out = capsys.readouterr().out
    assert "9 committed" in out and "ratio: 3" in out


def test_cli_soundness_exit_code(monkeypatch):
    monkeypatch.setattr(bench, "verify_committable", lambda *a: False)
    assert cli.main(["run", *SMALL_FLAGS, "-a", "NES"]) == 2


def test_cli_sharded(capsys):
    assert cli.main(["run", *SMALL_FLAGS, "--shards", "2", "--no-timing"]) == 0
    assert "NESx2" in capsys.readouterr().out
