import pytest

from qadaptive import harness
from qadaptive.cli import main
from qadaptive.config import ConfigError, PRESETS, RunConfig, build_matrix, expand_values
from qadaptive.metrics import read_csv

SHORT = ["--set", "warmup_ns=20000", "--set", "measure_ns=20000"]


def _files(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*.csv"))}


def test_dump_config_round_trip_reproduces_outputs(tmp_path, capsys):
    args = ["--preset", "desk-72", *SHORT, "--set", "routing=ugaln", "--set", "load=0.4"]
    assert main(args + ["--dump-config"]) == 0
    text = capsys.readouterr().out
    assert "routing = ugaln" in text and "load = 0.4" in text
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(text)
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(["--config", str(cfg_file), "--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


SWEEP = ["--preset", "desk-72", *SHORT, "--set", "routing=min,valg,valn",
         "--set", "load=0.2..1.0 step 0.2", "--set", "seed=1..2"]


def test_sweep_writes_one_row_per_cell_in_order(tmp_path):
    assert main(SWEEP + ["--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "summary.csv")
    assert len(rows) == 30
    assert [r["routing"] for r in rows[:10]] == ["min"] * 10
    assert [(r["load"], r["seed"]) for r in rows[:4]] == [
        ("0.200000", "1"), ("0.200000", "2"), ("0.400000", "1"), ("0.400000", "2")]
    assert all(r["status"] == "ok" and len(r["config_hash"]) == 12 for r in rows)
    ts = read_csv(tmp_path / "timeseries.csv")
    assert len(ts) == 30 * 4 and set(ts[0]) >= {"t0_ns", "routing", "seed", "config_hash"}


def test_parallel_sweep_equals_serial(tmp_path):
    assert main(SWEEP + ["--out", str(tmp_path / "serial")]) == 0
    assert main(SWEEP + ["--out", str(tmp_path / "par"), "--parallel", "3"]) == 0
    assert _files(tmp_path / "serial") == _files(tmp_path / "par")


@pytest.mark.parametrize("override,key", [
    ("routing=ecmp", "routing"),
    ("load=1.5", "load"),
    ("bogus=1", "bogus"),
    ("pattern=adv:9", "pattern"),
    ("vc_buffer=0", "vc_buffer"),
    ("alpha=2", "alpha"),
])
def test_invalid_configuration_exits_2_and_names_the_key(override, key, capsys, tmp_path):
    assert main(["--set", override, "--out", str(tmp_path)]) == 2
    assert key in capsys.readouterr().err
    assert not (tmp_path / "summary.csv").exists()


def test_config_error_carries_key():
    with pytest.raises(ConfigError) as e:
        RunConfig(warmup="sometimes").validate()
    assert e.value.key == "warmup"


def test_presets():
    assert len(build_matrix("figure5").cells()) == 210
    assert len(build_matrix("figure6").cells()) == 42
    big = build_matrix("paper-2550").base
    assert (big.p, big.a, big.h, big.q_thld1, big.q_thld2) == (5, 10, 5, 0.05, 0.4)
    assert build_matrix("paper-1056").base.params().nodes == 1056
    assert set(PRESETS) == {"desk-72", "paper-1056", "paper-2550", "figure5", "figure6"}
    with pytest.raises(ConfigError):
        build_matrix("figure9")


def test_sweep_value_expansion():
    assert expand_values("load", "0.1..0.5 step 0.2") == [0.1, 0.3, 0.5]
    assert expand_values("seed", "1..3") == [1, 2, 3]
    assert expand_values("routing", "min, par") == ["min", "par"]
    with pytest.raises(ConfigError):
        expand_values("load", "0.1..0.5 step 0")


def test_config_hash_ignores_seed_backend_and_output():
    a = RunConfig()
    assert a.config_hash() == RunConfig(seed=9, backend="python", out="x").config_hash()
    assert a.config_hash() != RunConfig(load=0.6).config_hash()


def test_failed_cell_is_recorded_and_sweep_continues(tmp_path, monkeypatch, capsys):
    real = harness.run_experiment

    def flaky(cfg, topo=None):
        if cfg.routing == "valg":
            raise RuntimeError("boom")
        return real(cfg, topo)

    monkeypatch.setattr(harness, "run_experiment", flaky)
    args = ["--preset", "desk-72", *SHORT, "--set", "routing=min,valg,valn",
            "--out", str(tmp_path)]
    assert main(args) == 1
    rows = read_csv(tmp_path / "summary.csv")
    assert [r["status"] for r in rows] == ["ok", "error: RuntimeError: boom", "ok"]
    assert rows[1]["mean_ns"] == ""
    assert "2/3 runs ok" in capsys.readouterr().out


def test_optional_outputs(tmp_path):
    args = ["--preset", "desk-72", *SHORT, "--set", "routing=qadaptive", "--set", "trace=true",
            "--set", "dump_topology=true", "--set", "qtable_snapshot_ns=0,10000",
            "--set", "qtable_routers=0,5", "--out", str(tmp_path)]
    assert main(args) == 0
    topo_rows = read_csv(tmp_path / "topology.csv")
    assert len(topo_rows) == 36 * 7
    packets = read_csv(tmp_path / "packets.csv")
    assert packets and all(int(p["deliver_ns"]) > int(p["gen_ns"]) for p in packets)
    snap = read_csv(tmp_path / "qtable_router5.csv")
    assert len(snap) == 2 * 18 * 5
    assert {r["time_ns"] for r in snap} == {"0", "10000"}
    first = [r for r in snap if r["time_ns"] == "0"]
    assert min(float(r["value"]) for r in first) == 186.0


def test_converge_warmup_mode():
    cfg = RunConfig(routing="qadaptive", pattern="ur", load=0.5, warmup="converge",
                    measure_ns=20_000)
    res = harness.run_experiment(cfg)
    assert res.ok and res.warmup_end is not None and res.warmup_end <= 200_000
    assert res.summary["throughput"] == pytest.approx(0.5, abs=0.03)


def test_repeated_run_is_byte_identical(tmp_path):
    for name in ("x", "y"):
        assert main(["--preset", "desk-72", *SHORT, "--set", "routing=par",
                     "--set", "pattern=adv:4", "--set", "trace=true",
                     "--out", str(tmp_path / name)]) == 0
    assert _files(tmp_path / "x") == _files(tmp_path / "y")
