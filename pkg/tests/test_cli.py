import csv
import subprocess
import sys

import pytest
import yaml

from bcrmdp import bench
from bcrmdp.cli import (CONFIGS, ConfigError, GridConfig, SaaStepConfig, build, config_to_dict,
                        dump_config, main, parse_config, parse_overrides)


def write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data) if isinstance(data, dict) else data)
    return str(p)


def header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def test_missing_gamma_takes_default(tmp_path):
    cfg = parse_config(write(tmp_path, "inv.yaml", {"o": 2.0, "h": 4.0}), cls=bench.InventoryConfig)
    assert cfg.gamma == 0.8


def test_out_of_range_alpha_is_validation_error(tmp_path):
    path = write(tmp_path, "bet.yaml", {"alpha": 1.2})
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(path, cls=bench.SpreadBettingConfig)
    assert main(["bet-experiment", "--config", path, "--out", str(tmp_path)]) == 3


def test_override_supersedes_file(tmp_path):
    path = write(tmp_path, "bet.yaml", {"alpha": 0.3, "beta": 0.7})
    cfg = parse_config(path, ["alpha=0.5"], cls=bench.SpreadBettingConfig)
    assert (cfg.alpha, cfg.beta) == (0.5, 0.7)
    assert parse_config(path, ["alpha=0.5"], bench.SpreadBettingConfig, seed=11).seed == 11


def test_unknown_and_mistyped_keys_are_named(tmp_path):
    with pytest.raises(ConfigError, match="gamm"):
        parse_config(write(tmp_path, "a.yaml", {"gamm": 0.8}))
    with pytest.raises(ConfigError, match="replications"):
        parse_config(write(tmp_path, "b.yaml", {"replications": "many"}))
    with pytest.raises(ConfigError, match="line 2"):
        parse_config(write(tmp_path, "c.yaml", "o: 2\nh: : 4\n"))
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "missing.yaml"))


def test_nested_overrides():
    assert parse_overrides(["inventory.gamma=0.5", "bcr=E|E"]) == {"inventory": {"gamma": 0.5}, "bcr": "E|E"}
    with pytest.raises(ConfigError):
        parse_overrides(["novalue"])


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_config_round_trip(name):
    cls = CONFIGS[name]
    cfg = build(cls, {})
    assert build(cls, yaml.safe_load(dump_config(cfg))) == cfg
    assert config_to_dict(cfg)["seed"] == 0


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_seed_is_usage_error():
    assert main(["grid", "--seed", "-1"]) == 2


def test_runtime_failure_exits_one(tmp_path):
    # a file where the output directory should go
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["grid", "--out", str(blocker / "sub")]) == 1


def test_grid_is_deterministic(tmp_path):
    cfg = write(tmp_path, "g.yaml", {"stages": 5, "eps": 1.5, "m_max": 12})
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["grid", "--config", cfg, "--seed", "7", "--out", str(out)]) == 0
        outs.append((out / "grid.csv").read_bytes())
    assert outs[0] == outs[1]


def test_two_processes_give_identical_output(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"p{k}"
        subprocess.run([sys.executable, "-m", "bcrmdp.cli", "saa-step", "--seed", "3", "--out", str(out),
                        "--set", "N=40", "--set", "M=30"], check=True, capture_output=True)
        outs.append((out / "saa_step.csv").read_bytes())
    assert outs[0] == outs[1]


def test_inventory_experiment_header(tmp_path):
    args = ["inventory-experiment", "--out", str(tmp_path), "--set", "replications=1",
            "--set", "checkpoints=[1]", "--set", "perf_replications=0", "--set", "variants=['VaR:0.6|E']",
            "--set", "grid_depth=2", "--set", "k_theta=8", "--set", "vi_eps=1.0"]
    assert main(args) == 0
    assert header(tmp_path / "inventory_gap.csv") == ["variant", "t", "replication", "sup_gap"]


def test_bet_experiment_headers(tmp_path):
    args = ["bet-experiment", "--out", str(tmp_path), "--set", "T=3", "--set", "replications=2",
            "--set", "n_history=[5]", "--set", "models=[standard, dr]", "--set", "hist_levels=[0.5]",
            "--set", "hist_n=5", "--set", "k_theta=8"]
    assert main(args) == 0
    assert header(tmp_path / "betting_summary.csv") == ["model", "N", "mean", "variance", "cpu_seconds"]
    assert header(tmp_path / "betting_hist.csv") == ["model", "alpha", "beta", "replication", "loss"]


def test_grid_error_header(tmp_path):
    args = ["grid-error", "--out", str(tmp_path), "--set", "runs=3", "--set", "eps=[2.0]", "--set", "m_max=[10]"]
    assert main(args) == 0
    assert header(tmp_path / "grid_error.csv") == ["eps", "mmax", "replication", "delta", "bound"]


def test_solve_commands_write_tables(tmp_path):
    assert main(["solve-finite", "--out", str(tmp_path), "--set", "T=3", "--set", "k_theta=8"]) == 0
    assert header(tmp_path / "finite_policy.csv")[-1] == "action"
    assert main(["solve-infinite", "--out", str(tmp_path), "--set", "dirac_theta=10",
                 "--set", "inventory.vi_eps=1.0"]) == 0
    assert header(tmp_path / "infinite_policy.csv")[-1] == "action"


def test_dump_config(capsys):
    assert main(["saa-step", "--dump-config", "--set", "alpha=0.3"]) == 0
    assert build(SaaStepConfig, yaml.safe_load(capsys.readouterr().out)).alpha == 0.3


def test_cli_owned_configs_validate():
    with pytest.raises(ConfigError):
        build(GridConfig, {"family": "nope"})
    with pytest.raises(ConfigError):
        build(SaaStepConfig, {"method": "x"})
