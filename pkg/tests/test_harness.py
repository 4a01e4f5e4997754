import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from softpg import __version__
from softpg.harness.cli import main
from softpg.harness.config import ConfigError, instance_env, instance_name, load_config, parse_config
from softpg.harness.presets import PRESETS, list_presets, load_preset, preset_text
from softpg.harness.runner import (
    AGGREGATE_COLUMNS,
    RUNS_COLUMNS,
    TRACE_COLUMNS,
    RunResult,
    aggregate,
    run_experiment,
    run_id,
    run_seed,
    verify_suite,
)

SMALL = """
[experiment]
name = small
T = 2000
instances = 2
repeats = 2
base_seed = 7
trace_points = 50

[env]
kind = bandit
family = bernoulli
A = 4
gap = 0.3

[algorithm SPG-ESS]
beta = 1

[algorithm SPG-O-G]

[algorithm PG]
"""


def small(**kw):
    return parse_config(SMALL).with_(**kw)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- presets / config


def test_preset_names():
    names = list_presets()
    expected = {"fig1-exact-mdps", "fig3-exact-entropy", "fig4-entropy-uniform", "fig5-entropy-bad", "verify-all"}
    expected |= {f"fig2-{lvl}-{fam}" for lvl in ("easy", "hard") for fam in ("bernoulli", "gaussian", "beta")}
    assert set(names) == expected
    assert len(names) == len(set(names))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_parses(name):
    cfg = load_preset(name)
    assert cfg.name == name
    if cfg.mode == "run":
        assert cfg.algorithms and all(c.T == cfg.T for _, c in cfg.algorithms)


def test_fig2_preset_settings():
    cfg = load_preset("fig2-easy-bernoulli")
    assert (cfg.T, cfg.instances, cfg.repeats) == (100_000, 25, 5)
    assert (cfg.env.A, cfg.env.gap, cfg.env.family) == (10, 0.5, "bernoulli")
    algos = dict(cfg.algorithms)
    assert algos["SPG-ESS"].eta0 == 1 / 18 and algos["SPG-ESS"].beta == 1
    assert algos["SPG-ESS-D"].T0 == 5000
    assert load_preset("fig2-hard-beta").env.gap == 0.1


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset_text("nope")


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(SMALL.replace("beta = 1", "betta = 1"))
    with pytest.raises(ConfigError):
        parse_config(SMALL.replace("instances = 2", "instances = 0"))
    with pytest.raises(ConfigError):
        parse_config(SMALL.replace("family = bernoulli", "family = cauchy"))
    with pytest.raises(ConfigError):
        parse_config(SMALL.replace("[algorithm PG]", "[algorithm PG-NOPE]"))
    with pytest.raises(ConfigError):
        parse_config("[env]\nkind = bandit\n")
    with pytest.raises(ConfigError, match="not found"):
        parse_config("[experiment]\nname = m\ninstances = 1\n[env]\nkind = mdp\nfiles = /nonexistent.txt\n[algorithm PG]\n")
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nname = m\n[bogus]\n[algorithm PG]\n")
    path = tmp_path / "c.ini"
    path.write_text(SMALL)
    assert load_config(path).name == "small"


def test_seed_formula_and_ids():
    assert run_seed(7, 2, 3, 1) == 7 + 2_000_000 + 3_000 + 1
    assert run_id(1, 2, 3) == "i001-r002-a003"


def test_instances_are_seeded():
    cfg = small()
    a, b = instance_env(cfg, 0), instance_env(cfg, 1)
    np.testing.assert_array_equal(a.means, instance_env(cfg, 0).means)
    assert not np.array_equal(a.means, b.means)
    assert a.opt_gap == pytest.approx(0.3)
    assert instance_name(cfg, 1) == "bandit001"
    mdp = load_preset("fig1-exact-mdps")
    assert [instance_name(mdp, i) for i in range(3)] == ["cliff_world", "deep_sea", "flat_grad"]


def test_with_pushes_T():
    cfg = small(T=123)
    assert all(c.T == 123 for _, c in cfg.algorithms)


# ---------------------------------------------------------------- aggregation


def _rr(label, iters, subopt, status="ok"):
    return RunResult("x", label, 0, "b", 0, 0, status, np.array(iters), np.array(subopt, dtype=float), "")


def test_aggregate_mean_ci_and_carry_forward():
    runs = [_rr("a", [0, 10, 20], [1.0, 0.5, 0.2]), _rr("a", [0, 10], [0.8, 0.1]), _rr("a", [0, 10, 20], [9, 9, 9], "diverged")]
    rows = aggregate(runs)
    assert [r[0] for r in rows] == [0, 10, 20]
    last = rows[-1]
    vals = np.array([0.2, 0.1])
    assert last[1] == pytest.approx(vals.mean())
    assert last[2] == pytest.approx(1.96 * vals.std(ddof=1) / math.sqrt(2))
    assert all(r[3] == 2 for r in rows)
    assert aggregate([]) == []


# ---------------------------------------------------------------- run_experiment


def test_run_experiment_outputs(tmp_path):
    cfg = small()
    res = run_experiment(cfg, tmp_path)
    assert len(res.runs) == 2 * 2 * 3 and not res.diverged
    seeds = sorted(r.seed for r in res.runs)
    assert seeds == sorted(run_seed(7, i, j, k) for i in range(2) for j in range(2) for k in range(3))
    trace = read_csv(tmp_path / "traces" / "SPG-ESS" / "i001-r000-a000.csv")
    assert tuple(trace[0]) == TRACE_COLUMNS
    assert trace[1][:5] == ["i001-r000-a000", "SPG-ESS", "bandit001", "0", str(run_seed(7, 1, 0, 0))]
    assert len(trace) - 1 <= 52
    agg = read_csv(tmp_path / "aggregate" / "SPG-ESS.csv")
    assert tuple(agg[0]) == AGGREGATE_COLUMNS
    assert all(row[4] == "4" for row in agg[1:])
    runs = read_csv(tmp_path / "runs.csv")
    assert tuple(runs[0]) == RUNS_COLUMNS and len(runs) == 13
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["complete"] and manifest["version"] == __version__ and manifest["config"] == SMALL
    assert len(manifest["files"]) == 12 + 3 + 1
    for rel, digest in manifest["files"].items():
        assert hashlib.sha256((tmp_path / rel).read_bytes()).hexdigest() == digest
    finals = res.finals("SPG-ESS")
    assert finals.size == 4 and np.all(finals >= 0)


def _csv_bytes(root: Path):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_byte_identical_reruns(tmp_path):
    cfg = small()
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    run_experiment(cfg, tmp_path / "c", workers=2)
    a = _csv_bytes(tmp_path / "a")
    assert a == _csv_bytes(tmp_path / "b") == _csv_bytes(tmp_path / "c")
    run_experiment(small(base_seed=8), tmp_path / "d")
    assert a != _csv_bytes(tmp_path / "d")


def test_diverged_runs_flagged(tmp_path):
    cfg = parse_config(SMALL.replace("[algorithm PG]", "[algorithm PG]\neta = inf"))
    res = run_experiment(cfg, tmp_path)
    assert len(res.diverged) == 4
    assert res.finals("PG").size == 0
    agg = read_csv(tmp_path / "aggregate" / "PG.csv")
    assert len(agg) == 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert sorted(manifest["diverged"]) == sorted(res.diverged)
    runs = [r for r in read_csv(tmp_path / "runs.csv")[1:] if r[1] == "PG"]
    assert all(r[5] == "diverged" for r in runs)


def test_mdp_experiment(tmp_path):
    cfg = load_preset("fig1-exact-mdps").with_(T=30, instances=1)
    res = run_experiment(cfg, tmp_path)
    assert len(res.runs) == 5
    assert {r.instance for r in res.runs} == {"cliff_world"}


# ---------------------------------------------------------------- verify suite


def test_verify_empty_property_list(tmp_path):
    cfg = parse_config("[experiment]\nname = v\nmode = verify\n[verify]\nproperties =\n")
    reps = verify_suite(cfg, tmp_path)
    assert reps == []
    assert (tmp_path / "properties.csv").read_text().strip() == "name,trials,max_violation,tightness,pass"


def test_verify_small_suite(tmp_path):
    text = (
        "[experiment]\nname = v\nmode = verify\n[verify]\ntrials = 100\nbandit_instances = 2\n"
        "mdps = deep_sea\nsmall_mdps = 2\n"
    )
    reps = verify_suite(parse_config(text), tmp_path)
    assert reps and all(r.passed for r in reps)
    names = [r.name for r in reps]
    assert any(n.startswith("bandit000:") for n in names)
    assert any(n.startswith("deep_sea:") for n in names)
    assert "two_arm_sgc_equality" in names
    assert len(read_csv(tmp_path / "properties.csv")) == len(reps) + 1


def test_verify_unknown_property():
    with pytest.raises(ConfigError, match="unknown properties"):
        parse_config("[experiment]\nname = v\nmode = verify\n[verify]\nproperties = bogus\n")
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nname = v\nmode = verify\n[verify]\nmdps = nowhere\n")


# ---------------------------------------------------------------- CLI


def test_cli_list_presets(capsys):
    assert main(["list-presets"]) == 0
    assert "verify-all" in capsys.readouterr().out.split()


def test_cli_usage_errors(tmp_path):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["run", "no-such-preset-or-file"]) == 1
    assert main(["run", "fig2-easy-bernoulli", "--iters", "0", "--out", str(tmp_path)]) == 1
    assert main(["--version"]) == 0


def test_cli_run_and_env_out(tmp_path, monkeypatch, capsys):
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text(SMALL)
    assert main(["run", str(cfg_path), "--out", str(tmp_path / "o"), "--iters", "500", "--seed", "3"]) == 0
    assert (tmp_path / "o" / "small" / "runs.csv").is_file()
    monkeypatch.setenv("SOFTPG_OUT", str(tmp_path / "env"))
    assert main(["run", str(cfg_path), "--iters", "100", "--instances", "1", "--repeats", "1"]) == 0
    runs = read_csv(tmp_path / "env" / "small" / "runs.csv")
    assert len(runs) == 4 and runs[1][4] == str(run_seed(7, 0, 0, 0))
    assert "mean final suboptimality" in capsys.readouterr().out


def test_cli_divergence_exit_code(tmp_path):
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text(SMALL.replace("[algorithm PG]", "[algorithm PG]\neta = inf"))
    assert main(["run", str(cfg_path), "--out", str(tmp_path), "--iters", "50"]) == 2


def test_cli_verify_exit_codes(tmp_path):
    ok = tmp_path / "ok.ini"
    ok.write_text("[experiment]\nname = v\nmode = verify\n[verify]\nproperties = two_arm_sgc, entropy_bias\ntrials = 50\n")
    assert main(["verify", "--config", str(ok), "--out", str(tmp_path)]) == 0
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nname = v\nmode = verify\n[verify]\nproperties = nope\n")
    assert main(["verify", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_cli_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text(SMALL)
    assert main(["run", str(cfg_path), "--out", str(blocker), "--iters", "10"]) == 3
