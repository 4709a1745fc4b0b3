import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clansim.environment import Environment
from clansim.experiments import ConfigError, StateSpaceOverflow, ctmc_stationary, load_config, resolve_config
from clansim.experiments.cli import main
from clansim.experiments.config import config_hash
from clansim.experiments.runner import fmt
from clansim.lattice import box
from clansim.models import HardCoreModel, free_model


def test_ctmc_single_site():
    m = HardCoreModel.single_site(1)
    dist = ctmc_stationary(m, Environment.homogeneous(m, [(0,)], 1.0))
    assert dist.prob((0,)) == pytest.approx(0.5, abs=1e-12)
    assert dist.prob((1,)) == pytest.approx(0.5, abs=1e-12)
    assert dist.residual < 1e-10


def test_ctmc_three_states():
    m = HardCoreModel(1, [[(0,)], [(0,)]])
    env = Environment.homogeneous(m, [(0,)], 1.0, kind_weights=[1.0, 2.0])
    dist = ctmc_stationary(m, env)
    assert len(dist.states) == 3
    assert [dist.prob(s) for s in [(0, 0), (1, 0), (0, 1)]] == pytest.approx([0.25, 0.25, 0.5], abs=1e-12)


def test_ctmc_generator_rows_sum_to_zero():
    m = HardCoreModel.domino(2)
    env = Environment.homogeneous(m, box((0, 0), 1), 0.7)
    animals = env.animals_containing((0, 0))
    dist = ctmc_stationary(m, env, animals=animals)
    assert np.abs(dist.generator.sum(axis=1)).max() < 1e-12
    assert dist.residual < 1e-10 and (dist.pi >= 0).all() and dist.pi.sum() == pytest.approx(1.0)


def test_ctmc_truncated_poisson():
    m = free_model(1)
    w, cap = 1.5, 8
    a = m.make((0,))
    dist = ctmc_stationary(m, {a: w}, animals=[a], max_multiplicity=cap)
    weights = np.array([w ** k / math.factorial(k) for k in range(cap + 1)])
    expected = weights / weights.sum()
    got = dist.marginal(a)
    assert [got[k] for k in range(cap + 1)] == pytest.approx(expected.tolist(), abs=1e-12)


def test_ctmc_overflow():
    m = free_model(1)
    a = m.make((0,))
    with pytest.raises(StateSpaceOverflow):
        ctmc_stationary(m, {a: 1.0}, animals=[a])


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_cells_round_trip(x):
    assert float(fmt(x)) == x


def test_fmt_uses_seventeen_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(None) == "" and fmt(True) == "true" and fmt((1, 2)) == "1 2"


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


ZERO = {"disorder": {"marginal": {"name": "degenerate", "value": 0.0}}, "region": {"radius": 2}}


def test_sample_zero_rate_writes_empty_table(tmp_path, capsys):
    code, out, _ = run_cli(["sample", "--config", write(tmp_path, ZERO), "--replicas", "5",
                            "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    paths = json.loads(out)
    lines = open(paths["csv"]).read().splitlines()
    assert lines[0].startswith("# clansim ") and "config_hash=" in lines[0] and "seed=0" in lines[0]
    assert lines[1:] == ["replica,animal_id,multiplicity"]
    summary = json.load(open(paths["json"]))
    assert summary["summary"]["status_counts"] == {"closed": 5}
    assert summary["metadata"]["config_hash"] == config_hash(json.load(open(paths["config"])))


def test_config_error_reports_pointer(tmp_path, capsys):
    bad = write(tmp_path, {"model": {"name": "ising"}})
    code, _, err = run_cli(["sample", "--config", bad], capsys)
    assert code == 2
    msg = json.loads(err)
    assert msg["error"] == "config" and msg["path"] == "/model/name"


def test_unknown_param_rejected(tmp_path, capsys):
    code, _, err = run_cli(["regularity", "--config", write(tmp_path, {"params": {"bogus": 1}})], capsys)
    assert code == 2 and json.loads(err)["path"] == "/params"


def test_bad_json_and_bad_flag_values(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{")
    code, _, err = run_cli(["sample", "--config", str(p)], capsys)
    assert code == 2 and "invalid JSON" in json.loads(err)["message"]
    code, _, err = run_cli(["sample", "--replicas", "0", "--out", str(tmp_path)], capsys)
    assert code == 2 and json.loads(err)["path"] == "/replicas"


def test_runtime_error_exit_code(tmp_path, capsys):
    cfg = {"params": {"t_x": -1.0, "t_y": 0.0}}
    code, _, err = run_cli(["connectivity", "--config", write(tmp_path, cfg), "--replicas", "100",
                            "--out", str(tmp_path)], capsys)
    assert code == 3 and json.loads(err)["error"] == "runtime"


def test_output_directory_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CLANSIM_OUT", str(tmp_path / "envout"))
    code, out, _ = run_cli(["multiscale", "--replicas", "30"], capsys)
    assert code == 0 and str(tmp_path / "envout") in json.loads(out)["csv"]


def test_same_seed_gives_identical_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, {"model": {"name": "hardcore", "d": 2, "shape": "domino"},
                           "disorder": {"marginal": {"name": "uniform", "low": 0, "high": 0.2}},
                           "region": {"radius": 3}})
    outs = []
    for i, workers in enumerate(["1", "2"]):
        code, out, _ = run_cli(["clan-stats", "--config", cfg, "--replicas", "120", "--seed", "9",
                                "--workers", workers, "--out", str(tmp_path / f"r{i}")], capsys)
        assert code == 0
        outs.append(json.loads(out))
    for kind in ("csv", "json", "config"):
        assert open(outs[0][kind], "rb").read() == open(outs[1][kind], "rb").read()


def test_disorder_check_reports_threshold(tmp_path, capsys):
    code, out, _ = run_cli(["disorder-check", "--replicas", "20", "--out", str(tmp_path)], capsys)
    assert code == 0
    report = json.load(open(json.loads(out)["json"]))["summary"]
    assert report["a_threshold"] == pytest.approx(5.828427, abs=1e-6)


def test_clan_stats_uses_q_from_parameters(tmp_path, capsys):
    from clansim.multiscale import feasible_parameters
    code, out, _ = run_cli(["clan-stats", "--config", write(tmp_path, ZERO), "--replicas", "100",
                            "--out", str(tmp_path)], capsys)
    assert code == 0
    paths = json.loads(out)
    summary = json.load(open(paths["json"]))["summary"]
    assert summary["q"] == pytest.approx(1 / feasible_parameters(1).nu)
    rows = open(paths["csv"]).read().splitlines()[2:]
    assert rows and all(float(r.split(",")[4]) == 0.0 for r in rows)


def test_multiscale_refuses_large_scales(tmp_path, capsys):
    cfg = write(tmp_path, {**ZERO, "params": {"simulate": [0, 2], "n_scales": 3}})
    code, out, _ = run_cli(["multiscale", "--config", cfg, "--replicas", "30", "--out", str(tmp_path)], capsys)
    assert code == 0
    summary = json.load(open(json.loads(out)["json"]))["summary"]
    assert [r["scale"] for r in summary["refused"]] == [2]


@pytest.mark.parametrize("command", ["sample", "clan-stats", "connectivity", "regularity", "multiscale",
                                     "disorder-check"])
def test_config_echo_revalidates(tmp_path, capsys, command):
    cfg = resolve_config({}, command, {"out": str(tmp_path)})
    echo = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    path = write(tmp_path, echo, f"{command}.json")
    again = resolve_config(load_config(path), command)
    assert config_hash(again) == config_hash(cfg)


def test_resolve_rejects_wrong_command_and_dimension():
    with pytest.raises(ConfigError) as e:
        resolve_config({"command": "sample"}, "regularity")
    assert e.value.path == "/command"
    with pytest.raises(ConfigError) as e:
        resolve_config({"model": {"name": "hardcore", "d": 2}, "params": {"x": [0]}}, "clan-stats")
    assert e.value.path == "/params/x"
