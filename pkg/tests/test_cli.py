import json
import math
import subprocess
import sys

import pytest

from cbmlab.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_PRECONDITION, main

SUB = {"branching": {"sigma": 0.0, "gamma": 1.0}, "migration": {"sigma": 1.0, "gamma": 0.0}}


def run(tmp_path, args, cfg=None, name="cfg.json"):
    argv = list(args)
    if cfg is not None:
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        argv.insert(argv.index("CFG"), str(path))
        argv.remove("CFG")
    return main(argv + ["--out", str(tmp_path / "out")])


def test_scale_writes_csv(tmp_path):
    cfg = {"pair": "sqrt_explosive", "params": {"alpha": 2.0, "alphabar": 0.0, "x_grid": [0.0, 1.0, 2.0]}}
    assert run(tmp_path, ["scale", "CFG"], cfg) == EXIT_OK
    lines = (tmp_path / "out" / "scale.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "x,phi,err_bound"
    assert len(lines) == 5


def test_degenerate_pair_exits_2(tmp_path):
    cfg = {"pair": SUB, "params": {"alpha": 1.0, "alphabar": 0.0}}
    assert run(tmp_path, ["scale", "CFG"], cfg) == EXIT_PRECONDITION


@pytest.mark.parametrize("cfg", [{"pair": "nonexistent", "params": {"alpha": 1, "alphabar": 0}},
                                 {"pair": "linear", "params": {"alpha": 1}},
                                 {"pair": "linear", "params": {"alpha": 1, "alphabar": 0}, "seed": -1},
                                 {"pair": "linear", "params": {"alpha": 1, "alphabar": 0}, "sim": {"dt_base": 0}}])
def test_bad_configs_exit_2(tmp_path, cfg):
    assert run(tmp_path, ["scale", "CFG"], cfg) == EXIT_PRECONDITION


def test_malformed_json_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["scale", str(path), "--out", str(tmp_path)]) == EXIT_PRECONDITION


def test_condition_violated_exits_2(tmp_path):
    cfg = {"pair": "brownian_branching", "params": {"alpha": 0.0, "alphabar": 0.0}}
    assert run(tmp_path, ["scale", "CFG"], cfg) == EXIT_PRECONDITION


def test_non_explosive_mc_explosion_exits_2(tmp_path):
    cfg = {"pair": "linear", "params": {"x": 1.0, "a": 0.0, "alpha": 1.0, "n_paths": 10}}
    assert run(tmp_path, ["mc-explosion", "CFG"], cfg) == EXIT_PRECONDITION


def test_undecided_exits_3(tmp_path, monkeypatch):
    from cbmlab import cli

    def undecided(cfg, out, chash):
        from cbmlab.scale_fns import hit_zero_prob
        from cbmlab.catalog import log_tail_migration_pair
        hit_zero_prob(log_tail_migration_pair(), 1.0)

    monkeypatch.setitem(cli.COMMANDS, "scale", undecided)
    assert run(tmp_path, ["scale", "CFG"], {"pair": "linear"}) == EXIT_NUMERICAL


def test_mc_passage_reruns_are_byte_identical(tmp_path):
    cfg = {"pair": "brownian_branching", "seed": 5, "sim": {"dt_base": 0.01, "horizon": 5.0},
           "params": {"x": 1.0, "a": 0.0, "alpha": 1.0, "n_paths": 500}}
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        cfg_path = tmp_path / "mc.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["mc-passage", str(cfg_path), "--out", str(out)]) == EXIT_OK
        outputs.append((out / "mc_passage.json").read_bytes())
    assert outputs[0] == outputs[1]
    rec = json.loads(outputs[0])
    assert 0.0 < rec["mean"] < 1.0 and rec["n"] == 500


def test_seed_override_changes_estimate(tmp_path):
    cfg = {"pair": "brownian_branching", "seed": 5, "sim": {"dt_base": 0.01, "horizon": 5.0},
           "params": {"x": 1.0, "a": 0.0, "alpha": 1.0, "n_paths": 300}}
    path = tmp_path / "mc.json"
    path.write_text(json.dumps(cfg))
    main(["mc-passage", str(path), "--out", str(tmp_path / "a")])
    main(["--seed", "6", "mc-passage", str(path), "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "mc_passage.json").read_text())
    b = json.loads((tmp_path / "b" / "mc_passage.json").read_text())
    assert a["mean"] != b["mean"]
    assert a["config_hash"] != b["config_hash"]


def test_simulate_writes_paths(tmp_path):
    cfg = {"pair": "brownian_branching", "seed": 1, "sim": {"dt_base": 0.01, "horizon": 2.0},
           "params": {"x": 1.0, "n_paths": 3}}
    assert run(tmp_path, ["simulate", "CFG"], cfg) == EXIT_OK
    out = tmp_path / "out"
    assert sorted(p.name for p in out.glob("path_*.csv")) == ["path_00000.csv", "path_00001.csv", "path_00002.csv"]
    status = json.loads((out / "status.json").read_text())
    assert status["absorbed"] + status["exploded"] + status["censored"] == 3


def test_mc_occupation(tmp_path):
    cfg = {"pair": "brownian_branching", "seed": 2, "sim": {"dt_base": 0.01},
           "params": {"x": 1.0, "a": 0.0, "alpha": 2.0, "alphabar": 1.0, "n_paths": 300}}
    assert run(tmp_path, ["mc-occupation", "CFG"], cfg) == EXIT_OK
    rec = json.loads((tmp_path / "out" / "mc_occupation.json").read_text())
    assert 0.0 <= rec["mean"] <= 0.5


def test_validate_example(tmp_path):
    assert main(["validate", "example", "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "validate_example.csv").read_text().splitlines()
    assert len(lines) == 2 + 108


def test_validate_coupling_small(tmp_path):
    cfg = {"params": {"n_seeds": 5}}
    assert run(tmp_path, ["validate", "coupling", "CFG"], cfg) == EXIT_OK


def test_validate_cross_failure_exits_3(tmp_path):
    # a deliberately coarse run with an impossible z bound
    cfg = {"sim": {"dt_base": 0.05, "horizon": 5.0},
           "params": {"n_paths": 200, "z_max": 0.0, "points": [[1, 0, 1, 0]]}}
    assert run(tmp_path, ["validate", "cross", "CFG"], cfg) == EXIT_NUMERICAL


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cbmlab", "validate", "example", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n_cases"] == 108
    assert math.isfinite(json.loads(proc.stdout)["worst_rel_error"])
