import json
import math

import pytest

from brwexplode import cli


def _config(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _analyze(tmp_path, weight, extra=(), offspring='family = "power_tail"\nbeta = 0.5'):
    cfg = _config(tmp_path, f"[offspring]\n{offspring}\n[weight]\n{weight}\n")
    return cli.main(["analyze", "--config", cfg, "--out-dir", str(tmp_path), *extra])


def test_analyze_explosive_pair(tmp_path, capsys):
    assert _analyze(tmp_path, 'family = "uniform01"') == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "ExplodesCertified" in out
    doc = json.loads((tmp_path / "analyze.json").read_text())
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert doc["result"]["minsum"]["verdict"] == "ExplodesCertified"
    assert doc["config_hash"] == cli.RunConfig.from_dict(doc["config"]).hash()


def test_analyze_non_explosive_pair(tmp_path, capsys):
    assert _analyze(tmp_path, 'family = "double_exp_small"') == cli.EXIT_OK
    assert "NoExplosionCertified" in capsys.readouterr().out


def test_analyze_not_plump_is_undetermined(tmp_path):
    code = _analyze(tmp_path, 'family = "uniform01"', offspring='family = "deterministic"\nk = 2')
    assert code == cli.EXIT_UNDETERMINED


def test_atom_needs_collapse_flag(tmp_path, capsys):
    weight = 'family = "mixture_zero_atom"\np = 0.5\nbase = { family = "uniform01" }'
    assert _analyze(tmp_path, weight) == cli.EXIT_ERROR
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "UsageError" and "--collapse" in err["message"]
    code = _analyze(tmp_path, weight, extra=["--collapse"], offspring='family = "deterministic"\nk = 2')
    assert code == cli.EXIT_UNDETERMINED
    doc = json.loads((tmp_path / "analyze.json").read_text())
    assert doc["result"]["case"]["case_label"]


def test_unknown_keys_rejected(tmp_path, capsys):
    bad_run = _config(tmp_path, "[run]\nsede = 3\n")
    assert cli.main(["simulate", "--config", bad_run, "--out-dir", str(tmp_path)]) == cli.EXIT_ERROR
    bad_section = _config(tmp_path, "[runn]\nseed = 3\n", "b.toml")
    assert cli.main(["simulate", "--config", bad_section, "--out-dir", str(tmp_path)]) == cli.EXIT_ERROR
    with pytest.raises(cli.UsageError):
        cli.RunConfig.from_dict({"command": "simulate", "extra": {}})


def test_run_config_round_trip():
    cfg = cli.RunConfig("simulate", {"family": "power_tail", "beta": 0.5}, {"family": "uniform01"},
                        {"seed": 7, "reps": 10, "threads": 4})
    back = cli.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.to_dict() == cfg.to_dict() and back.hash() == cfg.hash()
    # thread count does not enter the hash
    assert cli.RunConfig("simulate", cfg.offspring, cfg.weight, {"seed": 7, "reps": 10}).hash() == cfg.hash()


def test_simulate_csv_is_byte_identical(tmp_path):
    outs = []
    for i, threads in enumerate(("1", "1", "3")):
        d = tmp_path / f"run{i}"
        argv = ["simulate", "--depth", "6", "--reps", "20", "--seed", "7", "--threads", threads,
                "--format", "csv", "--out-dir", str(d)]
        assert cli.main(argv) == cli.EXIT_OK
        outs.append((d / "simulate.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    head = outs[0].decode().splitlines()
    assert head[0] == f"# schema_version={cli.SCHEMA_VERSION}" and head[1].startswith("# config_hash=")
    assert '"seed":7' in head[2]


def test_findpath_records_resolved_alpha(tmp_path):
    argv = ["findpath", "--generations", "4", "--alpha", "auto", "--reps", "5", "--out-dir", str(tmp_path)]
    assert cli.main(argv) == cli.EXIT_OK
    doc = json.loads((tmp_path / "findpath.json").read_text())
    assert doc["config"]["run"]["alpha"] == pytest.approx(2**-0.5)
    assert doc["result"]["alpha"] == pytest.approx(2**-0.5)
    assert doc["result"]["tie_rule"] == "stable_draw_order"
    assert len(doc["result"]["records"]) == 5


def test_counterexample_toy(tmp_path, capsys):
    assert cli.main(["counterexample", "--toy", "--out-dir", str(tmp_path)]) == cli.EXIT_OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) == 3 and all(ln.startswith("PASS") for ln in lines)
    doc = json.loads((tmp_path / "counterexample.json").read_text())
    assert doc["result"]["spec"]["n_seq"][:2] == ["4", "64"]


def test_collapse_command(tmp_path):
    argv = ["collapse", "--reps", "20000", "--s-grid", "0.3,0.7", "--out-dir", str(tmp_path), "--format", "csv"]
    assert cli.main(argv) in (cli.EXIT_OK, cli.EXIT_UNDETERMINED)
    rows = (tmp_path / "collapse.csv").read_text().splitlines()
    assert rows[3].startswith("s,") and len(rows) == 6


def test_limit_command_prints_verdicts(tmp_path, capsys):
    cfg = _config(tmp_path, '[offspring]\nfamily = "power_tail"\nbeta = 0.5\n'
                            '[weight]\nfamily = "double_exp_small"\n[run]\ndepths = [2, 3]\nreps = 4\n')
    code = cli.main(["limit", "--config", cfg, "--budget", "2000", "--width", "64", "--out-dir", str(tmp_path)])
    assert code in (cli.EXIT_OK, cli.EXIT_UNDETERMINED)
    assert "interval check" in capsys.readouterr().out


def test_clean_marks_non_finite():
    assert cli._clean({"a": math.inf, "b": math.nan, "c": -math.inf}) == {"a": "Infinite", "b": None, "c": "-Infinite"}
