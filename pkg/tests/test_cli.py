import csv
import json
import os

import pytest

from hamswitch import cli
from hamswitch.config import OUTPUT_ENV, RunConfig, build_config, load_file
from hamswitch.errors import ConfigurationError, DominationError


def run(tmp_path, *args):
    return cli.main(list(args) + ["--out", str(tmp_path)])


def read_csv(path):
    with open(path) as fh:
        header = fh.readline()
        return header, list(csv.DictReader(fh))


def test_simulate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--system", "vanderpol-2regime", "--T", "10", "--dt", "1e-3",
            "--seed", "7"]
    assert run(a, *args) == 0 and run(b, *args) == 0
    ta, tb = (p / "trajectory.ndjson" for p in (a, b))
    assert ta.read_bytes() == tb.read_bytes()
    head = json.loads(ta.read_text().splitlines()[0])
    assert head["seed"] == 7 and len(head["config_sha256"]) == 64
    assert (a / "summary.ndjson").read_bytes() == (b / "summary.ndjson").read_bytes()


def test_seed_changes_output(tmp_path):
    run(tmp_path / "a", "simulate", "--T", "1", "--seed", "1")
    run(tmp_path / "b", "simulate", "--T", "1", "--seed", "2")
    assert (tmp_path / "a/trajectory.ndjson").read_bytes() != \
        (tmp_path / "b/trajectory.ndjson").read_bytes()


def test_verify_drift_builtin_h(tmp_path):
    assert run(tmp_path, "verify-drift", "--system", "langevin-2regime",
               "--candidate", "builtin-H") == 0
    header, rows = read_csv(tmp_path / "drift.csv")
    assert header.startswith("# hamswitch verify-drift config_sha256=")
    assert list(rows[0]) == ["point", "value", "bound", "margin"]
    summary = json.loads((tmp_path / "summary.ndjson").read_text().splitlines()[1])
    assert summary["pass"] is True and summary["alpha_star"] > 0


def test_occupation_matches_speed_density(tmp_path):
    assert run(tmp_path, "occupation", "--system", "overdamped-langevin", "--regime-frozen",
               "2", "--T", "1e4") == 0
    _, rows = read_csv(tmp_path / "occupation.csv")
    tv = 0.5 * sum(abs(float(r["mass"]) - float(r["reference"])) for r in rows)
    assert tv <= 0.05


def test_check_failure_exit_code(tmp_path):
    # the stated gamma = 0 cannot hold for u = (2, 1)
    assert run(tmp_path, "check-ergodicity-conditions") == cli.EXIT_CHECK_FAILED
    assert run(tmp_path, "check-ergodicity-conditions", "--cond", "u=[1, 0.5]") == 0


@pytest.mark.parametrize("args, code", [
    (["simulate", "--system", "nope"], cli.EXIT_UNKNOWN_SYSTEM),
    (["simulate", "--T", "-1"], cli.EXIT_CONFIG),
    (["simulate", "--param", "sigma=-2"], cli.EXIT_CONFIG),
    (["simulate", "--param", "bogus=1"], cli.EXIT_CONFIG),
    (["simulate", "--system", "langevin-2regime", "--x0", "50", "--dt", "0.1", "--T", "1"],
     cli.EXIT_BLOWUP),
])
def test_error_exit_codes(tmp_path, args, code):
    assert run(tmp_path, *args) == code


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["simulate", "--T", "0.1", "--out", str(blocker / "sub")]) == \
        cli.EXIT_OUTPUT


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    def breach(cfg, out):
        raise DominationError("rate above its bound")
    monkeypatch.setitem(cli.HANDLERS, "simulate", breach)
    assert run(tmp_path, "simulate") == cli.EXIT_INVARIANT


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate", "--T", "0.1"]) == 0
    assert (tmp_path / "env" / "trajectory.ndjson").exists()


def test_config_file_and_overrides(tmp_path):
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text("system: ornstein-uhlenbeck\nT: 0.5\nseed: 3\nparams:\n  theta: 2.0\n")
    assert run(tmp_path / "o", "simulate", "--config", str(cfg_path), "--seed", "4") == 0
    head = json.loads((tmp_path / "o/trajectory.ndjson").read_text().splitlines()[0])
    assert head["seed"] == 4
    bad = tmp_path / "bad.yaml"
    bad.write_text("no_such_key: 1\n")
    assert run(tmp_path / "o", "simulate", "--config", str(bad)) == cli.EXIT_CONFIG


def test_workers_do_not_change_results(tmp_path):
    args = ["transition", "--t", "0.5", "--n-paths", "500", "--dt", "1e-2", "--seed", "5"]
    run(tmp_path / "a", *args, "--workers", "1")
    run(tmp_path / "b", *args, "--workers", "2")
    assert (tmp_path / "a/transition.csv").read_bytes() == \
        (tmp_path / "b/transition.csv").read_bytes()


def test_remaining_subcommands_run(tmp_path):
    assert run(tmp_path, "series-check", "--system", "constant-switching", "--n-paths", "2000",
               "--dt", "1e-2") == 0
    _, rows = read_csv(tmp_path / "series.csv")
    assert list(rows[0]) == ["term", "estimate", "se", "bound", "pass"]
    assert run(tmp_path, "resolvent-check", "--n-paths", "500", "--dt", "1e-2") == 0
    assert run(tmp_path, "passage-time", "--n-paths", "2000", "--dt", "1e-3") == 0
    assert run(tmp_path, "dynkin-test", "--n-paths", "2000", "--function", "bump") == 0
    assert run(tmp_path, "martingale-test", "--n-paths", "300", "--dt", "1e-2",
               "--function", "trig") == 0
    assert run(tmp_path, "check-decay", "--system", "ornstein-uhlenbeck", "--x0", "2",
               "--x0b", "-2", "--k0b", "1", "--n-paths", "5000", "--dt", "1e-2") == 0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        build_config({}, {"n_paths": 0})
    with pytest.raises(ConfigurationError):
        build_config({}, {"mode": "exact"})
    with pytest.raises(ConfigurationError):
        build_config({"bogus": 1}, {})
    a = build_config({}, {"workers": 1, "output_dir": "x"})
    b = build_config({}, {"workers": 4})
    assert a.digest() == b.digest()
    assert a.digest() != build_config({}, {"seed": 1}).digest()
    assert RunConfig().workers >= 1


def test_load_file_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_file(str(tmp_path / "missing.yaml"))
    p = tmp_path / "list.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError):
        load_file(str(p))
    q = tmp_path / "dash.yaml"
    q.write_text("n-paths: 5\n")
    assert load_file(str(q)) == {"n_paths": 5}
