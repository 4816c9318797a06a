import csv

import pytest

from qquerylab.cli import EXPERIMENTS, Config, UsageError, fmt, main, run_experiment

SMALL = {
    "csto-equiv": "instances = 4",
    "advo-equiv": "instances = 3\nq_max = 1",
    "ow2h": "instances = 2\ntrials = 200",
    "ow2h-classical": "instances = 2\ntrials = 200",
    "puzzle-extract": "",
    "meta3": "max_rewinds = 2",
    "collapse": "bits_max = 1\np_max = 1",
    "repeat": "k_max = 3\ntrials = 100",
    "amplify": "trials = 200",
    "token": "bits_max = 1\ntrials = 50",
    "lightning": "bits_max = 1",
    "breaker": "lam_f = 2\nlam_o = 1\ntrials = 200",
    "find": "lam_o = 1\ntrials = 200",
    "sim4": "n_max = 2",
}


def run(tmp_path, name, cfg_text, seed=7):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(cfg_text + "\n")
    out = tmp_path / f"{name}.csv"
    code = main(["run", "--experiment", name, "--config", str(cfg), "--seed", str(seed), "--out", str(out)])
    return code, out


def test_every_experiment_has_a_small_config():
    assert set(SMALL) == set(EXPERIMENTS)


@pytest.mark.parametrize("name", sorted(SMALL))
def test_experiment_runs_clean(tmp_path, name):
    code, out = run(tmp_path, name, SMALL[name])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert rows
    assert set(EXPERIMENTS[name].columns) == set(rows[0])
    for r in rows:
        assert r.get("exact_pass") in ("1", "na", None)
    meta = dict(line.split("=", 1) for line in (tmp_path / f"{name}.csv.meta").read_text().splitlines())
    assert meta["experiment"] == name and meta["seed"] == "7"
    assert meta["exact_failures"] == "0"


def test_output_is_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    _, oa = run(a, "ow2h", SMALL["ow2h"], seed=11)
    _, ob = run(b, "ow2h", SMALL["ow2h"], seed=11)
    assert oa.read_bytes() == ob.read_bytes()


def test_unknown_experiment_is_a_usage_error(tmp_path, capsys):
    assert main(["run", "--experiment", "nope", "--seed", "1", "--out", str(tmp_path / "x.csv")]) == 2
    assert "unknown experiment" in capsys.readouterr().err


def test_unknown_config_key_is_a_usage_error(tmp_path):
    code, _ = run(tmp_path, "puzzle-extract", "bogus = 1")
    assert code == 2


def test_capped_parameter_is_a_usage_error(tmp_path):
    code, _ = run(tmp_path, "repeat", "k_max = 99")
    assert code == 2


def test_bad_seed(tmp_path):
    assert main(["run", "--experiment", "repeat", "--seed", "-1", "--out", str(tmp_path / "x.csv")]) == 2


def test_list(capsys):
    assert main(["list"]) == 0
    listed = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert sorted(listed) == sorted(EXPERIMENTS)


def test_config_parsing():
    cfg = Config.parse("# comment\n a = 3 \n\nb=x # trailing\n")
    assert cfg.int("a", 0, 0, 5) == 3
    assert cfg.choice("b", "y", ("x", "y")) == "x"
    assert cfg.unknown() == []
    with pytest.raises(UsageError):
        Config.parse("novalue\n")
    with pytest.raises(UsageError):
        Config({"a": "z"}).int("a", 0, 0, 5)


def test_run_experiment_directly():
    exp, rows = run_experiment("repeat", Config({"k_max": "2", "trials": "50"}), 3)
    assert exp.name == "repeat" and len(rows) == 2


def test_formatting():
    from fractions import Fraction

    assert fmt(True) == "1" and fmt(None) == "na"
    assert fmt(Fraction(3, 4)) == "3/4" and fmt(Fraction(2)) == "2"
    assert fmt(0.1 + 0.2) == "0.3"
