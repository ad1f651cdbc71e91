import json

import pytest

from amlab.cli import main, run_scenario
from amlab.config import emit_config, parse_config
from amlab.errors import ConfigError

MINIMAL = """
[model]
family = "quadratic"
gamma = 0.1
[scenario]
name = "flatness"
taus = [0.1, 0.03]
epsilons = [0.1]
[grid]
nodes = 31
coarse_nodes = 21
"""


def test_defaults_echo_mu():
    cfg = parse_config(MINIMAL)
    assert cfg.data["scenario"]["mu"] == pytest.approx(1 / 32)
    assert "mu = 0.03125" in emit_config(cfg)
    assert cfg.data["solver"]["tolerance"] == 1e-9


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="epsilonn"):
        parse_config(MINIMAL.replace("epsilons", "epsilonn"))
    with pytest.raises(ConfigError, match="bogus"):
        parse_config("bogus = 1\n" + MINIMAL)


def test_missing_block():
    with pytest.raises(ConfigError, match="scenario"):
        parse_config('[model]\nfamily = "quadratic"\n')


@pytest.mark.parametrize("text", [
    MINIMAL.replace("gamma = 0.1", "gamma = -1"),
    MINIMAL.replace('family = "quadratic"', 'family = "cubic"'),
    MINIMAL.replace("taus = [0.1, 0.03]", "taus = [1.5]"),
    MINIMAL + "[solver]\ndamping = 2.0\n",
    MINIMAL.replace("[scenario]", "[scenario]\nmu = 0.1"),
    "not toml [",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_round_trip_is_identical():
    cfg = parse_config(MINIMAL)
    again = parse_config(emit_config(cfg))
    assert again.data == cfg.data
    assert emit_config(again) == emit_config(cfg)


def test_two_point_sweep_writes_two_rows(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(MINIMAL)
    assert main(["run", str(path), "--out", str(tmp_path / "a"), "--seed", "4", "--threads", "1"]) == 0
    rows = (tmp_path / "a" / "flatness.csv").read_text().strip().split("\n")
    assert len(rows) == 3
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["passed"] and summary["seed"] == 4
    assert "seed = 4" in (tmp_path / "a" / "resolved_config.toml").read_text()
    assert main(["run", str(path), "--out", str(tmp_path / "b"), "--seed", "4"]) == 0
    for name in ("flatness.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_invalid_window_exits_nonzero(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(MINIMAL.replace("taus = [0.1, 0.03]", "taus = [0.0]"))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 1
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["status"] == "invalid"
    assert "delta_defect_window" in summary["failing"]


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(MINIMAL.replace("epsilons", "epsilonn"))
    assert main(["validate", str(bad)]) == 2
    assert "epsilonn" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    nonconv = tmp_path / "nc.toml"
    nonconv.write_text(MINIMAL + "[solver]\nmax_iterations = 1\n")
    assert main(["run", str(nonconv), "--out", str(tmp_path / "nc")]) == 3
    good = tmp_path / "good.toml"
    good.write_text(MINIMAL)
    assert main(["validate", str(good)]) == 0


def test_stability_and_blowup_scenarios():
    stab = parse_config('[model]\nfamily = "quadratic"\n[scenario]\nname = "stability"\ngammas = [0.2, 0.1]\n[grid]\nnodes = 17\n')
    status, art = run_scenario(stab)
    assert status == 0 and art["stability.csv"].count("\n") == 3
    blow = parse_config('[model]\nfamily = "quadratic"\n[scenario]\nname = "blowup"\nradii = [0.2, 0.1]\n[grid]\nnodes = 201\n')
    status, art = run_scenario(blow)
    assert status == 0 and json.loads(art["summary.json"])["report"]["radii"] == [0.2, 0.1]
