import json

import pytest

from kghybrid import cli
from kghybrid.config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config

TINY = """
# small smoke config
difficulties = 1
n_train = 2
n_test = 2
episodes = 1
n_demos = 400
noise_add = 0.2
noise_drop = 0, 0.06
q.episodes = 60
pruner.epochs = 3
network.epochs = 2
"""


def test_parse_values_and_nesting():
    cfg = parse_config(TINY + "baseline_network = no\ntau = 0.25\n")
    assert cfg.difficulties == [1] and cfg.noise_drop == [0.0, 0.06]
    assert cfg.q.episodes == 60 and cfg.pruner.epochs == 3
    assert cfg.baseline_network is False and cfg.tau == 0.25


def test_dump_round_trip():
    cfg = parse_config(TINY)
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(dump_config(ExperimentConfig())) == ExperimentConfig()


@pytest.mark.parametrize("text,path", [
    ("tau = -1", "tau"),
    ("pruner.epochs = zero", "pruner.epochs"),
    ("pruner.bogus = 1", "pruner.bogus"),
    ("colour = blue", "colour"),
    ("teacher = human", "teacher"),
    ("difficulties = 1, 7", "difficulties"),
    ("noise_drop = 2", "noise_drop"),
    ("tau 0.3", "line 1"),
    ("pruner = 3", "pruner"),
])
def test_config_errors_name_the_field(text, path):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_cli_rejections_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("q.gamma = 3\n")
    assert cli.main(["run-all", "--config", str(bad), "--out", str(tmp_path / "o")]) != 0
    assert "q.gamma" in capsys.readouterr().err
    assert cli.main(["mine-rules", "--demos", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "r")]) != 0
    with pytest.raises(SystemExit) as info:
        cli.main(["eval", "--split", "dev"])
    assert info.value.code != 0
    assert cli.main(["eval", "--difficulty", "1"]) != 0


def test_cli_pipeline(tmp_path, capsys):
    p = lambda name: str(tmp_path / name)
    assert cli.main(["gen-envs", "--difficulty", "1", "--n-train", "3", "--n-test", "3", "--out", p("m.json")]) == 0
    assert cli.main(["collect-demos", "--manifest", p("m.json"), "--n", "500", "--out", p("d.jsonl")]) == 0
    assert len(open(p("d.jsonl")).read().splitlines()) == 500
    assert cli.main(["mine-rules", "--demos", p("d.jsonl"), "--out", p("rules.json")]) == 0
    assert cli.main(["train-pruner", "--demos", p("d.jsonl"), "--epochs", "5", "--out", p("pruner.json")]) == 0
    assert cli.main(["sweep-tau", "--demos", p("d.jsonl"), "--taus", "0.1,0.5"]) == 0
    capsys.readouterr()

    assert cli.main(["eval", "--manifest", p("m.json"), "--rules", p("rules.json"), "--pruner", p("pruner.json"),
                     "--episodes", "1"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["episodes"] == 3 and 0.0 <= res["mean"] <= 1.0

    assert cli.main(["eval", "--manifest", p("m.json"), "--oracle"]) == 0
    assert json.loads(capsys.readouterr().out)["mean"] == 1.0

    assert cli.main(["robustness", "--manifest", p("m.json"), "--rules", p("rules.json"), "--pruner",
                     p("pruner.json"), "--episodes", "1", "--add", "0.2", "--drop", "0"]) == 0
    assert "relative" in capsys.readouterr().out

    assert cli.main(["explain", "--rules", p("rules.json"), "--pruner", p("pruner.json"), "--steps", "2",
                     "--save-state", p("state.json")]) == 0
    table = capsys.readouterr().out
    assert "candidate" in table and "matched edges" in table and "* " in table
    assert cli.main(["explain", "--rules", p("rules.json"), "--pruner", p("pruner.json"), "--state",
                     p("state.json"), "--json"]) == 0
    ex = json.loads(capsys.readouterr().out)
    assert ex["action"] in [c["action"] for c in ex["candidates"]]

    graph = json.load(open(p("state.json")))["graph"]
    json.dump(graph, open(p("graph.json"), "w"))
    assert cli.main(["explain", "--rules", p("rules.json"), "--pruner", p("pruner.json"), "--state",
                     p("graph.json")]) != 0


def test_cli_q_teacher(tmp_path, capsys):
    p = lambda name: str(tmp_path / name)
    assert cli.main(["train-teacher", "--n-train", "2", "--episodes", "40", "--out", p("q.json")]) == 0
    assert cli.main(["collect-demos", "--n-train", "2", "--teacher", "q", "--q-policy", p("q.json"), "--n", "50",
                     "--out", p("d.jsonl")]) == 0
    assert all(json.loads(line)["teacher"] == "q" for line in open(p("d.jsonl")))
    assert cli.main(["collect-demos", "--teacher", "q", "--n", "5", "--out", p("e.jsonl")]) != 0


def test_run_all_small_config(tmp_path):
    cfg = tmp_path / "tiny.txt"
    cfg.write_text(TINY)
    assert load_config(cfg).n_train == 2
    assert cli.main(["run-all", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    md = (tmp_path / "out" / "tables.md").read_text()
    for title in ("Generalization", "Robustness", "Teacher ablation", "Selector ablation"):
        assert f"## {title}" in md
    assert (tmp_path / "out" / "tables.csv").read_text().startswith("table,")
    assert list(report["difficulties"]) == ["1"]
