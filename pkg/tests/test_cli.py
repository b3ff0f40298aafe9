import json

import pytest

from socoswarm import cli
from socoswarm.costs import CostReport
from socoswarm.graph import build_d_regular, write_edge_list
from socoswarm.instance import generate_experiment_instance, save_instance


def test_generate_and_simulate(tmp_path, capsys):
    inst_path = tmp_path / "inst.json"
    assert cli.main(["generate", "experiment", "--N", "6", "--T", "4", "--D", "2", "--beta", "5", "--out", str(inst_path)]) == 0
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--instance", str(inst_path), "--algo", "acord", "--kt", "fixed:5", "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["algo"] == "acord:fixed:5" and doc["messages"] == 4 * 2 * 6 * 5
    assert (out / "costs.csv").exists() and (out / "comm.csv").exists()
    assert cli.main(["simulate", "--instance", str(inst_path), "--algo", "lpc", "--r", "2", "--out", str(tmp_path / "l")]) == 0
    assert cli.main(["simulate", "--instance", str(inst_path), "--algo", "ftm", "--out", str(tmp_path / "f")]) == 0


def test_cr_command(tmp_path, capsys):
    p = tmp_path / "inst.json"
    save_instance(generate_experiment_instance(6, 5, 2, 1.0, seed=1), p)
    assert cli.main(["cr", "--instance", str(p), "--algos", "acord,lpc:1:1,ftm"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "algo,cost,opt_cost,ratio,bound,slack"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["acord:crawl", "lpc:1:1", "ftm"]


def test_cr_command_exit_code_on_violation(tmp_path, monkeypatch):
    p = tmp_path / "inst.json"
    save_instance(generate_experiment_instance(6, 5, 2, 1.0, seed=1), p)
    from socoswarm import runner

    real = runner.run_algorithm

    def inflated(inst, spec):
        res = real(inst, spec)
        return res._replace(cost=CostReport.from_rounds(res.cost.per_round * 1e6))

    monkeypatch.setattr(cli, "run_algorithm", inflated)
    assert cli.main(["cr", "--instance", str(p), "--algos", "acord:fixed:2"]) == 2


def test_sigma_command(tmp_path, capsys):
    p = tmp_path / "ring.edges"
    write_edge_list(build_d_regular(10, 2), p)
    assert cli.main(["sigma", "--graph", str(p), "--mu", "1", "--beta", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["sigma"] == pytest.approx(0.7281, abs=1e-4)
    assert doc["sigma_closed_form"] == pytest.approx(doc["sigma"], rel=1e-10)


def test_run_command(tmp_path, capsys):
    cfg = {
        "instance": {"generator": "experiment", "params": {"N": 6, "T": 4, "D": 2, "beta": 5.0}},
        "algorithms": ["acord:fixed:3", "ftm"],
        "seeds": [0, 1],
    }
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "aggregate.csv").exists()


def test_bad_input_exit_code(tmp_path, capsys):
    assert cli.main(["cr", "--instance", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit):
        cli.main(["nonsense"])
