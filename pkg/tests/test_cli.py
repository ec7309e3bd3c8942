import json

import pytest

from hoproute.cli import main
from hoproute.graph import read_demand, read_graph


@pytest.fixture
def workspace(tmp_path):
    g = tmp_path / "c6.txt"
    assert main(["gen", "cycle", "6", "-o", str(g)]) == 0
    d = tmp_path / "d.txt"
    d.write_text("0 3 1\n1 2 2\n")
    return tmp_path, g, d


def test_gen_families(tmp_path):
    assert main(["gen", "grid", "3", "4", "-o", str(tmp_path / "grid.txt")]) == 0
    g = read_graph(tmp_path / "grid.txt")
    assert (g.n, g.m) == (12, 17)
    assert main(["gen", "lower_bound", "3", "--demand", str(tmp_path / "lb.dem"), "-o", str(tmp_path / "lb.txt")]) == 0
    assert read_demand(tmp_path / "lb.dem") == {(0, 2): 1.0, (3, 5): 1.0, (6, 8): 1.0}
    assert main(["gen", "grid", "3", "-o", str(tmp_path / "bad.txt")]) == 2


def test_build_sample_route(workspace, capsys):
    tmp, g, d = workspace
    r = tmp / "router.json"
    assert main(["build", "-g", str(g), "-h", "3", "--rounds", "8", "-o", str(r)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["h"] == 3
    assert main(["sample", "-r", str(r), "-s", "0", "-t", "3", "-n", "5", "--seed", "2"]) == 0
    lines = capsys.readouterr().out.split("\n")[:5]
    for line in lines:
        p = [int(x) for x in line.split()]
        assert p[0] == 0 and p[-1] == 3
    out = tmp / "route.json"
    assert main(["route", "-r", str(r), "-d", str(d), "--samples", "8", "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["pairs"] == 2 and rep["samples"] == 8 + 16 and rep["congestion"] > 0


def test_opt(workspace):
    tmp, g, d = workspace
    out = tmp / "opt.json"
    assert main(["opt", "-g", str(g), "-d", str(d), "-h", "3", "-o", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["value"] == pytest.approx(2.0)
    assert main(["opt", "-g", str(g), "-d", str(d), "-o", str(out)]) == 0


def test_schedule(workspace):
    tmp, g, _ = workspace
    paths = tmp / "paths.txt"
    paths.write_text("0 1 2 3\n3 2 1\n# comment\n5 0\n")
    out = tmp / "sched.json"
    assert main(["schedule", "-g", str(g), "--paths", str(paths), "-o", str(out)]) == 0
    rep = json.loads(out.read_text())["report"]
    assert rep["dilation"] == 3 and rep["completion"] >= 3


def test_eval(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"graphs": [{"name": "cycle", "params": {"n": 5}}], "h": [2], "seeds": [0],
                                "router": {"max_rounds": 8}, "samples": 8}))
    assert main(["eval", "-c", str(cfg), "-o", str(tmp_path / "out")]) == 0
    assert "1 cells, 0 failures" in capsys.readouterr().out
    assert (tmp_path / "out" / "results.csv").exists()


def test_help_does_not_clash_with_hops(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["build", "--help"])
    assert exc.value.code == 0
    assert "--hops" in capsys.readouterr().out
