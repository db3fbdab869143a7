import hashlib
import json

import pytest

from avgsim.cli import main


def digest(path):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(path.iterdir())}


@pytest.fixture(scope="module")
def graph_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("g") / "g64.json"
    assert main(["gen-graph", "--n", "64", "--d", "8", "--b", "1", "--seed", "2", "--out", str(p)]) == 0
    return p


def test_gen_graph_prints_lambda2(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["gen-graph", "--n", "8", "--d", "3", "--b", "1", "--seed", "1", "--out", str(out)]) == 0
    assert "λ2=0.6667" in capsys.readouterr().out
    assert json.loads(out.read_text())["n"] == 8


def test_gen_graph_exit_codes(tmp_path):
    assert main(["gen-graph", "--n", "8", "--d", "3", "--b", "2", "--out", str(tmp_path / "x.json")]) == 2
    assert main(["gen-graph", "--n", "10", "--d", "4", "--b", "1", "--out", str(tmp_path / "x.json")]) == 2
    assert main(["gen-graph", "--n", "500", "--d", "50", "--b", "5", "--seed", "1", "--max-retries", "0",
                 "--out", str(tmp_path / "x.json")]) == 3


def test_gen_sbm(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["gen-graph", "--sbm", "--n", "400", "--p", "0.2", "--q", "0.01", "--seed", "3", "--out", str(out)]) == 0
    assert "beta=" in capsys.readouterr().out


def test_spectrum_command(tmp_path, graph_file, capsys):
    out = tmp_path / "s.json"
    assert main(["spectrum", "--graph", str(graph_file), "--out", str(out)]) == 0
    assert "λ2=0.2500" in capsys.readouterr().out
    assert "lambdas" in json.loads(out.read_text())


def test_run_zero_rounds(tmp_path, graph_file):
    d = tmp_path / "r"
    assert main(["run", "--graph", str(graph_file), "--protocol", "averaging", "--rounds", "0", "--out-dir", str(d)]) == 0
    lines = (d / "trial_0000_series.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("0,")


@pytest.mark.parametrize("proto,extra", [
    ("averaging", ["--rounds", "3000", "--observe-every", "100", "--eps", "0.1", "--eta", "0.01"]),
    ("sign", ["--auto", "--eps", "0.3"]),
    ("jump", ["--taus", "20,40,200,400", "--delta", "0.3"]),
    ("jump-boosted", ["--taus", "20,40,200,400", "--delta", "0.3", "--ell", "3"]),
])
def test_run_is_byte_reproducible_across_thread_counts(tmp_path, graph_file, monkeypatch, proto, extra):
    outs = []
    for threads, name in (("1", "a"), ("4", "b")):
        monkeypatch.setenv("AVGSIM_THREADS", threads)
        d = tmp_path / name
        args = ["run", "--graph", str(graph_file), "--protocol", proto, "--trials", "3", "--seed", "7",
                "--out-dir", str(d)] + extra
        assert main(args) == 0
        report = json.loads((d / "report.json").read_text())
        report["config"]["out_dir"] = "X"
        outs.append((report, {k: v for k, v in digest(d).items() if k != "report.json"}))
    assert outs[0] == outs[1]
    assert len(outs[0][0]["trials"]) == 3


def test_config_echo_reproduces_run(tmp_path, graph_file):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--graph", str(graph_file), "--protocol", "jump", "--taus", "20,40,200,400",
                 "--delta", "0.3", "--trials", "2", "--out-dir", str(d1)]) == 0
    assert main(["run", "--config", str(d1 / "report.json"), "--out-dir", str(d2)]) == 0
    a = json.loads((d1 / "report.json").read_text())
    b = json.loads((d2 / "report.json").read_text())
    a["config"].pop("out_dir")
    b["config"].pop("out_dir")
    assert a == b


def test_config_file_and_flag_override(tmp_path, graph_file):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"graph": str(graph_file), "protocol": "averaging", "rounds": 50, "delta": 0.3}))
    d = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--rounds", "10", "--out-dir", str(d)]) == 0
    rep = json.loads((d / "report.json").read_text())
    assert rep["config"]["rounds"] == 10 and rep["config"]["delta"] == 0.3
    assert "timings" not in rep


def test_run_config_errors(tmp_path, graph_file):
    base = ["run", "--graph", str(graph_file), "--out-dir", str(tmp_path / "o")]
    assert main(base + ["--protocol", "jump", "--auto", "--delta", "0.3"]) == 2
    assert main(base + ["--protocol", "jump", "--taus", "1,2"]) == 2
    assert main(base + ["--protocol", "jump-boosted", "--taus", "20,40,200,400", "--ell", "4"]) == 2
    assert main(base + ["--protocol", "averaging", "--delta", "1.5"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(base + ["--config", str(bad)]) == 2
    assert main(["run", "--graph", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path / "o")]) == 2


def test_sweep(tmp_path, graph_file):
    d = tmp_path / "sw"
    assert main(["sweep", "--graph", str(graph_file), "--protocol", "averaging", "--rounds", "100",
                 "--param", "delta", "--values", "0.2,0.4", "--out-dir", str(d)]) == 0
    s = json.loads((d / "sweep.json").read_text())
    assert [p["value"] for p in s["points"]] == [0.2, 0.4]
    assert main(["sweep", "--graph", str(graph_file), "--param", "graph", "--values", "x",
                 "--out-dir", str(d)]) == 2


def test_verify_graph_file(tmp_path, graph_file):
    assert main(["verify", "--graph", str(graph_file)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text("corrupted")
    assert main(["verify", "--graph", str(bad)]) == 2


def test_verify_quick(capsys):
    assert main(["verify", "--quick"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 7
