import json
import math

import pytest

from qwsearch.cli import main
from qwsearch.files import SUMMARY_COLUMNS, read_csv, read_records
from qwsearch.graph import from_edges, read_edge_list, write_edge_list


def run(tmp_path, *argv):
    return main([*argv, "--outdir", str(tmp_path)] if argv and argv[0] != "--version" else list(argv))


def test_gen_complete(tmp_path, capsys):
    assert run(tmp_path, "gen", "complete", "--n", "64") == 0
    g, _ = read_edge_list(tmp_path / "complete_n64.edges")
    assert g.m == 2016
    assert "m=2016" in capsys.readouterr().out


def test_usage_errors_exit_one(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["gen", "torus", "--n", "5"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["search"])
    assert e.value.code == 1
    assert run(tmp_path, "gen", "er", "--n", "50") == 1
    assert run(tmp_path, "search", "--graph", str(tmp_path / "missing.edges")) == 1


def test_outdir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("QWSEARCH_OUTDIR", str(tmp_path / "env"))
    assert main(["gen", "star", "--n", "6"]) == 0
    assert (tmp_path / "env" / "star_n6.edges").exists()


def test_config_defaults_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 12, "name": "fromcfg"}))
    assert run(tmp_path, "gen", "complete", "--n", "5", "--config", str(cfg)) == 0
    g, _ = read_edge_list(tmp_path / "fromcfg.edges")
    assert g.n == 5  # command line wins over the config file
    cfg.write_text(json.dumps({"m-attach": 2, "seed": 4}))
    assert run(tmp_path, "gen", "ba", "--n", "30", "--config", str(cfg), "--name", "b") == 0
    g, _ = read_edge_list(tmp_path / "b.edges")
    assert g.m == 3 + 2 * 27  # seed clique K3 plus two links per new node
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(tmp_path, "gen", "complete", "--n", "5", "--config", str(cfg)) == 1
    cfg.write_text(json.dumps({"n": [1, 2]}))
    assert run(tmp_path, "gen", "complete", "--n", "5", "--config", str(cfg)) == 1


def test_search_is_deterministic_and_writes_sidecar(tmp_path):
    assert run(tmp_path, "gen", "ba", "--n", "40", "--m-attach", "2", "--seed", "1", "--name", "g") == 0
    graph = str(tmp_path / "g.edges")
    args = ("search", "--graph", graph, "--sample", "4", "--seed", "9", "--threads", "1")
    assert run(tmp_path, *args, "--name", "a") == 0
    assert run(tmp_path, *args, "--name", "b") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    recs = read_records(tmp_path / "a.csv")
    assert len(recs) == 4
    meta = json.loads((tmp_path / "a.meta.json").read_text())
    assert meta["n_nodes"] == 40 and meta["master_seed"] == 9 and meta["completed"] == 4
    doc = json.loads((tmp_path / "a.json").read_text())
    assert [r["node"] for r in doc["records"]] == [r.node for r in recs]
    # sampling without a seed is refused
    assert run(tmp_path, "search", "--graph", graph, "--sample", "4") == 1
    assert run(tmp_path, "search", "--graph", graph, "--targets", "999") == 1


def test_search_partial_and_total_failure(tmp_path, monkeypatch):
    import qwsearch.search as search_mod

    real = search_mod.optimize_node

    def flaky(g, w, opts=None, summary=None):
        if w == 1:
            raise ArithmeticError("synthetic")
        return real(g, w, opts, summary)

    monkeypatch.setattr(search_mod, "optimize_node", flaky)
    assert run(tmp_path, "gen", "star", "--n", "6", "--name", "s") == 0
    graph = str(tmp_path / "s.edges")
    assert run(tmp_path, "search", "--graph", graph, "--targets", "0,1", "--threads", "1") == 3
    assert run(tmp_path, "search", "--graph", graph, "--targets", "1", "--threads", "1") == 2
    meta = json.loads((tmp_path / "s.records.meta.json").read_text())
    assert "synthetic" in meta["failures"]["1"]


def test_disconnected_graph_notice(tmp_path, capsys):
    g = from_edges(7, [(0, 1), (1, 2), (2, 0), (3, 4)])
    path = tmp_path / "d.edges"
    write_edge_list(g, path)
    assert run(tmp_path, "approx", "--graph", str(path)) == 0
    assert "giant component" in capsys.readouterr().err
    rows = read_csv(tmp_path / "d.approx.csv", SUMMARY_COLUMNS)
    assert len(rows) == 3


def test_approx_complete_graph(tmp_path):
    run(tmp_path, "gen", "complete", "--n", "64")
    assert run(tmp_path, "approx", "--graph", str(tmp_path / "complete_n64.edges"), "--targets", "0") == 0
    rows = read_csv(tmp_path / "complete_n64.approx.csv", SUMMARY_COLUMNS)
    row = dict(zip(SUMMARY_COLUMNS, rows[0]))
    assert float(row["gamma_approx"]) == pytest.approx(63 / 4096, abs=1e-12)


def test_spectrum_and_evolve(tmp_path):
    run(tmp_path, "gen", "complete", "--n", "16")
    graph = str(tmp_path / "complete_n16.edges")
    assert run(tmp_path, "spectrum", "--graph", graph, "--target", "0", "--points", "9") == 0
    text = (tmp_path / "complete_n16.spectrum.w0.csv").read_text()
    assert text.startswith("# target=0 gamma_min=0.001 gamma_max=1 points=9")
    assert run(tmp_path, "evolve", "--graph", graph, "--target", "0", "--gamma", "0.0625",
               "--t-max", str(math.pi * 2), "--points", "3") == 0
    rows = read_csv(tmp_path / "complete_n16.evolve.w0.csv", ("t", "p_w"))
    assert float(rows[2][1]) == pytest.approx(1.0, abs=1e-9)
    assert run(tmp_path, "spectrum", "--graph", graph, "--target", "99") == 1


def test_spectrum_rejects_large_dense(tmp_path):
    run(tmp_path, "gen", "star", "--n", "3001")
    assert run(tmp_path, "spectrum", "--graph", str(tmp_path / "star_n3001.edges"),
               "--target", "0", "--points", "2") == 1


def test_renorm_needs_embedding(tmp_path, capsys):
    run(tmp_path, "gen", "ba", "--n", "30", "--seed", "1", "--name", "b")
    assert run(tmp_path, "renorm", "--graph", str(tmp_path / "b.edges")) == 1
    assert "import-embedding" in capsys.readouterr().err


def test_s1_renorm_pipeline(tmp_path):
    assert run(tmp_path, "gen", "s1", "--n", "400", "--seed", "2", "--name", "s") == 0
    assert run(tmp_path, "renorm", "--graph", str(tmp_path / "s.edges"),
               "--embedding", str(tmp_path / "s.embedding.csv"), "--layers", "2", "--seed", "5") == 0
    rows = read_csv(tmp_path / "s.renorm.csv", ("layer", "n", "m", "avg_k", "mu", "mu_pruned"))
    assert [int(r[0]) for r in rows] == [0, 1, 2]
    n = [int(r[1]) for r in rows]
    assert n[2] <= math.ceil(n[1] / 2) and n[1] <= math.ceil(n[0] / 2)
    g1, labels = read_edge_list(tmp_path / "s.l1.edges")
    blocks = json.loads((tmp_path / "s.l1.blocks.json").read_text())["blocks"]
    assert len(blocks) == g1.n
    assert run(tmp_path, "import-embedding", "--graph", str(tmp_path / "s.l1.edges"),
               "--coords", str(tmp_path / "s.l1.embedding.csv"), "--name", "re.csv") == 0


def test_analyze(tmp_path):
    run(tmp_path, "gen", "ba", "--n", "40", "--m-attach", "2", "--seed", "1", "--name", "g")
    run(tmp_path, "search", "--graph", str(tmp_path / "g.edges"), "--sample", "5", "--seed", "1",
        "--threads", "1")
    rec = str(tmp_path / "g.records.csv")
    assert run(tmp_path, "analyze", rec, "--percentile", "0.8") == 0
    doc = json.loads((tmp_path / "analysis.json").read_text())
    assert doc["layers"][0]["stats"]["n_nodes"] == 40
    assert doc["layers"][0]["stats"]["sample_size"] == 5
    assert doc["layers"][0]["percentile_stats"]["sample_size"] == 4
    assert (tmp_path / "analysis.g.records.degree_classes.csv").exists()
    assert run(tmp_path, "analyze", rec, "--scaling") == 1
    assert run(tmp_path, "analyze", rec, rec, rec, "--scaling", "--sizes", "10,20,40") == 0
    doc = json.loads((tmp_path / "analysis.json").read_text())
    assert doc["scaling"]["exponent"] == pytest.approx(0.0, abs=1e-12)
    assert read_csv(tmp_path / "analysis.scaling.csv", ("x", "y", "yerr"))[0][0] == "10"
    assert run(tmp_path, "analyze", rec, "--sizes", "1,2") == 1


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert "qwsearch" in capsys.readouterr().out
