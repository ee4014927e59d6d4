import json
import subprocess
import sys

import pytest

from ukge.cli import main
from ukge.fusion import OWL_SAMEAS
from ukge.kg import load_graph, read_dictionary_tsv, write_ntriples
from ukge.synthetic import twin_graphs

SUBCOMMANDS = ["parse", "stats", "fuse", "sample", "split", "train", "eval", "serve"]


def run(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    g1, g2, links = twin_graphs(0, num_entities=60, num_relations=3, facts_per_relation=80)
    write_ntriples(g1, d / "dbp.nt")
    write_ntriples(g2, d / "wd.nt")
    (d / "sameas.nt").write_text("".join(f"<{a}> <{OWL_SAMEAS}> <{b}> .\n" for a, b in links.pairs))
    return d


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_help(sub, capsys):
    assert run([sub, "--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ukge", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("ukge ")


def test_missing_args_is_usage_error(capsys):
    assert run(["train"]) == 1
    assert run([]) == 1
    assert run(["nosuch"]) == 1


def test_bad_config_is_usage_error(corpus, tmp_path):
    assert run(["train", "--graph", corpus / "dbp.nt", "--kind", "qmult", "--dim", "30", "--out", tmp_path / "m.uke", "--seed", "1"]) == 1
    assert not (tmp_path / "m.uke").exists()
    assert run(["split", "--graph", corpus / "dbp.nt", "--test-ratio", "1.5", "--out-dir", tmp_path, "--seed", "1"]) == 1


def test_missing_file_is_data_error(tmp_path, capsys):
    assert run(["stats", tmp_path / "nope.nt"]) == 2
    assert "data error" in capsys.readouterr().err


def test_strict_parse_error(tmp_path):
    (tmp_path / "bad.nt").write_text("<http://a> <http://p>\n")
    assert run(["parse", tmp_path / "bad.nt", "--out", tmp_path / "bad.ukg", "--strict"]) == 2
    assert run(["parse", tmp_path / "bad.nt", "--out", tmp_path / "ok.ukg"]) == 0


def test_pipeline(corpus, tmp_path, capsys):
    d = tmp_path
    assert run(["parse", corpus / "dbp.nt", "--out", d / "dbp.ukg", "--dict-prefix", d / "dbp"]) == 0
    parsed = json.loads(capsys.readouterr().out)
    assert parsed["parse"]["yielded"] == parsed["graph"]["num_triples"]
    assert len(read_dictionary_tsv(d / "dbp.entities.tsv")) == parsed["graph"]["num_entities"]
    manifest = json.loads((d / "dbp.parse.manifest.json").read_text())
    assert manifest["subcommand"] == "parse" and manifest["tool_version"]

    assert run(["parse", corpus / "wd.nt", "--out", d / "wd.ukg"]) == 0
    capsys.readouterr()
    assert run(["stats", d / "dbp.ukg", "--json"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["num_triples"] == len(load_graph(d / "dbp.ukg"))

    assert run(["fuse", "--ref", d / "dbp.ukg", "--add", d / "wd.ukg", "--sameas", corpus / "sameas.nt", "--out", d / "merged.ukg", "--report", d / "fuse.json"]) == 0
    report = json.loads((d / "fuse.json").read_text())
    assert report["merged"]["num_triples"] <= sum(s["num_triples"] for s in report["inputs"])
    assert (d / "merged.fuse.manifest.json").exists()

    assert run(["sample", "--graph", d / "dbp.ukg", "--sameas", corpus / "sameas.nt", "--fraction", "0.1", "--seed", "3", "--out", d / "s.ukg", "--project", d / "wd.ukg", "--project-out", d / "s_wd.ukg"]) == 0
    assert (d / "s_wd.ukg").exists()
    assert json.loads((d / "s.sample.manifest.json").read_text())["seeds"] == {"rng_seed": 3}

    capsys.readouterr()
    assert run(["split", "--graph", d / "merged.ukg", "--seed", "0", "--out-dir", d / "split", "--prefix", "m_"]) == 0
    for name in ["m_train.ukg", "m_test.ukg", "m_train.nt", "m_test.nt", "m_split.json", "m_split.manifest.json"]:
        assert (d / "split" / name).exists(), name

    assert run(["train", "--graph", d / "split/m_train.ukg", "--kind", "complex", "--dim", "8", "--epochs", "3", "--seed", "1", "--out", d / "model.uke"]) == 0
    for name in ["model.uke", "model.entities.tsv", "model.relations.tsv", "model.loss.csv", "model.train.manifest.json"]:
        assert (d / name).exists(), name
    tm = json.loads((d / "model.train.manifest.json").read_text())
    assert tm["config"]["model"]["kind"] == "complex" and tm["config"]["train"]["epochs"] == 3

    capsys.readouterr()
    assert run(["eval", "--model", d / "model.uke", "--test", d / "split/m_test.ukg", "--label", "ComplEx-test", "--out", d / "eval.json"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["MRR", "H@1", "H@3", "H@10"] and lines[1].startswith("ComplEx-test")
    rep = json.loads((d / "eval.json").read_text())
    assert 0 < rep["mrr"] <= 1 and not rep["filtered"]
    assert (d / "eval.eval.manifest.json").exists()

    assert run(["eval", "--model", d / "model.uke", "--test", d / "split/m_test.ukg", "--metrics", "mrr", "--filtered", "--train", d / "split/m_train.ukg"]) == 0
    assert capsys.readouterr().out.splitlines()[0].split() == ["MRR"]
    assert run(["eval", "--model", d / "model.uke", "--test", d / "split/m_test.ukg", "--filtered"]) == 1
    assert run(["eval", "--model", d / "model.uke", "--test", d / "split/m_test.ukg", "--metrics", "auc"]) == 1
    # test triples outside the model vocabulary are a data error
    assert run(["eval", "--model", d / "model.uke", "--test", d / "wd.ukg"]) == 2


def test_seed_default_warns(corpus, tmp_path, caplog):
    with caplog.at_level("WARNING", logger="ukge"):
        assert run(["split", "--graph", corpus / "dbp.nt", "--out-dir", tmp_path]) == 0
    assert "no --seed" in caplog.text
    assert json.loads((tmp_path / "split.manifest.json").read_text())["seeds"] == {"rng_seed": 0}


def test_serve_requires_data(monkeypatch):
    monkeypatch.delenv("UKGE_DATA_PATH", raising=False)
    assert run(["serve"]) == 1
