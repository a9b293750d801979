import csv
import json

import pytest

from ontokgc.cli import main
from ontokgc.config import sha256_file

from conftest import write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Synthetic benchmark pushed through the full command sequence once."""
    root = tmp_path_factory.mktemp("cli")
    b = root / "bench"
    assert main(["synth", "--out-dir", str(b), "--seed", "2", "--n-per-class", "8"]) == 0
    cfg = b / "config.json"
    raw = json.loads(cfg.read_text())
    raw["kge"].update(epochs=40, dim=8, negatives=4)
    raw["fusion"].update(epochs=20, d_token=8)
    cfg.write_text(json.dumps(raw))
    emb, thr, ad = root / "emb.bin", root / "thr.json", root / "adapter.bin"
    assert main(["train-kge", "--config", str(cfg), "--out", str(emb)]) == 0
    assert main(["tune-thresholds", "--config", str(cfg), "--embeddings", str(emb), "--out", str(thr)]) == 0
    assert main(["train-fusion", "--config", str(cfg), "--embeddings", str(emb), "--thresholds", str(thr),
                 "--out", str(ad)]) == 0
    return {"root": root, "bench": b, "cfg": cfg, "emb": emb, "thr": thr, "adapter": ad}


def test_usage_errors_exit_1(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(capsys, )[0] == 1
    code, _, err = run(capsys, "frobnicate")
    assert code == 1 and "usage" in err
    assert run(capsys, "train-kge", "--out", "x")[0] == 1  # --config is required
    code, _, err = run(capsys, "ingest", "--config", tmp_path / "nope.json", "--out-dir", "o")
    assert code == 1 and "not found" in err
    write(tmp_path / "bad.json", '{"kge": {}, "wat": 1}')
    assert run(capsys, "ingest", "--config", tmp_path / "bad.json", "--out-dir", "o")[0] == 1


def test_data_errors_exit_2(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write(tmp_path / "train.txt", "a\tr\tb\nonly two\tfields\n")
    write(tmp_path / "c.json", '{"data": {"train": "train.txt"}}')
    code, _, err = run(capsys, "ingest", "--config", tmp_path / "c.json", "--out-dir", "o")
    assert code == 2 and "train.txt" in err and ":2" in err


def test_pipeline_outputs(pipeline):
    for key in ("emb", "thr", "adapter"):
        assert pipeline[key].exists()
    assert (pipeline["root"] / "emb.bin.metrics.json").exists()
    trace = json.loads((pipeline["root"] / "adapter.bin.trace.json").read_text())
    assert len(trace) == 20


def test_manifest_contents(pipeline):
    man = json.loads((pipeline["root"] / "emb.bin.manifest.json").read_text())
    assert man["command"] == "train-kge"
    assert man["config_hash"] and man["seeds"]["kge"] == 2
    assert man["outputs"][str(pipeline["emb"])] == sha256_file(pipeline["emb"])
    assert str(pipeline["bench"] / "train.txt") in man["inputs"]


def test_train_kge_rerun_is_bit_identical(pipeline, tmp_path, capsys):
    again = tmp_path / "emb2.bin"
    assert run(capsys, "train-kge", "--config", pipeline["cfg"], "--out", again)[0] == 0
    assert again.read_bytes() == pipeline["emb"].read_bytes()


def test_classify_and_eval(pipeline, tmp_path, capsys):
    pred = tmp_path / "pred.jsonl"
    code, _, _ = run(capsys, "classify", "--config", pipeline["cfg"], "--backend", "kge",
                     "--embeddings", pipeline["emb"], "--thresholds", pipeline["thr"], "--out", pred)
    assert code == 0
    rows = [json.loads(l) for l in pred.read_text().splitlines()]
    assert rows and all(isinstance(r["label"], bool) for r in rows)
    code, out, _ = run(capsys, "eval", "--pred", pred, "--gold", pipeline["bench"] / "labeled_test.jsonl",
                       "--csv", tmp_path / "m.csv", "--name", "kge")
    assert code == 0
    assert out.splitlines()[0].split() == ["model", "Acc", "P", "F1"]
    rec = next(csv.DictReader((tmp_path / "m.csv").open()))
    n = int(rec["tp"]) + int(rec["fp"]) + int(rec["fn"]) + int(rec["tn"])
    assert n == len(rows)
    assert float(rec["accuracy"]) == (int(rec["tp"]) + int(rec["tn"])) / n


def test_classify_fused_with_explanations(pipeline, tmp_path, capsys):
    pred, expl = tmp_path / "p.jsonl", tmp_path / "e.jsonl"
    code, _, _ = run(capsys, "classify", "--config", pipeline["cfg"], "--backend", "fused",
                     "--embeddings", pipeline["emb"], "--thresholds", pipeline["thr"],
                     "--adapter", pipeline["adapter"], "--out", pred, "--explain", expl)
    assert code == 0
    records = [json.loads(l) for l in expl.read_text().splitlines()]
    assert len(records) == len(pred.read_text().splitlines())
    assert {"verdict", "selected_axioms", "kge_score", "probability"} <= set(records[0])
    a = pred.read_bytes()
    run(capsys, "classify", "--config", pipeline["cfg"], "--backend", "fused", "--embeddings", pipeline["emb"],
        "--thresholds", pipeline["thr"], "--adapter", pipeline["adapter"], "--out", pred)
    assert pred.read_bytes() == a


def test_classify_missing_adapter_names_step(pipeline, tmp_path, capsys):
    code, _, err = run(capsys, "classify", "--config", pipeline["cfg"], "--backend", "fused",
                       "--embeddings", pipeline["emb"], "--thresholds", pipeline["thr"], "--out", tmp_path / "p")
    assert code == 1 and "train-fusion" in err


def test_verbalize_single_triple(pipeline, tmp_path, capsys):
    first = pipeline["bench"].joinpath("train.txt").read_text().splitlines()[0].split("\t")
    out = tmp_path / "prompts.jsonl"
    assert run(capsys, "verbalize", "--config", pipeline["cfg"], "--triple", *first, "--out", out)[0] == 0
    rec = json.loads(out.read_text())
    assert rec["S"] == "\n".join([rec["I"], rec["X"], rec["O"]])
    assert rec["X"] == " ".join(first)


def test_mine_review_materialize(pipeline, tmp_path, capsys):
    cands = tmp_path / "cands.nt"
    assert run(capsys, "mine-ontology", "--config", pipeline["cfg"], "--out", cands, "--min-support", "2")[0] == 0
    lines = [l for l in cands.read_text().splitlines() if l.strip() and not l.startswith("#")]
    assert lines
    review = write(tmp_path / "review.tsv", f"reject\t{lines[0].split(' #')[0]}\n")
    merged = tmp_path / "merged.nt"
    assert run(capsys, "review-merge", "--candidates", cands, "--review", review, "--out", merged)[0] == 0
    assert run(capsys, "materialize", "--config", pipeline["cfg"], "--out", tmp_path / "inf.tsv")[0] == 0
    prov = (tmp_path / "inf.tsv.provenance.jsonl").read_text().splitlines()
    assert len(prov) == len((tmp_path / "inf.tsv").read_text().splitlines())
    assert all(json.loads(p)["axiom"] and json.loads(p)["premises"] for p in prov)


def test_ablate_spec_routes_without_ontology(pipeline, tmp_path, capsys):
    spec = write(tmp_path / "no-ontology.json", '{"use_ontology": false, "name": "w/o ontology"}')
    out = tmp_path / "abl.csv"
    code, stdout, _ = run(capsys, "ablate", "--config", pipeline["cfg"], "--spec", spec, "--embeddings",
                          pipeline["emb"], "--thresholds", pipeline["thr"], "--seeds", "0", "1", "--out", out)
    assert code == 0 and "w/o ontology" in stdout
    (row,) = list(csv.DictReader(out.open()))
    assert row["use_ontology"] == "False" and row["use_structure"] == "True" and row["seeds"] == "0 1"


def test_ablate_sweep(pipeline, tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "ablate", "--config", pipeline["cfg"], "--sweep", "0,0.5,1", "--seeds", "0",
                     "--embeddings", pipeline["emb"], "--thresholds", pipeline["thr"], "--out", out)
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["fraction"]) for r in rows] == [0.0, 0.5, 1.0]


def test_ablate_missing_embeddings(pipeline, tmp_path, capsys):
    code, _, err = run(capsys, "ablate", "--config", pipeline["cfg"], "--seeds", "0", "--out", tmp_path / "a.csv")
    assert code == 2 and "train-kge" in err
