import csv
import io
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ontokgc import ablation
from ontokgc.ablation import (
    AblationSpec,
    Artifacts,
    fraction_sweep,
    run_ablation,
    sample_fraction,
    standard_specs,
)
from ontokgc.errors import ArtifactMissingError, ConfigError, ValidationError
from ontokgc.fusion import FusionConfig
from ontokgc.kge import TrainConfig
from ontokgc.llm import Label, LlmAnswer
from ontokgc.metrics import Metrics, evaluate, format_row, format_table, mean_defined, pct, to_csv
from ontokgc.synthetic import benchmark_artifacts, make_benchmark


# -- metrics ------------------------------------------------------------------------


def _confusion(tp, fp, fn, tn):
    preds = [True] * tp + [True] * fp + [False] * fn + [False] * tn
    gold = [True] * tp + [False] * fp + [True] * fn + [False] * tn
    return preds, gold


def test_hand_computed_fixture():
    m = evaluate(*_confusion(3, 1, 2, 4))
    assert (m.tp, m.fp, m.fn, m.tn) == (3, 1, 2, 4)
    assert m.accuracy == 7 / 10 and m.precision == 3 / 4 and m.recall == 3 / 5
    assert m.f1 == 2 * (3 / 4) * (3 / 5) / (3 / 4 + 3 / 5)
    assert f"{m.f1:.3f}" == "0.667"


def test_all_correct():
    m = evaluate([True, False, True], [True, False, True])
    assert m.accuracy == m.precision == m.recall == m.f1 == 1.0


def test_undefined_is_flagged_not_zero():
    m = evaluate([False, False], [False, True])
    assert m.precision is None and m.f1 is None and m.recall == 0.0
    assert pct(m.precision) == "n/a"
    assert "n/a" in format_row("x", m)
    assert mean_defined([0.5, None, 1.0, float("nan")]) == (0.75, 2)
    assert mean_defined([None]) == (None, 1)


def test_abstentions_count_as_wrong():
    m = evaluate([None, None, True], [True, False, True])
    assert (m.tp, m.fp, m.fn, m.tn, m.abstained) == (1, 1, 1, 0, 2)


def test_evaluate_errors():
    with pytest.raises(ValidationError):
        evaluate([True], [True, False])
    with pytest.raises(ValidationError):
        evaluate([], [])


@given(st.lists(st.tuples(st.one_of(st.none(), st.booleans()), st.booleans()), min_size=1, max_size=60))
def test_metrics_identity(pairs):
    preds, gold = zip(*pairs)
    m = evaluate(preds, gold)
    assert m.total == len(pairs)
    again = Metrics(**{k: m.as_dict()[k] for k in ("tp", "fp", "fn", "tn", "abstained")})
    assert again.as_dict() == m.as_dict()
    right = sum(p is not None and bool(p) == g for p, g in pairs)
    assert m.accuracy == right / len(pairs)


def test_table_and_csv_format():
    m = evaluate(*_confusion(3, 1, 2, 4))
    table = format_table([("toy", m)])
    assert table.splitlines()[0].split() == ["model", "Acc", "P", "F1"]
    assert table.splitlines()[1].split() == ["toy", "70.00", "75.00", "66.67"]
    rows = list(csv.DictReader(io.StringIO(to_csv([{"a": 1, "b": None}]))))
    assert rows == [{"a": "1", "b": "n/a"}]
    assert to_csv([]) == ""


# -- ablation -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def bench():
    b = make_benchmark(seed=3, n_per_class=8, n_communities=2)
    art = benchmark_artifacts(b, TrainConfig(dim=8, epochs=30, batch_size=128, negatives=4, seed=3),
                              FusionConfig(epochs=20, d_token=8))
    return b, art


def test_spec_validation_and_labels(tmp_path):
    with pytest.raises(ConfigError):
        AblationSpec(backend="gpt")
    with pytest.raises(ConfigError):
        AblationSpec(fraction=1.5)
    with pytest.raises(ConfigError):
        AblationSpec.from_dict({"use_ontology": False, "colour": "red"})
    (tmp_path / "s.json").write_text('{"use_ontology": false}')
    spec = AblationSpec.load(tmp_path / "s.json")
    assert spec == AblationSpec(use_ontology=False) and spec.label == "fused w/o ontology"
    assert [s.name for s in standard_specs()] == ["full", "w/o ontology", "w/o structure",
                                                   "w/o structure & ontology"]


def test_sampling_is_nested_and_seeded(bench):
    b, _ = bench
    sizes = []
    prev = set()
    for f in (0.0, 0.25, 0.5, 0.75, 1.0):
        sub = set(sample_fraction(b.ontology, f, seed=4).axioms)
        assert prev <= sub
        prev = sub
        sizes.append(len(sub))
    assert sizes[0] == 0 and sizes[-1] == len(b.ontology)
    assert sizes == sorted(sizes)
    assert sample_fraction(b.ontology, 0.5, 4) == sample_fraction(b.ontology, 0.5, 4)
    assert sample_fraction(b.ontology, 0.5, 4) != sample_fraction(b.ontology, 0.5, 5)


def test_missing_artifacts_name_the_step(bench):
    b, art = bench
    with pytest.raises(ArtifactMissingError, match="train-kge"):
        run_ablation(b.graph, b.ontology, AblationSpec(backend="kge"), [0], Artifacts(test=art.test))
    with pytest.raises(ArtifactMissingError, match="tune-thresholds"):
        run_ablation(b.graph, b.ontology, AblationSpec(), [0], Artifacts(table=art.table, test=art.test))
    with pytest.raises(ArtifactMissingError, match="ingest"):
        run_ablation(b.graph, b.ontology, AblationSpec(), [0], Artifacts())
    with pytest.raises(ArtifactMissingError, match="endpoint"):
        run_ablation(b.graph, b.ontology, AblationSpec(backend="llm"), [0], Artifacts(test=art.test))


def test_run_is_deterministic_and_seed_averaged(bench):
    b, art = bench
    r1 = run_ablation(b.graph, b.ontology, AblationSpec(), [0, 1], art)
    r2 = run_ablation(b.graph, b.ontology, AblationSpec(), [0, 1], art)
    assert r1.per_seed == r2.per_seed
    assert r1.mean()["accuracy"] == pytest.approx(np.mean([m.accuracy for m in r1.per_seed]))
    rec = r1.record()
    assert rec["seeds"] == "0 1" and rec["name"] == "fused"


def test_kge_backend_matches_thresholds(bench):
    from ontokgc.kge import classify_many

    b, art = bench
    r = run_ablation(b.graph, b.ontology, AblationSpec(backend="kge"), [0], art)
    gold = [lt.label for lt in art.test]
    want = evaluate(list(classify_many(art.table, art.thresholds, [lt.triple for lt in art.test])), gold)
    assert r.per_seed[0] == want


def test_routing_of_fused_specs(bench, monkeypatch):
    b, art = bench
    calls = []
    real = ablation.train_fusion

    def spy(graph, table, reasoner, *args, **kw):
        calls.append((reasoner, kw["use_ontology"], kw["use_structure"]))
        return real(graph, table, reasoner, *args, **kw)

    monkeypatch.setattr(ablation, "train_fusion", spy)
    for spec in standard_specs():
        run_ablation(b.graph, b.ontology, spec, [0], art)
    assert [(r is not None, o, s) for r, o, s in calls] == [
        (True, True, True), (False, False, True), (True, True, False), (False, False, False)]


def test_llm_route_drops_ontology_text(bench, monkeypatch):
    import ontokgc.llm as llm

    b, art = bench
    seen = {}

    def fake(config, bundles, client=None):
        seen.setdefault("bundles", []).append(bundles)
        return [LlmAnswer(Label.TRUE if i % 2 else Label.UNPARSEABLE, "", 0.0, False) for i in range(len(bundles))]

    monkeypatch.setattr(llm, "classify_many_with_llm", fake)
    art2 = replace(art, endpoint=object())
    with_o = run_ablation(b.graph, b.ontology, AblationSpec(backend="llm"), [0], art2)
    run_ablation(b.graph, b.ontology, AblationSpec(backend="llm", use_ontology=False), [0], art2)
    a, c = seen["bundles"]
    assert any(x.ontology_text for x in a)
    assert all(x.ontology_text == "" for x in c)
    assert with_o.per_seed[0].abstained == len(art.test) // 2


def test_fraction_sweep_rows(bench):
    b, art = bench
    rows = fraction_sweep(b.graph, b.ontology, [0.0, 0.5, 1.0], [0], art)
    assert [r["fraction"] for r in rows] == [0.0, 0.5, 1.0]
    assert len({r["acc_without"] for r in rows}) == 1
    assert set(rows[0]) == {"fraction", "acc_with", "acc_without", "f1_with", "f1_without"}
    # an empty ontology sample gives no verdict signal, same as switching the ontology off
    assert rows[0]["acc_with"] == pytest.approx(rows[0]["acc_without"], abs=0.1)
