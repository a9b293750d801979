import numpy as np
import pytest

from ontokgc.config import RunConfig
from ontokgc.kg import Split, load_graph, load_labeled
from ontokgc.ontology import parse_ontology
from ontokgc.reasoner import Reasoner, Status
from ontokgc.synthetic import make_benchmark, planted_rule_graph, write_benchmark


@pytest.fixture(scope="module")
def bench():
    return make_benchmark(seed=4, n_per_class=10, n_communities=3)


def test_same_seed_same_benchmark():
    a, b = make_benchmark(seed=1, n_per_class=6), make_benchmark(seed=1, n_per_class=6)
    assert a.test == b.test and a.valid == b.valid
    assert a.graph.entities.symbols == b.graph.entities.symbols
    c = make_benchmark(seed=2, n_per_class=6)
    assert c.test != a.test


def test_splits_disjoint_and_balanced(bench):
    g = bench.graph
    tr, va, te = (set(g.triples(s)) for s in (Split.TRAIN, Split.VALID, Split.TEST))
    assert not (tr & va or tr & te or va & te)
    for data in (bench.train, bench.valid, bench.test):
        labels = [lt.label for lt in data]
        assert labels.count(True) == labels.count(False)
        negs = {lt.triple for lt in data if not lt.label}
        assert not negs & (tr | va | te)


def test_positives_never_violate_negatives_often_do(bench):
    r = Reasoner(bench.graph, bench.ontology)
    g = bench.graph
    for data in (bench.valid, bench.test):
        pos = [r.verdict(g.to_symbols(lt.triple)).status for lt in data if lt.label]
        neg = [r.verdict(g.to_symbols(lt.triple)).status for lt in data if not lt.label]
        assert Status.VIOLATED not in pos
        assert neg.count(Status.VIOLATED) >= 0.3 * len(neg)


def test_disjointness_plants_present():
    b = make_benchmark(seed=0, n_per_class=12)
    r = Reasoner(b.graph, b.ontology)
    lines = {ax.line() for lt in b.test if not lt.label
             for ax in r.verdict(b.graph.to_symbols(lt.triple)).violated}
    assert any("propertyDisjointWith" in l for l in lines)
    assert any("rdfs:domain" in l or "rdfs:range" in l for l in lines)


def test_write_benchmark_round_trip(bench, tmp_path):
    write_benchmark(bench, tmp_path)
    cfg = RunConfig.load(tmp_path / "config.json")
    g = load_graph(cfg.require_data("train"), cfg.data_path("valid"), cfg.data_path("test"))
    assert sorted(g.entities.symbols) == sorted(bench.graph.entities.symbols)
    for s in Split:
        assert {g.to_symbols(t) for t in g.triples(s)} == {bench.graph.to_symbols(t) for t in bench.graph.triples(s)}
    test = load_labeled(cfg.labeled_path("test"), g)
    assert [g.to_symbols(lt.triple) for lt in test] == [bench.graph.to_symbols(lt.triple) for lt in bench.test]
    onto, report = parse_ontology(cfg.ontology_path)
    assert onto == bench.ontology


@pytest.mark.parametrize("seed", [0, 7])
def test_planted_rule_graph_is_closed(seed):
    facts, rule = planted_rule_graph(seed)
    by = {}
    for h, r, t in facts:
        by.setdefault(r, set()).add((h, t))
    joined = {(a, c) for a, b in by[":r1"] for b2, c in by[":r2"] if b == b2}
    assert by[":r3"] == joined
    assert len(np.unique([r for _, r, _ in facts])) == 3
