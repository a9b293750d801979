"""Seeded synthetic knowledge graphs with a known ontology.

Two generators:

* :func:`planted_rule_graph` builds a layered graph where exactly one
  composition rule holds, for checking the rule miner.
* :func:`make_benchmark` builds a typed social/geographic graph with
  domain/range, composition, equivalence and disjointness axioms, splits it,
  and emits labelled validation/test sets whose negatives include planted
  type and disjointness violations.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kg import KnowledgeGraph, LabeledTriple, Split, Triple, generate_negatives
from .ontology import (
    ClassAssertion,
    Composition,
    DisjointProperty,
    Domain,
    EquivalentProperty,
    Ontology,
    Range,
    SubClassOf,
)
from .reasoner import saturate


def planted_rule_graph(seed, n_entities=20, density=0.35):
    """Entities in three layers A→B→C; r1: A→B, r2: B→C, r3 = r1∘r2 exactly.

    Returns ``(facts, planted)`` where ``planted`` is the single composition.
    """
    rng = np.random.default_rng(seed)
    ents = [f":e{i}" for i in range(n_entities)]
    cut1, cut2 = n_entities // 3, 2 * n_entities // 3
    A, B, C = ents[:cut1], ents[cut1:cut2], ents[cut2:]
    facts = set()
    for a in A:
        for b in rng.choice(B, size=max(1, int(density * len(B))), replace=False):
            facts.add((a, ":r1", str(b)))
    for b in B:
        for c in rng.choice(C, size=max(1, int(density * len(C))), replace=False):
            facts.add((b, ":r2", str(c)))
    rule = Composition(":r3", ":r1", ":r2")
    facts = saturate(facts, Ontology([rule]))
    return facts, rule


LEAVES = {
    ":Scientist": ":Person",
    ":Artist": ":Person",
    ":Company": ":Organization",
    ":University": ":Organization",
    ":City": ":Place",
    ":Country": ":Place",
}
SUPERS = {":Person": ":Agent", ":Organization": ":Agent"}

SIGNATURES = {
    ":worksFor": (":Person", ":Organization"),
    ":livesIn": (":Person", ":City"),
    ":locatedIn": (":City", ":Country"),
    ":citizenOf": (":Person", ":Country"),
    ":hqIn": (":Organization", ":City"),
    ":basedIn": (":Organization", ":Country"),
    ":friendOf": (":Person", ":Person"),
    ":allyOf": (":Person", ":Person"),
    ":enemyOf": (":Person", ":Person"),
    ":advises": (":Scientist", ":Scientist"),
}


@dataclass
class Benchmark:
    graph: KnowledgeGraph
    ontology: Ontology
    train: list  # LabeledTriple, for fitting the fusion head
    valid: list
    test: list
    seed: int


def _ontology(typed_entities):
    axioms = [SubClassOf(leaf, sup) for leaf, sup in LEAVES.items()]
    axioms += [SubClassOf(c, s) for c, s in SUPERS.items()]
    for rel, (dom, rng_) in SIGNATURES.items():
        axioms += [Domain(rel, dom), Range(rel, rng_)]
    axioms += [
        Composition(":citizenOf", ":livesIn", ":locatedIn"),
        Composition(":basedIn", ":hqIn", ":locatedIn"),
        EquivalentProperty(":friendOf", ":allyOf"),
        DisjointProperty(":friendOf", ":enemyOf"),
    ]
    axioms += [ClassAssertion(e, c) for e, c in typed_entities]
    return Ontology(axioms)


def _true_facts(rng, n_per_class, n_communities):
    members = {leaf: [f"{leaf}_{i}" for i in range(n_per_class)] for leaf in LEAVES}
    people = members[":Scientist"] + members[":Artist"]
    orgs = members[":Company"] + members[":University"]
    cities, countries = members[":City"], members[":Country"]
    community = {p: int(rng.integers(n_communities)) for p in people}
    facts = set()
    for c in cities:
        facts.add((c, ":locatedIn", str(rng.choice(countries))))
    for o in orgs:
        facts.add((o, ":hqIn", str(rng.choice(cities))))
    # people of one community cluster around a home city and a pair of employers
    home = {k: str(rng.choice(cities)) for k in range(n_communities)}
    employers = {k: list(rng.choice(orgs, size=2, replace=False)) for k in range(n_communities)}
    for p in people:
        k = community[p]
        facts.add((p, ":livesIn", home[k] if rng.random() < 0.8 else str(rng.choice(cities))))
        facts.add((p, ":worksFor", str(rng.choice(employers[k]))))
    for i, p in enumerate(people):
        for q in people[i + 1:]:
            same = community[p] == community[q]
            if same and rng.random() < 0.5:
                facts.add((p, ":friendOf", q))
                facts.add((q, ":friendOf", p))
            elif not same and rng.random() < 0.06:
                facts.add((p, ":enemyOf", q))
    sci = members[":Scientist"]
    for p in sci:
        for q in rng.choice(sci, size=2, replace=False):
            if q != p:
                facts.add((p, ":advises", str(q)))
    return members, facts


def make_benchmark(seed=0, n_per_class=25, n_communities=5, untyped_fraction=0.1,
                   split_fractions=(0.7, 0.15, 0.15), planted_fraction=0.5) -> Benchmark:
    """Typed benchmark graph plus labelled valid/test sets.

    Each held-out positive gets one negative.  A ``planted_fraction`` share of
    negatives are planted violations: an entity of the wrong class in a
    head or tail slot, or, for friend/enemy positives, the same pair under
    the disjoint relation with a conflicting training fact.  The rest are
    ordinary filtered corruptions.
    """
    rng = np.random.default_rng(seed)
    members, base = _true_facts(rng, n_per_class, n_communities)
    used = {f[0] for f in base} | {f[2] for f in base}
    # entities that never occur in a fact would not survive a round trip through the split files
    entity_class = {e: leaf for leaf, es in members.items() for e in es if e in used}
    typed = [(e, c) for e, c in sorted(entity_class.items()) if rng.random() >= untyped_fraction]
    ontology = _ontology(typed)
    truth = sorted(saturate(base, ontology))
    order = rng.permutation(len(truth))
    n_tr = int(split_fractions[0] * len(truth))
    n_va = int(split_fractions[1] * len(truth))
    parts = {Split.TRAIN: order[:n_tr], Split.VALID: order[n_tr:n_tr + n_va], Split.TEST: order[n_tr + n_va:]}
    graph = KnowledgeGraph()
    # intern every entity up front so ids do not depend on which facts were drawn
    for e in sorted(entity_class):
        graph.entities.intern(e)
    for rel in sorted(SIGNATURES):
        graph.relations.intern(rel)
    for split, idx in parts.items():
        for i in sorted(idx):
            graph.add_triple(*truth[i], split)
    truth_set = set(truth)
    labeled = [_labeled(graph, split, rng, entity_class, truth_set, planted_fraction, 3 * seed + k)
               for k, split in enumerate((Split.TRAIN, Split.VALID, Split.TEST))]
    return Benchmark(graph, ontology, *labeled, seed)


def _wrong_class_entities(entity_class, cls):
    ok = {leaf for leaf, sup in LEAVES.items() if sup == cls or leaf == cls or SUPERS.get(sup) == cls}
    return sorted(e for e, c in entity_class.items() if c not in ok)


def _labeled(graph, split, rng, entity_class, truth, planted_fraction, neg_seed):
    positives = graph.triples(split)
    known = graph.all_triples() | {graph.from_symbols(*t) for t in truth}
    train_syms = graph.facts((Split.TRAIN,))
    train_conflicts = {":friendOf": [], ":enemyOf": []}
    for h, r, t in sorted(train_syms):
        if r in train_conflicts:
            train_conflicts[r].append((h, t))
    randoms = iter(generate_negatives(graph, split, 1, "both", neg_seed))
    out = [LabeledTriple(p, True) for p in positives]
    for p in positives:
        neg = None
        if rng.random() < planted_fraction:
            neg = _planted(graph, p, rng, entity_class, known, train_conflicts)
        if neg is None:
            neg = next(randoms).triple
        else:
            next(randoms)
        out.append(LabeledTriple(neg, False))
    return out


def _planted(graph, pos, rng, entity_class, known, train_conflicts):
    h, r, t = graph.to_symbols(pos)
    if r in (":friendOf", ":enemyOf") and rng.random() < 0.5:
        other = ":enemyOf" if r == ":friendOf" else ":friendOf"
        pairs = train_conflicts[r]
        if pairs:
            a, b = pairs[int(rng.integers(len(pairs)))]
            cand = graph.from_symbols(a, other, b)
            if cand not in known:
                return cand
    dom, rng_cls = SIGNATURES[r]
    corrupt_head = bool(rng.integers(2))
    pool = _wrong_class_entities(entity_class, dom if corrupt_head else rng_cls)
    for _ in range(20):
        e = graph.entities.id(pool[int(rng.integers(len(pool)))])
        cand = Triple(e, pos.relation, pos.tail) if corrupt_head else Triple(pos.head, pos.relation, e)
        if cand not in known:
            return cand
    return None


def benchmark_artifacts(bench: Benchmark, kge_config=None, fusion_config=None):
    """Train embeddings on the train split and tune thresholds on validation.

    The fusion head is fitted on the labelled validation set: on the triples
    the embeddings were trained on, their scores are saturated and carry no
    information about how much to trust them.  The labelled train set is
    only used to monitor the fit.
    """
    from .ablation import Artifacts
    from .fusion import FusionConfig
    from .kge import TrainConfig, train, tune_thresholds

    kge_config = kge_config or TrainConfig(dim=32, epochs=300, batch_size=256, negatives=16, seed=bench.seed)
    table = train(bench.graph, kge_config).table
    thresholds = tune_thresholds(table, bench.valid)
    return Artifacts(table=table, thresholds=thresholds, fusion_train=bench.valid, fusion_valid=bench.train,
                     test=bench.test, fusion_config=fusion_config or FusionConfig())


def write_benchmark(bench: Benchmark, out_dir) -> Path:
    """Write splits, ontology, labelled sets and a run config; returns the config path."""
    from .kg import dump_labeled
    from .ontology import serialize_ontology

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = bench.graph
    for split in (Split.TRAIN, Split.VALID, Split.TEST):
        lines = ["\t".join(g.to_symbols(t)) + "\n" for t in g.triples(split)]
        (out / f"{split.value}.txt").write_text("".join(lines), encoding="utf-8")
    (out / "ontology.nt").write_text(serialize_ontology(bench.ontology), encoding="utf-8")
    for name, data in (("train", bench.train), ("valid", bench.valid), ("test", bench.test)):
        dump_labeled(out / f"labeled_{name}.jsonl", g, data)
    config = {
        "data": {"train": "train.txt", "valid": "valid.txt", "test": "test.txt"},
        "ontology": "ontology.nt",
        "labeled": {"train": "labeled_train.jsonl", "valid": "labeled_valid.jsonl",
                    "test": "labeled_test.jsonl"},
        "kge": {"dim": 32, "epochs": 300, "batch_size": 256, "negatives": 16, "seed": bench.seed},
        "fusion": {"seed": bench.seed},
    }
    path = out / "config.json"
    path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return path
