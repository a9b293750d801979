"""Symbolic checks and inference over a fact set and an ontology.

Facts are symbol-level ``(head, relation, tail)`` tuples.  Functions taking
a ``graph`` accept either a :class:`~ontokgc.kg.KnowledgeGraph` (its train
split is used as the fact base) or any iterable of symbol triples.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from .errors import RoundLimitError
from .kg import KnowledgeGraph
from .ontology import DisjointProperty, EquivalentProperty, Ontology, axiom_sort_key

DEFAULT_MAX_ROUNDS = 10


class Status(enum.Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Verdict:
    status: Status
    violated: tuple = ()

    def __post_init__(self):
        if (self.status is Status.VIOLATED) != bool(self.violated):
            raise ValueError("a Violated verdict carries at least one axiom, other verdicts none")

    @classmethod
    def satisfied(cls):
        return cls(Status.SATISFIED)

    @classmethod
    def unknown(cls):
        return cls(Status.UNKNOWN)

    @classmethod
    def violated_by(cls, axioms):
        return cls(Status.VIOLATED, tuple(sorted(set(axioms), key=axiom_sort_key)))

    @property
    def is_violated(self):
        return self.status is Status.VIOLATED

    def one_hot(self):
        return (float(self.status is Status.SATISFIED), float(self.status is Status.VIOLATED),
                float(self.status is Status.UNKNOWN))


@dataclass(frozen=True)
class InferenceRecord:
    triple: tuple
    axiom: object
    premises: tuple


def as_facts(graph) -> set:
    if isinstance(graph, KnowledgeGraph):
        return graph.facts()
    return set(map(tuple, graph))


def combine(verdicts: Iterable[Verdict]) -> Verdict:
    """Violated dominates (axioms unioned), then Unknown, then Satisfied."""
    verdicts = list(verdicts)
    bad = [ax for v in verdicts if v.is_violated for ax in v.violated]
    if bad:
        return Verdict.violated_by(bad)
    if any(v.status is Status.UNKNOWN for v in verdicts):
        return Verdict.unknown()
    return Verdict.satisfied()


def check_domain_range(ontology: Ontology, closure, triple) -> Verdict:
    """Class restrictions on head (domain) and tail (range).

    An entity meets a restriction when some asserted class of it has the
    restricted class in its closure.  An entity with no class assertion
    makes the restriction unknown.
    """
    h, r, t = triple
    checks = [(ax, h) for ax in ontology.domains.get(r, ())] + [(ax, t) for ax in ontology.ranges.get(r, ())]
    violated = []
    unknown = False
    for ax, ent in checks:
        asserted = ontology.classes_of.get(ent)
        if not asserted:
            unknown = True
            continue
        if not any(ax.cls in closure.get(c, (c,)) for c in asserted):
            violated.append(ax)
    if violated:
        return Verdict.violated_by(violated)
    return Verdict.unknown() if unknown else Verdict.satisfied()


class _FactIndex:
    def __init__(self, facts):
        self.facts = set(facts)
        self.out = defaultdict(lambda: defaultdict(set))  # rel -> head -> tails
        self.inc = defaultdict(lambda: defaultdict(set))  # rel -> tail -> heads
        for f in self.facts:
            self._index(f)

    def _index(self, f):
        h, r, t = f
        self.out[r][h].add(t)
        self.inc[r][t].add(h)

    def add(self, f):
        if f in self.facts:
            return False
        self.facts.add(f)
        self._index(f)
        return True


def _composition_step(index, delta, compositions):
    """Conclusions of every composition with at least one premise in ``delta``."""
    found = {}
    for f in sorted(delta):
        x, rel, y = f
        for ax in compositions:
            if rel == ax.first:
                for z in sorted(index.out[ax.second].get(y, ())):
                    found.setdefault((x, ax.result, z), (ax, (f, (y, ax.second, z))))
            if rel == ax.second:
                for w in sorted(index.inc[ax.first].get(x, ())):
                    found.setdefault((w, ax.result, y), (ax, ((w, ax.first, x), f)))
    return found


def materialize_compositions(graph, ontology: Ontology, max_rounds=DEFAULT_MAX_ROUNDS) -> list[InferenceRecord]:
    """Semi-naive fixpoint of the composition axioms over the facts.

    Each round joins only against facts derived in the previous round.
    Output is sorted by inferred triple.
    """
    comps = sorted(ontology.compositions, key=axiom_sort_key)
    index = _FactIndex(as_facts(graph))
    delta = set(index.facts)
    records = {}
    rounds = 0
    while delta and comps:
        rounds += 1
        new = set()
        for triple, (ax, premises) in sorted(_composition_step(index, delta, comps).items()):
            if triple not in index.facts and triple not in new:
                records[triple] = InferenceRecord(triple, ax, premises)
                new.add(triple)
        if new and rounds > max_rounds:
            raise RoundLimitError(max_rounds)
        for f in new:
            index.add(f)
        delta = new
    return [records[k] for k in sorted(records)]


def expand_equivalences(graph, ontology: Ontology) -> list[InferenceRecord]:
    """Copy each fact to every relation in its equivalence class."""
    facts = as_facts(graph)
    records = {}
    cache = {}
    for f in sorted(facts):
        h, r, t = f
        if r not in cache:
            cache[r] = sorted(ontology.equivalence_class(r) - {r})
        for r2 in cache[r]:
            new = (h, r2, t)
            if new not in facts and new not in records:
                records[new] = InferenceRecord(new, _equivalence_path_axiom(ontology, r, r2), (f,))
    return [records[k] for k in sorted(records)]


def _equivalence_path_axiom(ontology, r1, r2):
    # the direct axiom when one exists, else the first hop of the chain
    if r2 in ontology.equivalents.get(r1, ()):
        return EquivalentProperty(r1, r2)
    prev = {r1: None}
    queue = [r1]
    while queue:
        cur = queue.pop(0)
        for nxt in sorted(ontology.equivalents.get(cur, ())):
            if nxt not in prev:
                prev[nxt] = cur
                queue.append(nxt)
    node = r2
    while prev[node] != r1:
        node = prev[node]
    return EquivalentProperty(r1, node)


def derive(graph, ontology: Ontology, max_rounds=DEFAULT_MAX_ROUNDS) -> list[InferenceRecord]:
    """Every fact entailed by equivalences and compositions together, with the
    axiom and premises of its first derivation; sorted by triple."""
    facts = as_facts(graph)
    records = {}
    for _ in range(max_rounds + 1):
        found = expand_equivalences(facts, ontology)
        found += materialize_compositions(facts | {rec.triple for rec in found}, ontology, max_rounds)
        new = [rec for rec in found if rec.triple not in facts]
        if not new:
            return [records[k] for k in sorted(records)]
        for rec in new:
            records.setdefault(rec.triple, rec)
            facts.add(rec.triple)
    raise RoundLimitError(max_rounds)


def saturate(graph, ontology: Ontology, max_rounds=DEFAULT_MAX_ROUNDS) -> set:
    """Facts closed under both equivalence expansion and composition."""
    return as_facts(graph) | {rec.triple for rec in derive(graph, ontology, max_rounds)}


def check_disjointness(graph, ontology: Ontology, triple) -> Verdict:
    """Violated when a relation disjoint with ``r`` already links ``h`` to ``t``.

    ``graph`` should already contain derived facts (see :func:`saturate`) when
    inferred conflicts are meant to count.
    """
    facts = graph if isinstance(graph, (set, frozenset)) else as_facts(graph)
    h, r, t = triple
    bad = [DisjointProperty(r, other) for other in sorted(ontology.disjoints.get(r, ()))
           if (h, other, t) in facts]
    return Verdict.violated_by(bad) if bad else Verdict.satisfied()


def symbolic_verdict(graph, ontology: Ontology, closure, triple, saturated=None) -> Verdict:
    """Domain/range check plus disjointness against the saturated fact set.

    Pass ``saturated`` (from :func:`saturate`) to reuse it across many queries.
    """
    if saturated is None:
        saturated = saturate(graph, ontology)
    return combine([check_domain_range(ontology, closure, triple),
                    check_disjointness(saturated, ontology, triple)])


class Reasoner:
    """Caches the saturated fact set so many triples can be judged cheaply."""

    def __init__(self, graph, ontology: Ontology, max_rounds=DEFAULT_MAX_ROUNDS):
        self.ontology = ontology
        self.closure = ontology.closure
        self.facts = saturate(graph, ontology, max_rounds)

    def verdict(self, triple) -> Verdict:
        return symbolic_verdict(None, self.ontology, self.closure, triple, saturated=self.facts)

    def entailed(self, triple) -> bool:
        return tuple(triple) in self.facts
