"""Typed ontology axioms, the line-oriented axiom file format, and the
subclass closure.

File format, one axiom per line::

    :IronMan rdf:type :Person .
    :Women rdfs:subClassOf :Person .
    :hasWife rdfs:domain :Person .
    :hasWife rdfs:range :Person .
    :hasMother rdfs:subPropertyOf :hasFather o :hasWife .
    :allyOf owl:equivalentProperty :isFriend .
    :isEnemy owl:propertyDisjointWith :isFriend .

``composedOf`` is accepted as a synonym of ``rdfs:subPropertyOf`` for
compositions.  Blank lines and ``#`` comments are ignored; a trailing
`` # ...`` comment on an axiom line is stripped.
"""
from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import ClassVar, Iterable, Union

from .errors import CycleError, OntologyError, ParseError

RDF_TYPE = "rdf:type"
SUBCLASS = "rdfs:subClassOf"
DOMAIN = "rdfs:domain"
RANGE = "rdfs:range"
SUBPROPERTY = "rdfs:subPropertyOf"
COMPOSED_OF = "composedOf"
EQUIVALENT = "owl:equivalentProperty"
DISJOINT = "owl:propertyDisjointWith"
COMPOSE_OP = "o"

PREDICATES = (RDF_TYPE, SUBCLASS, DOMAIN, RANGE, SUBPROPERTY, COMPOSED_OF, EQUIVALENT, DISJOINT)


@dataclass(frozen=True, order=True)
class ClassAssertion:
    tag: ClassVar[str] = "class_assertion"
    entity: str
    cls: str

    def line(self):
        return f"{self.entity} {RDF_TYPE} {self.cls} ."

    def symbols(self):
        return {"entities": {self.entity}, "relations": set(), "classes": {self.cls}}


@dataclass(frozen=True, order=True)
class SubClassOf:
    tag: ClassVar[str] = "subclass_of"
    sub: str
    sup: str

    def line(self):
        return f"{self.sub} {SUBCLASS} {self.sup} ."

    def symbols(self):
        return {"entities": set(), "relations": set(), "classes": {self.sub, self.sup}}


@dataclass(frozen=True, order=True)
class Domain:
    tag: ClassVar[str] = "domain"
    relation: str
    cls: str

    def line(self):
        return f"{self.relation} {DOMAIN} {self.cls} ."

    def symbols(self):
        return {"entities": set(), "relations": {self.relation}, "classes": {self.cls}}


@dataclass(frozen=True, order=True)
class Range:
    tag: ClassVar[str] = "range"
    relation: str
    cls: str

    def line(self):
        return f"{self.relation} {RANGE} {self.cls} ."

    def symbols(self):
        return {"entities": set(), "relations": {self.relation}, "classes": {self.cls}}


@dataclass(frozen=True, order=True)
class Composition:
    """``result ⊑ first ∘ second``: first(x, y) and second(y, z) give result(x, z)."""

    tag: ClassVar[str] = "composition"
    result: str
    first: str
    second: str

    def line(self):
        return f"{self.result} {SUBPROPERTY} {self.first} {COMPOSE_OP} {self.second} ."

    def symbols(self):
        return {"entities": set(), "relations": {self.result, self.first, self.second}, "classes": set()}


class _SymmetricPair:
    # stored with the two relations sorted, so (a, b) and (b, a) compare equal
    def __post_init__(self):
        if self.r1 > self.r2:
            a, b = self.r2, self.r1
            object.__setattr__(self, "r1", a)
            object.__setattr__(self, "r2", b)

    def other(self, relation):
        return self.r2 if relation == self.r1 else self.r1

    def symbols(self):
        return {"entities": set(), "relations": {self.r1, self.r2}, "classes": set()}


@dataclass(frozen=True, order=True)
class EquivalentProperty(_SymmetricPair):
    tag: ClassVar[str] = "equivalent_property"
    r1: str
    r2: str

    def line(self):
        return f"{self.r1} {EQUIVALENT} {self.r2} ."


@dataclass(frozen=True, order=True)
class DisjointProperty(_SymmetricPair):
    tag: ClassVar[str] = "disjoint_property"
    r1: str
    r2: str

    def line(self):
        return f"{self.r1} {DISJOINT} {self.r2} ."


Axiom = Union[ClassAssertion, SubClassOf, Domain, Range, Composition, EquivalentProperty, DisjointProperty]

AXIOM_TYPES = (ClassAssertion, SubClassOf, Domain, Range, Composition, EquivalentProperty, DisjointProperty)
TAGS = tuple(t.tag for t in AXIOM_TYPES)
TAG_ORDER = {tag: i for i, tag in enumerate(TAGS)}


def axiom_sort_key(ax):
    return (TAG_ORDER[ax.tag], ax.line())


_COMMENT = re.compile(r"\s#.*$")


class UnknownPredicate(Exception):
    def __init__(self, predicate):
        self.predicate = predicate
        super().__init__(predicate)


def parse_axiom_line(line: str):
    """Parse one axiom line.

    Returns the axiom, ``None`` for a blank/comment line; raises ``ValueError``
    for malformed lines and ``UnknownPredicate`` for an unsupported predicate.
    """
    text = _COMMENT.sub("", line).strip()
    if not text or text.startswith("#"):
        return None
    tokens = text.split()
    if tokens[-1] == ".":
        tokens = tokens[:-1]
    elif tokens[-1].endswith(".") and len(tokens[-1]) > 1:
        tokens[-1] = tokens[-1][:-1]
    if len(tokens) < 3:
        raise ValueError(f"expected 'subject predicate object .', got {len(tokens)} token(s)")
    subj, pred, obj = tokens[0], tokens[1], tokens[2:]
    if pred not in PREDICATES:
        raise UnknownPredicate(pred)
    if pred in (SUBPROPERTY, COMPOSED_OF):
        if len(obj) != 3 or obj[1] != COMPOSE_OP:
            raise ValueError(f"composition object must be 'r1 {COMPOSE_OP} r2'")
        return Composition(subj, obj[0], obj[2])
    if len(obj) != 1:
        raise ValueError(f"predicate {pred} takes a single object")
    obj = obj[0]
    if pred == RDF_TYPE:
        return ClassAssertion(subj, obj)
    if pred == SUBCLASS:
        return SubClassOf(subj, obj)
    if pred == DOMAIN:
        return Domain(subj, obj)
    if pred == RANGE:
        return Range(subj, obj)
    if pred == EQUIVALENT:
        return EquivalentProperty(subj, obj)
    return DisjointProperty(subj, obj)


class Ontology:
    """Axiom multiset with per-tag, per-relation and per-entity indexes.

    Construction enforces the store invariants: acyclic subclass edges and no
    relation pair that is both equivalent and disjoint.
    """

    def __init__(self, axioms: Iterable[Axiom] = ()):
        self._axioms = sorted(axioms, key=axiom_sort_key)
        self.by_tag: dict[str, list] = {tag: [] for tag in TAGS}
        self.classes_of: dict[str, set] = defaultdict(set)
        self.domains: dict[str, list] = defaultdict(list)
        self.ranges: dict[str, list] = defaultdict(list)
        self.compositions: list[Composition] = []
        self.equivalents: dict[str, set] = defaultdict(set)
        self.disjoints: dict[str, set] = defaultdict(set)
        self.superclasses: dict[str, set] = defaultdict(set)
        for ax in self._axioms:
            self.by_tag[ax.tag].append(ax)
            if isinstance(ax, ClassAssertion):
                self.classes_of[ax.entity].add(ax.cls)
            elif isinstance(ax, SubClassOf):
                self.superclasses[ax.sub].add(ax.sup)
            elif isinstance(ax, Domain):
                self.domains[ax.relation].append(ax)
            elif isinstance(ax, Range):
                self.ranges[ax.relation].append(ax)
            elif isinstance(ax, Composition):
                self.compositions.append(ax)
            elif isinstance(ax, EquivalentProperty):
                self.equivalents[ax.r1].add(ax.r2)
                self.equivalents[ax.r2].add(ax.r1)
            else:
                self.disjoints[ax.r1].add(ax.r2)
                self.disjoints[ax.r2].add(ax.r1)
        clash = sorted(set(self.by_tag["equivalent_property"]) & {
            EquivalentProperty(d.r1, d.r2) for d in self.by_tag["disjoint_property"]})
        if clash:
            offenders = []
            for eq in clash:
                offenders += [eq, DisjointProperty(eq.r1, eq.r2)]
            raise OntologyError(
                "relations declared both equivalent and disjoint: "
                + "; ".join(f"({e.r1}, {e.r2})" for e in clash),
                offenders,
            )
        self.closure  # cycle check at load time

    @property
    def axioms(self) -> list:
        return list(self._axioms)

    def __len__(self):
        return len(self._axioms)

    def __iter__(self):
        return iter(self._axioms)

    def __eq__(self, other):
        return isinstance(other, Ontology) and self._axioms == other._axioms

    def counts(self) -> dict[str, int]:
        return {tag: len(v) for tag, v in self.by_tag.items()}

    def classes(self) -> set[str]:
        out = set()
        for ax in self._axioms:
            out |= ax.symbols()["classes"]
        return out

    def relations(self) -> set[str]:
        out = set()
        for ax in self._axioms:
            out |= ax.symbols()["relations"]
        return out

    @cached_property
    def closure(self) -> dict[str, frozenset]:
        return subclass_closure(self)

    def class_closure(self, cls: str) -> frozenset:
        return self.closure.get(cls, frozenset((cls,)))

    def entity_types(self, entity: str) -> frozenset:
        """All classes of ``entity`` including inherited superclasses."""
        out = set()
        for c in self.classes_of.get(entity, ()):
            out |= self.class_closure(c)
        return frozenset(out)

    def equivalence_class(self, relation: str) -> set[str]:
        """Relations reachable from ``relation`` through equivalence axioms (incl. itself)."""
        seen = {relation}
        stack = [relation]
        while stack:
            for nxt in self.equivalents.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    def subset(self, axioms) -> "Ontology":
        return Ontology(axioms)


@dataclass
class ParseReport:
    counts: dict[str, int] = field(default_factory=lambda: {tag: 0 for tag in TAGS})
    unknown_predicates: list[tuple[int, str]] = field(default_factory=list)
    unresolved: list[tuple[int, str]] = field(default_factory=list)


def parse_ontology_text(text: str, graph=None, path=None) -> tuple[Ontology, ParseReport]:
    report = ParseReport()
    axioms = []
    for lineno, line in enumerate(text.splitlines(), 1):
        try:
            ax = parse_axiom_line(line)
        except UnknownPredicate as exc:
            report.unknown_predicates.append((lineno, exc.predicate))
            continue
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if ax is None:
            continue
        axioms.append(ax)
        report.counts[ax.tag] += 1
        if graph is not None:
            syms = ax.symbols()
            for e in sorted(syms["entities"]):
                if e not in graph.entities:
                    report.unresolved.append((lineno, e))
            for r in sorted(syms["relations"]):
                if r not in graph.relations:
                    report.unresolved.append((lineno, r))
    return Ontology(axioms), report


def parse_ontology(path, graph=None) -> tuple[Ontology, ParseReport]:
    """Read an axiom file.  Symbols unknown to ``graph`` are reported, not rejected."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read ontology: {exc}", path) from None
    return parse_ontology_text(text, graph, path)


def serialize_ontology(ontology: Ontology) -> str:
    """Deterministic text form: tag order, then lexicographic line order."""
    return "".join(ax.line() + "\n" for ax in ontology)


def subclass_closure(ontology: Ontology) -> dict[str, frozenset]:
    """Reflexive-transitive superclass sets for every class the ontology mentions."""
    parents = ontology.superclasses
    classes = sorted(ontology.classes())
    closure: dict[str, frozenset] = {}
    WHITE, GREY, BLACK = 0, 1, 2
    state = defaultdict(int)
    for root in classes:
        if state[root] == BLACK:
            continue
        # iterative DFS; path holds the grey chain for cycle reporting
        path = [root]
        iters = [iter(sorted(parents.get(root, ())))]
        state[root] = GREY
        while path:
            node = path[-1]
            nxt = next(iters[-1], None)
            if nxt is None:
                acc = {node}
                for p in parents.get(node, ()):
                    acc |= closure[p]
                closure[node] = frozenset(acc)
                state[node] = BLACK
                path.pop()
                iters.pop()
            elif state[nxt] == GREY:
                cycle = path[path.index(nxt):] + [nxt]
                raise CycleError(cycle, [SubClassOf(a, b) for a, b in zip(cycle, cycle[1:])])
            elif state[nxt] == WHITE:
                state[nxt] = GREY
                path.append(nxt)
                iters.append(iter(sorted(parents.get(nxt, ()))))
    return closure


def class_depth(ontology: Ontology) -> dict[str, int]:
    """Longest superclass chain length above each class (roots are 0)."""
    closure = ontology.closure
    parents = ontology.superclasses
    depth: dict[str, int] = {}
    # in a DAG every parent has a strictly smaller closure than its child
    for c in sorted(closure, key=lambda c: (len(closure[c]), c)):
        ps = parents.get(c, ())
        depth[c] = 1 + max(depth[p] for p in ps) if ps else 0
    return depth
