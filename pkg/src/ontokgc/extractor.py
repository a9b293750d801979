"""Candidate axiom extraction: statistical miners, parsing of model output,
and merging of a review file into an ontology."""
from __future__ import annotations

import enum
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import OntologyError, ParseError, ValidationError
from .ontology import (
    PREDICATES,
    Composition,
    DisjointProperty,
    Domain,
    EquivalentProperty,
    Ontology,
    Range,
    UnknownPredicate,
    axiom_sort_key,
    class_depth,
    parse_axiom_line,
)
from .reasoner import as_facts


class Source(str, enum.Enum):
    MINED = "mined"
    LLM = "llm"
    MANUAL = "manual"


@dataclass(frozen=True)
class CandidateAxiom:
    axiom: object
    support: int | None = None
    confidence: float | None = None
    source: Source = Source.MINED

    def __post_init__(self):
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.support is not None and self.support < 0:
            raise ValueError("support must be non-negative")

    def line(self) -> str:
        meta = [f"source={Source(self.source).value}"]
        if self.support is not None:
            meta.insert(0, f"support={self.support}")
        if self.confidence is not None:
            meta.insert(1 if self.support is not None else 0, f"confidence={self.confidence:.6g}")
        return f"{self.axiom.line()} # {' '.join(meta)}"


def _sorted(cands):
    return sorted(cands, key=lambda c: axiom_sort_key(c.axiom))


# -- domain / range ----------------------------------------------------------


def _most_specific(fractions, theta, depth):
    ok = [c for c, f in fractions.items() if f >= theta]
    if not ok:
        return None
    return min(ok, key=lambda c: (-depth.get(c, 0), c))


def mine_domain_range(graph, ontology: Ontology, theta=0.9) -> list[CandidateAxiom]:
    """Domain/range candidates from the classes of each relation's arguments.

    For every relation, among its distinct typed heads (tails) count how many
    fall into each class (through the subclass closure).  The deepest class
    covering at least ``theta`` of them is emitted; ties go to the
    lexicographically smallest class.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must be in (0, 1]")
    facts = as_facts(graph)
    heads = defaultdict(set)
    tails = defaultdict(set)
    for h, r, t in facts:
        heads[r].add(h)
        tails[r].add(t)
    depth = class_depth(ontology)
    out = []
    for r in sorted(set(heads) | set(tails)):
        for ents, kind in ((heads[r], Domain), (tails[r], Range)):
            typed = [e for e in ents if ontology.classes_of.get(e)]
            if not typed:
                continue
            counts = defaultdict(int)
            for e in typed:
                for c in ontology.entity_types(e):
                    counts[c] += 1
            fractions = {c: n / len(typed) for c, n in counts.items()}
            best = _most_specific(fractions, theta, depth)
            if best is not None:
                out.append(CandidateAxiom(kind(r, best), len(typed), fractions[best], Source.MINED))
    return _sorted(out)


# -- compositions --------------------------------------------------------------


def _adjacency(facts):
    ents = sorted({f[0] for f in facts} | {f[2] for f in facts})
    eid = {e: i for i, e in enumerate(ents)}
    by_rel = defaultdict(list)
    for h, r, t in facts:
        by_rel[r].append((eid[h], eid[t]))
    n = len(ents)
    mats = {}
    for r, pairs in by_rel.items():
        rows, cols = np.array(pairs, dtype=np.int64).T
        mats[r] = sparse.csr_matrix((np.ones(len(pairs), dtype=np.int64), (rows, cols)), shape=(n, n))
    return mats


def mine_compositions(graph, min_support=1, min_confidence=0.5) -> list[CandidateAxiom]:
    """Length-two path rules ``r ⊑ r1 ∘ r2``.

    ``support`` counts the (x, z) pairs joined by an r1-then-r2 path that also
    carry r; ``confidence`` divides it by the number of path pairs.
    """
    mats = _adjacency(as_facts(graph))
    rels = sorted(mats)
    out = []
    for r1 in rels:
        for r2 in rels:
            paths = (mats[r1] @ mats[r2]).astype(bool).astype(np.int64)
            n_paths = paths.nnz
            if n_paths == 0:
                continue
            for r in rels:
                support = int(paths.multiply(mats[r]).nnz)
                if support < min_support or support == 0:
                    continue
                conf = support / n_paths
                if conf >= min_confidence:
                    out.append(CandidateAxiom(Composition(r, r1, r2), support, conf, Source.MINED))
    return _sorted(out)


# -- equivalence / disjointness -----------------------------------------------------


def mine_equivalence_disjointness(graph, high=0.9, zero_tolerance=0.0, min_support=1,
                                  ontology: Ontology | None = None) -> list[CandidateAxiom]:
    """Relation pairs by Jaccard overlap of their (head, tail) pair sets.

    Overlap ``>= high`` gives an equivalence.  Overlap ``<= zero_tolerance``
    gives a disjointness, but only when the two relations connect the same
    kinds of arguments: their head classes and tail classes intersect (or,
    without class information, their head and tail entity sets do).
    """
    pairs = defaultdict(set)
    for h, r, t in as_facts(graph):
        pairs[r].add((h, t))

    def signature(rel):
        hs = {h for h, _ in pairs[rel]}
        ts = {t for _, t in pairs[rel]}
        if ontology is not None and any(ontology.classes_of.get(e) for e in hs | ts):
            hs = set().union(*(ontology.entity_types(e) for e in hs))
            ts = set().union(*(ontology.entity_types(e) for e in ts))
        return hs, ts

    rels = sorted(r for r in pairs if len(pairs[r]) >= min_support)
    sigs = {r: signature(r) for r in rels}
    out = []
    for i, a in enumerate(rels):
        for b in rels[i + 1:]:
            inter = len(pairs[a] & pairs[b])
            jac = inter / len(pairs[a] | pairs[b])
            support = min(len(pairs[a]), len(pairs[b]))
            if jac >= high:
                out.append(CandidateAxiom(EquivalentProperty(a, b), support, jac, Source.MINED))
            elif jac <= zero_tolerance:
                (ha, ta), (hb, tb) = sigs[a], sigs[b]
                if ha & hb and ta & tb:
                    out.append(CandidateAxiom(DisjointProperty(a, b), support, 1.0 - jac, Source.MINED))
    return _sorted(out)


# -- model output -------------------------------------------------------------------


@dataclass
class LlmParseReport:
    skipped: list[int] = field(default_factory=list)
    diagnostics: list[tuple[int, str]] = field(default_factory=list)


_DECOR = re.compile(r"^\s*(?:[-*+]|\d+[.)])\s+|`")


def parse_llm_axioms(text: str) -> tuple[list[CandidateAxiom], LlmParseReport]:
    """Pull axiom lines out of free-form model output.

    Lines that parse become ``llm`` candidates.  Lines naming a known
    predicate but failing to parse are diagnostics; everything else is
    recorded as skipped.  Never raises.
    """
    report = LlmParseReport()
    found = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _DECOR.sub("", raw).strip()
        if not line:
            continue
        try:
            ax = parse_axiom_line(line)
        except UnknownPredicate:
            report.skipped.append(lineno)
            continue
        except ValueError as exc:
            if any(tok in PREDICATES for tok in line.split()):
                report.diagnostics.append((lineno, str(exc)))
            else:
                report.skipped.append(lineno)
            continue
        if ax is None:
            report.skipped.append(lineno)
            continue
        found.append(CandidateAxiom(ax, source=Source.LLM))
    return found, report


# -- candidate / review files -------------------------------------------------------------


_META = re.compile(r"(\w+)=(\S+)")


def write_candidates(candidates, path) -> None:
    Path(path).write_text("".join(c.line() + "\n" for c in _sorted(candidates)), encoding="utf-8")


def read_candidates(path) -> list[CandidateAxiom]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        body, _, meta = line.partition(" # ")
        try:
            ax = parse_axiom_line(body)
        except (ValueError, UnknownPredicate) as exc:
            raise ParseError(str(exc), path, lineno) from None
        if ax is None:
            continue
        kv = dict(_META.findall(meta))
        out.append(CandidateAxiom(
            ax,
            int(kv["support"]) if "support" in kv else None,
            float(kv["confidence"]) if "confidence" in kv else None,
            Source(kv.get("source", "manual")),
        ))
    return out


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class ReviewDecision:
    axiom: object
    verdict: Decision
    note: str = ""


def read_review(path) -> list[ReviewDecision]:
    """Parse ``accept|reject<TAB>axiom-line<TAB>note`` lines."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (2, 3) or fields[0] not in ("accept", "reject"):
            raise ParseError("expected 'accept|reject<TAB>axiom<TAB>note'", path, lineno)
        try:
            ax = parse_axiom_line(fields[1])
        except (ValueError, UnknownPredicate) as exc:
            raise ParseError(str(exc), path, lineno) from None
        if ax is None:
            raise ParseError("empty axiom", path, lineno)
        out.append(ReviewDecision(ax, Decision(fields[0]), fields[2] if len(fields) == 3 else ""))
    return out


def review_merge(candidates, decisions=(), default=Decision.ACCEPT) -> Ontology:
    """Turn reviewed candidates into an ontology.

    A candidate is kept when explicitly accepted, or when ``default`` is
    accept and nobody rejected it.  The result must satisfy the store
    invariants.
    """
    default = Decision(default)
    known = {c.axiom for c in candidates}
    verdicts = {}
    for d in decisions:
        if d.axiom not in known:
            raise ValidationError(f"review decision for unknown candidate: {d.axiom.line()}")
        verdicts[d.axiom] = Decision(d.verdict)
    kept = []
    seen = set()
    for c in candidates:
        if c.axiom in seen:
            continue
        seen.add(c.axiom)
        if verdicts.get(c.axiom, default) is Decision.ACCEPT:
            kept.append(c.axiom)
    try:
        return Ontology(kept)
    except OntologyError as exc:
        names = "; ".join(ax.line() for ax in exc.axioms) or str(exc)
        raise OntologyError(f"merged ontology is inconsistent: {exc} [{names}]", exc.axioms) from None
