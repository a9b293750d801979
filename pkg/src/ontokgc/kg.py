"""Knowledge graph data model: interned symbols, split triple sets,
descriptions, and filtered negative sampling."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import ParseError, SamplingError, ValidationError


class Split(str, enum.Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


SPLITS = (Split.TRAIN, Split.VALID, Split.TEST)

MAX_RESAMPLE = 100


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class LabeledTriple(NamedTuple):
    triple: Triple
    label: bool


class LoadResult(NamedTuple):
    loaded: int
    duplicates: int


class Interner:
    """Bijective map between string symbols and contiguous integer ids."""

    def __init__(self, symbols: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._symbols: list[str] = []
        for s in symbols:
            self.intern(s)

    def intern(self, symbol: str) -> int:
        idx = self._ids.get(symbol)
        if idx is None:
            idx = len(self._symbols)
            self._ids[symbol] = idx
            self._symbols.append(symbol)
        return idx

    def id(self, symbol: str) -> int:
        try:
            return self._ids[symbol]
        except KeyError:
            raise KeyError(f"unknown symbol {symbol!r}") from None

    def get(self, symbol: str, default=None):
        return self._ids.get(symbol, default)

    def symbol(self, idx: int) -> str:
        if not 0 <= idx < len(self._symbols):
            raise KeyError(f"unknown id {idx}")
        return self._symbols[idx]

    @property
    def symbols(self) -> list[str]:
        return list(self._symbols)

    def __contains__(self, symbol) -> bool:
        return symbol in self._ids

    def __len__(self) -> int:
        return len(self._symbols)

    def __iter__(self) -> Iterator[str]:
        return iter(self._symbols)


@dataclass
class DescriptionMap:
    """Text descriptions of entities and relations.

    ``entity(sym)`` returns ``None`` for a miss; callers decide the fallback.
    """

    entities: dict[str, str] = field(default_factory=dict)
    relations: dict[str, str] = field(default_factory=dict)

    def entity(self, symbol: str) -> str | None:
        return self.entities.get(symbol)

    def relation(self, symbol: str) -> str | None:
        return self.relations.get(symbol)

    def entity_or_symbol(self, symbol: str) -> str:
        text = self.entities.get(symbol)
        return symbol if text is None else text

    def relation_or_symbol(self, symbol: str) -> str:
        text = self.relations.get(symbol)
        return symbol if text is None else text

    def __len__(self):
        return len(self.entities) + len(self.relations)


@dataclass
class DescriptionReport:
    loaded: int = 0
    unknown_ids: list[str] = field(default_factory=list)


class KnowledgeGraph:
    """Entities, relations, per-split triple sets and descriptions.

    Built by a single writer through the ``load_*``/``add_triple`` calls and
    treated as read-only afterwards.
    """

    def __init__(self):
        self.entities = Interner()
        self.relations = Interner()
        # dicts keep insertion order, which makes every derived list deterministic
        self._splits: dict[Split, dict[Triple, None]] = {s: {} for s in SPLITS}
        self.descriptions = DescriptionMap()

    # -- construction -------------------------------------------------------

    def add_triple(self, head: str, relation: str, tail: str, split=Split.TRAIN) -> bool:
        """Intern and store one triple; returns False when it was already in ``split``."""
        split = Split(split)
        h, t = self.entities.intern(head), self.entities.intern(tail)
        r = self.relations.intern(relation)
        triple = Triple(h, r, t)
        if triple in self._splits[split]:
            return False
        for other in SPLITS:
            if other is not split and triple in self._splits[other]:
                raise ValidationError(
                    f"triple ({head}, {relation}, {tail}) already present in split {other.value!r}"
                )
        self._splits[split][triple] = None
        return True

    # -- queries -------------------------------------------------------------

    def triples(self, split=Split.TRAIN) -> list[Triple]:
        return list(self._splits[Split(split)])

    def array(self, split=Split.TRAIN) -> np.ndarray:
        """Triples of ``split`` as an ``(n, 3)`` int64 array."""
        rows = self.triples(split)
        if not rows:
            return np.zeros((0, 3), dtype=np.int64)
        return np.asarray(rows, dtype=np.int64)

    def all_triples(self) -> set[Triple]:
        out: set[Triple] = set()
        for s in SPLITS:
            out.update(self._splits[s])
        return out

    def contains(self, triple: Triple, split=None) -> bool:
        if split is None:
            return any(triple in self._splits[s] for s in SPLITS)
        return triple in self._splits[Split(split)]

    def split_of(self, triple: Triple) -> Split | None:
        for s in SPLITS:
            if triple in self._splits[s]:
                return s
        return None

    def to_symbols(self, triple: Triple) -> tuple[str, str, str]:
        return (
            self.entities.symbol(triple.head),
            self.relations.symbol(triple.relation),
            self.entities.symbol(triple.tail),
        )

    def from_symbols(self, head: str, relation: str, tail: str) -> Triple:
        return Triple(self.entities.id(head), self.relations.id(relation), self.entities.id(tail))

    def facts(self, splits=(Split.TRAIN,)) -> set[tuple[str, str, str]]:
        """Symbol-level triples of the given splits (the known facts for reasoning)."""
        out = set()
        for s in splits:
            out.update(self.to_symbols(t) for t in self._splits[Split(s)])
        return out

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def stats(self) -> dict:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            **{s.value: len(self._splits[s]) for s in SPLITS},
            "entity_descriptions": len(self.descriptions.entities),
            "relation_descriptions": len(self.descriptions.relations),
        }

    @classmethod
    def from_symbol_triples(cls, splits: dict) -> "KnowledgeGraph":
        g = cls()
        for split, rows in splits.items():
            for h, r, t in rows:
                g.add_triple(h, r, t, split)
        return g


def _split_fields(line: str):
    return line.rstrip("\r\n").split("\t")


def load_triples(path, graph: KnowledgeGraph, split=Split.TRAIN) -> LoadResult:
    """Read ``head<TAB>relation<TAB>tail`` lines into ``split`` of ``graph``.

    Lines repeated within the split are stored once; the repeat count is
    returned as ``duplicates``.
    """
    split = Split(split)
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = _split_fields(line)
            if len(fields) != 3 or not all(fields):
                raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", path, lineno)
            rows.append(fields)
    loaded = dups = 0
    for h, r, t in rows:
        if graph.add_triple(h, r, t, split):
            loaded += 1
        else:
            dups += 1
    return LoadResult(loaded, dups)


def load_descriptions(path, graph: KnowledgeGraph) -> DescriptionReport:
    """Read ``id<TAB>text`` lines.

    A symbol known as a relation goes into the relation map, anything else
    into the entity map.  Symbols unknown to the graph are still stored and
    listed in the report.
    """
    path = Path(path)
    report = DescriptionReport()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = _split_fields(line)
            if len(fields) != 2 or not fields[0]:
                raise ParseError("expected 'id<TAB>description'", path, lineno)
            sym, text = fields
            if sym in graph.relations:
                graph.descriptions.relations[sym] = text
            else:
                graph.descriptions.entities[sym] = text
                if sym not in graph.entities:
                    report.unknown_ids.append(sym)
            report.loaded += 1
    return report


def generate_negatives(graph: KnowledgeGraph, split=Split.TEST, ratio=1, strategy="both", seed=0):
    """Filtered corruption negatives for every positive of ``split``.

    Each slot replaces the head or tail with a uniformly drawn entity; any
    candidate equal to a known triple (in any split) is redrawn, at most
    ``MAX_RESAMPLE`` times per slot.
    """
    if strategy not in ("corrupt-head", "corrupt-tail", "both"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if ratio < 0 or int(ratio) != ratio:
        raise ValueError("ratio must be a non-negative integer")
    ratio = int(ratio)
    positives = graph.triples(split)
    if not positives:
        raise ValueError(f"split {Split(split).value!r} is empty")
    if ratio == 0:
        return []
    known = graph.all_triples()
    n_ent = graph.num_entities
    rng = np.random.default_rng(seed)
    out = []
    for pos in positives:
        for _ in range(ratio):
            for _attempt in range(MAX_RESAMPLE):
                if strategy == "both":
                    corrupt_head = bool(rng.integers(2))
                else:
                    corrupt_head = strategy == "corrupt-head"
                e = int(rng.integers(n_ent))
                cand = Triple(e, pos.relation, pos.tail) if corrupt_head else Triple(pos.head, pos.relation, e)
                if cand not in known:
                    out.append(LabeledTriple(cand, False))
                    break
            else:
                h, r, t = graph.to_symbols(pos)
                raise SamplingError(
                    f"no valid negative for ({h}, {r}, {t}) after {MAX_RESAMPLE} attempts"
                )
    return out


def labeled_split(graph: KnowledgeGraph, split=Split.TEST, ratio=1, strategy="both", seed=0):
    """Positives of ``split`` followed by their filtered negatives."""
    pos = [LabeledTriple(t, True) for t in graph.triples(split)]
    return pos + generate_negatives(graph, split, ratio, strategy, seed)


def load_graph(train, valid=None, test=None, descriptions=None) -> KnowledgeGraph:
    g = KnowledgeGraph()
    for split, path in ((Split.TRAIN, train), (Split.VALID, valid), (Split.TEST, test)):
        if path is not None:
            load_triples(path, g, split)
    if descriptions is not None:
        load_descriptions(descriptions, g)
    return g


def dump_labeled(path, graph: KnowledgeGraph, labeled, extra=None) -> None:
    """Write ``{"h", "r", "t", "label"}`` JSON lines; ``extra[i]`` dicts are merged in."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for i, lt in enumerate(labeled):
            h, r, t = graph.to_symbols(lt[0])
            rec = {"h": h, "r": r, "t": t, "label": None if lt[1] is None else bool(lt[1])}
            if extra is not None:
                rec.update(extra[i])
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_jsonl(path) -> list[dict]:
    out = []
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", path, lineno) from None
            if not isinstance(rec, dict) or not {"h", "r", "t"} <= set(rec):
                raise ParseError("expected an object with h, r, t", path, lineno)
            out.append(rec)
    return out


def load_labeled(path, graph: KnowledgeGraph) -> list[LabeledTriple]:
    """Read labelled JSON lines, resolving symbols against ``graph``."""
    out = []
    for i, rec in enumerate(read_jsonl(path), 1):
        try:
            triple = graph.from_symbols(rec["h"], rec["r"], rec["t"])
        except KeyError as exc:
            raise ValidationError(f"{path}: record {i}: {exc.args[0]}") from None
        label = rec.get("label")
        out.append(LabeledTriple(triple, None if label is None else bool(label)))
    return out
