"""Relevant-axiom selection, template verbalisation and prompt assembly."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConfigError, ParseError
from .kg import DescriptionMap
from .ontology import (
    TAGS,
    ClassAssertion,
    Composition,
    DisjointProperty,
    Domain,
    EquivalentProperty,
    Ontology,
    Range,
    SubClassOf,
    axiom_sort_key,
)

DEFAULT_INSTRUCTION = "Please help determine whether the triple (h,r,t) is a valid triple."

DEFAULT_TEMPLATES = {
    "class_assertion": "The class of entity {entity} is {cls}.",
    "subclass_of": "Class {sub} is a subclass of class {sup}.",
    "domain": "The head entity of relation {relation} belongs to class {cls}.",
    "range": "The tail entity of relation {relation} belongs to class {cls}.",
    "composition": "Relation {result} holds whenever {first} then {second} holds.",
    "equivalent_property": "Relations {r1} and {r2} are equivalent.",
    "disjoint_property": "Relations {r1} and {r2} cannot both hold between the same entities.",
}


def resource_path(name: str) -> Path:
    """Path of a file shipped in ``ontokgc/resources`` (editable defaults)."""
    return Path(__file__).resolve().parent / "resources" / name


def load_templates(path) -> dict[str, str]:
    """Read ``tag<TAB>template`` lines; every axiom tag must be covered."""
    templates = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        tag, sep, text = line.partition("\t")
        if not sep:
            raise ParseError("expected 'tag<TAB>template'", path, lineno)
        if tag not in TAGS:
            raise ConfigError(f"{path}:{lineno}: unknown axiom tag {tag!r}")
        templates[tag] = text
    missing = [t for t in TAGS if t not in templates]
    if missing:
        raise ConfigError(f"{path}: no template for {', '.join(missing)}")
    return templates


def relevant_scope(ontology: Ontology, triple):
    """Entities, relations and classes that make an axiom relevant to ``triple``."""
    h, r, t = triple
    relations = ontology.equivalence_class(r)
    classes = set(ontology.entity_types(h)) | set(ontology.entity_types(t))
    return {h, t}, relations, classes


def is_relevant(axiom, entities, relations, classes) -> bool:
    if isinstance(axiom, ClassAssertion):
        # typing facts about other entities would flood the prompt
        return axiom.entity in entities
    syms = axiom.symbols()
    return bool(syms["relations"] & relations or syms["classes"] & classes)


def select_relevant(ontology: Ontology, closure, triple, max_axioms=None) -> list:
    """Axioms about the triple's entities, its relation (or equivalents), or
    any class its entities belong to; ordered by tag then text."""
    entities, relations, classes = relevant_scope(ontology, triple)
    picked = []
    for cls in (ClassAssertion, SubClassOf, Domain, Range, Composition, EquivalentProperty, DisjointProperty):
        picked += [ax for ax in ontology.by_tag[cls.tag] if is_relevant(ax, entities, relations, classes)]
    picked.sort(key=axiom_sort_key)
    if max_axioms is not None:
        picked = picked[:max_axioms]
    return picked


def _slot_values(axiom, descriptions: DescriptionMap | None):
    d = descriptions or DescriptionMap()
    if isinstance(axiom, ClassAssertion):
        return {"entity": d.entity_or_symbol(axiom.entity), "cls": axiom.cls}
    if isinstance(axiom, SubClassOf):
        return {"sub": axiom.sub, "sup": axiom.sup}
    if isinstance(axiom, (Domain, Range)):
        return {"relation": d.relation_or_symbol(axiom.relation), "cls": axiom.cls}
    if isinstance(axiom, Composition):
        return {k: d.relation_or_symbol(getattr(axiom, k)) for k in ("result", "first", "second")}
    return {"r1": d.relation_or_symbol(axiom.r1), "r2": d.relation_or_symbol(axiom.r2)}


def verbalize_axiom(axiom, descriptions=None, templates=None) -> str:
    templates = DEFAULT_TEMPLATES if templates is None else templates
    try:
        template = templates[axiom.tag]
    except KeyError:
        raise ConfigError(f"no template for axiom tag {axiom.tag!r}") from None
    try:
        return template.format(**_slot_values(axiom, descriptions))
    except (KeyError, IndexError) as exc:
        raise ConfigError(f"template for {axiom.tag!r} has an unknown slot: {exc}") from None


@dataclass(frozen=True)
class PromptBundle:
    triple: tuple
    instruction: str
    triple_text: str
    ontology_text: str
    sequence: str

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps({"triple": list(d["triple"]), "I": self.instruction, "X": self.triple_text,
                           "O": self.ontology_text, "S": self.sequence}, ensure_ascii=False)


def render_instruction(template: str, triple, descriptions=None) -> str:
    d = descriptions or DescriptionMap()
    h, r, t = triple
    return (template.replace("{head}", d.entity_or_symbol(h))
            .replace("{relation}", d.relation_or_symbol(r))
            .replace("{tail}", d.entity_or_symbol(t)))


def build_prompt(instruction, triple, descriptions=None, axioms=(), templates=None, sep="\n") -> PromptBundle:
    """Assemble instruction, triple text and ontology text into one sequence.

    ``{head}``, ``{relation}`` and ``{tail}`` in the instruction are replaced
    by descriptions; other text is kept verbatim.
    """
    d = descriptions or DescriptionMap()
    h, r, t = triple
    instr = render_instruction(instruction, triple, d)
    x = " ".join((d.entity_or_symbol(h), d.relation_or_symbol(r), d.entity_or_symbol(t)))
    o = "\n".join(verbalize_axiom(ax, d, templates) for ax in axioms)
    return PromptBundle(tuple(triple), instr, x, o, instr + sep + x + sep + o)
