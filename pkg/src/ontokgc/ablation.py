"""Ablation runs: which knowledge sources feed the classifier, and how much of
the ontology is used.

A run is described by an :class:`AblationSpec` and evaluated on the test
set held in :class:`Artifacts`.  The fused backend refits the adapter and
decoder for every seed; the embedding table and thresholds are shared.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ArtifactMissingError, ConfigError
from .fusion import FusionConfig, predict_many, train_fusion
from .kge.thresholds import classify_many
from .metrics import evaluate, mean_defined
from .ontology import Ontology, axiom_sort_key
from .reasoner import Reasoner

BACKENDS = ("kge", "fused", "llm")


@dataclass(frozen=True)
class AblationSpec:
    use_ontology: bool = True
    use_structure: bool = True
    fraction: float = 1.0
    backend: str = "fused"
    name: str = ""

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError("ontology fraction must lie in [0, 1]")

    @property
    def label(self):
        if self.name:
            return self.name
        parts = [self.backend]
        if not self.use_structure:
            parts.append("w/o structure")
        if not self.use_ontology:
            parts.append("w/o ontology")
        if self.fraction < 1.0:
            parts.append(f"onto={self.fraction:g}")
        return " ".join(parts)

    @classmethod
    def from_dict(cls, d: dict) -> "AblationSpec":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown ablation fields: {', '.join(sorted(extra))}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "AblationSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Artifacts:
    """Everything a backend may need.  Missing pieces are reported by name."""

    table: object = None
    thresholds: object = None
    fusion_train: list | None = None
    fusion_valid: list | None = None
    test: list | None = None
    fusion_config: FusionConfig = field(default_factory=FusionConfig)
    endpoint: object = None
    descriptions: object = None
    templates: dict | None = None
    instruction: str | None = None


_STEPS = {
    "table": "train-kge",
    "thresholds": "tune-thresholds",
    "fusion_train": "train-fusion (labelled fusion training set)",
    "fusion_valid": "train-fusion (labelled fusion validation set)",
    "test": "ingest (labelled test set)",
    "endpoint": "an endpoint config for the llm backend",
}


def _require(artifacts, *names):
    for n in names:
        if getattr(artifacts, n) is None:
            raise ArtifactMissingError(f"missing {n}: run {_STEPS[n]} first")


def sample_fraction(ontology: Ontology, fraction: float, seed: int) -> Ontology:
    """Keep ``round(fraction * n)`` axioms chosen by a seeded permutation.

    The permutation depends only on ``seed`` and the axiom set, so for one
    seed a larger fraction always keeps a superset of a smaller one.
    """
    axioms = sorted(ontology.axioms, key=axiom_sort_key)
    order = np.random.default_rng(seed).permutation(len(axioms))
    k = int(round(fraction * len(axioms)))
    return Ontology([axioms[i] for i in sorted(order[:k])])


@dataclass
class AblationReport:
    spec: AblationSpec
    seeds: list
    per_seed: list  # Metrics

    def mean(self) -> dict:
        out = {"accuracy": float(np.mean([m.accuracy for m in self.per_seed]))}
        for key in ("precision", "recall", "f1"):
            val, undefined = mean_defined([getattr(m, key) for m in self.per_seed])
            out[key] = val
            out[f"{key}_undefined"] = undefined
        return out

    def record(self) -> dict:
        return {**asdict(self.spec), "name": self.spec.label, "seeds": " ".join(map(str, self.seeds)), **self.mean()}


def _predict(graph, ontology, spec, seed, art) -> list:
    triples = [lt.triple for lt in art.test]
    if spec.backend == "kge":
        _require(art, "table", "thresholds")
        return [bool(x) for x in classify_many(art.table, art.thresholds, triples)]
    onto = sample_fraction(ontology, spec.fraction, seed) if ontology is not None else Ontology([])
    if spec.backend == "fused":
        _require(art, "table", "thresholds", "fusion_train", "fusion_valid")
        reasoner = Reasoner(graph, onto) if spec.use_ontology else None
        cfg = replace(art.fusion_config, seed=seed)
        res = train_fusion(graph, art.table, reasoner, art.fusion_train, art.fusion_valid, cfg,
                           thresholds=art.thresholds, use_ontology=spec.use_ontology,
                           use_structure=spec.use_structure)
        return [bool(p >= 0.5) for p in predict_many(res, art.table, reasoner, art.thresholds, triples)]
    _require(art, "endpoint")
    return _predict_llm(graph, onto, spec, art)


def _predict_llm(graph, onto, spec, art):
    from .llm import classify_many_with_llm
    from .verbalizer import DEFAULT_INSTRUCTION, build_prompt, select_relevant

    bundles = []
    closure = onto.closure
    for lt in art.test:
        sym = graph.to_symbols(lt.triple)
        axioms = select_relevant(onto, closure, sym) if spec.use_ontology else []
        bundles.append(build_prompt(art.instruction or DEFAULT_INSTRUCTION, sym, art.descriptions,
                                    axioms, art.templates))
    return [a.label.as_bool() for a in classify_many_with_llm(art.endpoint, bundles)]


def run_ablation(graph, ontology, spec: AblationSpec, seeds, artifacts: Artifacts) -> AblationReport:
    """Metrics of one configuration for every seed."""
    _require(artifacts, "test")
    gold = [bool(lt.label) for lt in artifacts.test]
    seeds = list(seeds)
    per_seed = [evaluate(_predict(graph, ontology, spec, s, artifacts), gold) for s in seeds]
    return AblationReport(spec, seeds, per_seed)


def fraction_sweep(graph, ontology, fractions, seeds, artifacts: Artifacts, backend="fused") -> list[dict]:
    """One row per ontology fraction with paired with/without-ontology columns."""
    without = run_ablation(graph, ontology, AblationSpec(use_ontology=False, backend=backend), seeds, artifacts).mean()
    rows = []
    for f in fractions:
        with_ = run_ablation(graph, ontology, AblationSpec(fraction=float(f), backend=backend), seeds, artifacts).mean()
        rows.append({
            "fraction": float(f),
            "acc_with": with_["accuracy"], "acc_without": without["accuracy"],
            "f1_with": with_["f1"], "f1_without": without["f1"],
        })
    return rows


def standard_specs(backend="fused") -> list[AblationSpec]:
    """Full model and the three ablations of structure and ontology."""
    return [
        AblationSpec(backend=backend, name="full"),
        AblationSpec(use_ontology=False, backend=backend, name="w/o ontology"),
        AblationSpec(use_structure=False, backend=backend, name="w/o structure"),
        AblationSpec(use_ontology=False, use_structure=False, backend=backend, name="w/o structure & ontology"),
    ]
