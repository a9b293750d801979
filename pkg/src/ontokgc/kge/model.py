"""Embedding table, scoring, self-adversarial training and checkpoints."""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, TrainingError, ValidationError
from ..kg import KnowledgeGraph, Split
from .kernels import kernels

SCORERS = ("rotate", "transe")
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 200
    lr: float = 5e-2
    epochs: int = 1000
    batch_size: int = 512
    negatives: int = 32
    margin: float = 6.0
    temperature: float = 1.0
    seed: int = 0
    scorer: str = "rotate"
    init_scale: float | None = None

    def __post_init__(self):
        for name in ("dim", "epochs", "batch_size", "negatives"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("lr", "margin", "temperature"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.scorer not in SCORERS:
            raise ConfigError(f"scorer must be one of {SCORERS}")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown train config keys: {sorted(extra)}")
        return cls(**d)


@dataclass
class EmbeddingTable:
    """Entity rows ``[re | im]`` of width ``2*dim``; relation rows are phases
    (rotate, width ``dim``) or translations (transe, width ``2*dim``)."""

    entity: np.ndarray
    relation: np.ndarray
    scorer: str = "rotate"
    seed: int = 0
    config_fingerprint: str = ""
    entity_symbols: list[str] = field(default_factory=list)
    relation_symbols: list[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.entity.shape[1] // 2

    @property
    def num_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation.shape[0]

    def fingerprint(self) -> str:
        """Content hash over scorer, shapes and parameter bytes."""
        h = hashlib.sha256()
        h.update(self.scorer.encode())
        h.update(struct.pack("<III", self.dim, self.num_entities, self.num_relations))
        h.update(np.ascontiguousarray(self.entity, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.relation, dtype="<f8").tobytes())
        return h.hexdigest()

    def entity_complex(self, idx) -> np.ndarray:
        d = self.dim
        return self.entity[idx, :d] + 1j * self.entity[idx, d:]

    def relation_flat(self, idx) -> np.ndarray:
        """Real feature view of a relation: ``[cos θ | sin θ]`` or the translation."""
        if self.scorer == "rotate":
            ph = self.relation[idx]
            return np.concatenate([np.cos(ph), np.sin(ph)], axis=-1)
        return self.relation[idx]

    def relation_operand(self) -> np.ndarray:
        """Relation array in the layout the distance kernels consume."""
        if self.scorer == "rotate":
            return np.ascontiguousarray(self.relation_flat(slice(None)))
        return self.relation

    def distance(self, h, r, t, backend=None) -> np.ndarray:
        h, r, t = (np.ascontiguousarray(x, dtype=np.int64) for x in (h, r, t))
        self._check_ids(h, r, t)
        dist, _, _ = kernels(self.scorer, backend)
        return dist(self.entity, self.relation_operand(), h, r, t)

    def scores(self, triples, backend=None) -> np.ndarray:
        arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return -self.distance(arr[:, 0], arr[:, 1], arr[:, 2], backend)

    def _check_ids(self, h, r, t):
        for name, ids, n in (("entity", h, self.num_entities), ("relation", r, self.num_relations),
                             ("entity", t, self.num_entities)):
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise KeyError(f"{name} id out of range for embedding table")


def score_triple(table: EmbeddingTable, triple) -> float:
    """Plausibility ``-||h o r - t||`` (rotate) or ``-||h + r - t||`` (transe)."""
    return float(table.scores([tuple(triple)])[0])


def init_table(num_entities, num_relations, config: TrainConfig) -> EmbeddingTable:
    rng = np.random.default_rng(config.seed)
    d = config.dim
    scale = config.init_scale if config.init_scale is not None else (config.margin + 2.0) / d
    ent = rng.uniform(-scale, scale, size=(num_entities, 2 * d))
    if config.scorer == "rotate":
        rel = rng.uniform(0.0, TWO_PI, size=(num_relations, d))
    else:
        rel = rng.uniform(-scale, scale, size=(num_relations, 2 * d))
    return EmbeddingTable(ent, rel, config.scorer, config.seed, config.fingerprint())


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def adversarial_weights(neg_dist, temperature):
    """Softmax over negative scores (``-dist``), row-wise; treated as constants."""
    z = -temperature * neg_dist
    z = z - z.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def corrupt(batch, neg_entities, corrupt_head):
    """Expand ``(B, 3)`` positives into ``(B, k)`` head/tail arrays of negatives."""
    h = batch[:, 0:1]
    t = batch[:, 2:3]
    nh = np.where(corrupt_head, neg_entities, h)
    nt = np.where(corrupt_head, t, neg_entities)
    nr = np.broadcast_to(batch[:, 1:2], nh.shape)
    return nh, nr, nt


def batch_loss(table: EmbeddingTable, batch, neg_h, neg_r, neg_t, config: TrainConfig,
               weights=None, backend=None, grad=False):
    """Mean self-adversarial loss over the batch.

    With ``grad=True`` also returns ``(g_entity, g_relation)`` dense gradient
    arrays, treating the adversarial weights as constants.  ``weights``
    overrides the softmax weights (used by finite-difference checks).
    """
    dist_fn, back_fn, _ = kernels(table.scorer, backend)
    B, k = neg_h.shape
    h, r, t = (np.ascontiguousarray(batch[:, i]) for i in range(3))
    nh, nr, nt = (np.ascontiguousarray(x).reshape(-1) for x in (neg_h, neg_r, neg_t))
    rel = table.relation_operand()
    d_pos = dist_fn(table.entity, rel, h, r, t)
    d_neg = dist_fn(table.entity, rel, nh, nr, nt).reshape(B, k)
    gamma = config.margin
    if weights is None:
        weights = adversarial_weights(d_neg, config.temperature)
    per = -_log_sigmoid(gamma - d_pos) - np.sum(weights * _log_sigmoid(d_neg - gamma), axis=1)
    loss = float(per.mean())
    if not grad:
        return loss
    g_ent = np.zeros_like(table.entity)
    g_rel = np.zeros_like(table.relation)
    coef_pos = _sigmoid(d_pos - gamma) / B
    coef_neg = (-weights * _sigmoid(gamma - d_neg) / B).reshape(-1)
    back_fn(table.entity, rel, h, r, t, d_pos, coef_pos, g_ent, g_rel)
    back_fn(table.entity, rel, nh, nr, nt, d_neg.reshape(-1), coef_neg, g_ent, g_rel)
    return loss, g_ent, g_rel


@dataclass
class TrainResult:
    table: EmbeddingTable
    loss_trace: list[float]


def train(graph: KnowledgeGraph, config: TrainConfig, backend=None, log=None) -> TrainResult:
    """Fit embeddings on the train split with Adagrad.

    Negatives are uniform head or tail corruptions (unfiltered), ``config.negatives``
    per positive, redrawn every batch.
    """
    triples = graph.array(Split.TRAIN)
    if len(triples) == 0:
        raise ValidationError("train split is empty")
    table = init_table(graph.num_entities, graph.num_relations, config)
    table.entity_symbols = graph.entities.symbols
    table.relation_symbols = graph.relations.symbols
    _, _, adagrad = kernels(config.scorer, backend)
    rng = np.random.default_rng(config.seed + 1)
    acc_ent = np.zeros_like(table.entity)
    acc_rel = np.zeros_like(table.relation)
    n_ent = graph.num_entities
    n = len(triples)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for bno, start in enumerate(range(0, n, config.batch_size)):
            batch = triples[order[start:start + config.batch_size]]
            B = len(batch)
            neg_e = rng.integers(n_ent, size=(B, config.negatives))
            head_mask = rng.random((B, config.negatives)) < 0.5
            nh, nr, nt = corrupt(batch, neg_e, head_mask)
            loss, g_ent, g_rel = batch_loss(table, batch, nh, nr, nt, config, backend=backend, grad=True)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bno}")
            ent_rows = np.unique(np.concatenate([batch[:, 0], batch[:, 2], neg_e.ravel()]))
            rel_rows = np.unique(batch[:, 1])
            adagrad(table.entity, acc_ent, g_ent, ent_rows, config.lr, 1e-10)
            adagrad(table.relation, acc_rel, g_rel, rel_rows, config.lr, 1e-10)
            total += loss * B
        if table.scorer == "rotate":
            np.mod(table.relation, TWO_PI, out=table.relation)
        mean = total / n
        trace.append(mean)
        if log is not None:
            log(epoch, mean)
    return TrainResult(table, trace)


# -- checkpoints ----------------------------------------------------------------

MAGIC = b"OKGE"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIQB32s")
_SCORER_TAG = {"rotate": 0, "transe": 1}
_TAG_SCORER = {v: k for k, v in _SCORER_TAG.items()}


def save_table(table: EmbeddingTable, path, loss_trace=None) -> None:
    """Write the little-endian checkpoint and, if given, a JSON loss sidecar."""
    path = Path(path)
    fp = bytes.fromhex(table.config_fingerprint) if table.config_fingerprint else b"\0" * 32
    symbols = json.dumps({"entities": table.entity_symbols, "relations": table.relation_symbols}).encode()
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, table.dim, table.num_entities, table.num_relations,
                              table.seed, _SCORER_TAG[table.scorer], fp))
        fh.write(np.ascontiguousarray(table.entity, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(table.relation, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", len(symbols)))
        fh.write(symbols)
    if loss_trace is not None:
        sidecar = path.with_name(path.name + ".metrics.json")
        sidecar.write_text(json.dumps({"loss_trace": list(loss_trace), "fingerprint": table.fingerprint()},
                                      indent=1))


def load_table(path) -> EmbeddingTable:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"{path}: truncated embedding checkpoint")
    magic, version, d, ne, nr, seed, tag, fp = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValidationError(f"{path}: not an embedding checkpoint (v{VERSION})")
    scorer = _TAG_SCORER[tag]
    off = _HEADER.size
    ent = np.frombuffer(data, dtype="<f8", count=ne * 2 * d, offset=off).reshape(ne, 2 * d).copy()
    off += ent.nbytes
    rw = d if scorer == "rotate" else 2 * d
    rel = np.frombuffer(data, dtype="<f8", count=nr * rw, offset=off).reshape(nr, rw).copy()
    off += rel.nbytes
    (n_sym,) = struct.unpack_from("<Q", data, off)
    syms = json.loads(data[off + 8: off + 8 + n_sym])
    return EmbeddingTable(ent, rel, scorer, seed, fp.hex(), syms["entities"], syms["relations"])


def check_table_matches(table: EmbeddingTable, graph: KnowledgeGraph) -> None:
    if table.entity_symbols and table.entity_symbols != graph.entities.symbols:
        raise ValidationError("embedding table entity symbols differ from the graph")
    if table.relation_symbols and table.relation_symbols != graph.relations.symbols:
        raise ValidationError("embedding table relation symbols differ from the graph")
