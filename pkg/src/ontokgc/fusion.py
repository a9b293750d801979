"""Linear prefix adapter over frozen embeddings and a logistic decoder that
fuses the prefix with the symbolic verdict and the embedding score.

The decoder stands in for a language model: its input is the projected
prefix, a one-hot of the reasoner verdict and the embedding score centred
on the relation threshold.  Training minimises ``gamma * BCE`` by plain
mini-batch gradient descent on the adapter and decoder parameters.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatchError, TrainingError, ValidationError
from .kge.model import EmbeddingTable
from .reasoner import Reasoner, Verdict, check_domain_range
from .verbalizer import select_relevant

N_VERDICT = 3


@dataclass(frozen=True)
class FusionConfig:
    lr: float = 0.1
    epochs: int = 100
    batch_size: int = 128
    gamma: float = 1.0
    seed: int = 0
    d_token: int = 64

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.lr <= 0 or self.epochs <= 0 or self.batch_size <= 0 or self.d_token <= 0:
            raise ConfigError("lr, epochs, batch_size and d_token must be positive")


@dataclass
class AdapterWeights:
    W: np.ndarray  # (d_token, 3 * 2 * d_e)
    b: np.ndarray  # (d_token,)
    d_e: int
    table_fingerprint: str
    seed: int = 0

    @property
    def d_token(self):
        return self.W.shape[0]


@dataclass
class ToyDecoder:
    u: np.ndarray  # (d_token + 4,)
    c: float = 0.0
    score_scale: float = 1.0
    use_ontology: bool = True
    use_structure: bool = True
    noise_seed: int = 0

    def probability(self, features):
        return _sigmoid(features @ self.u + self.c)


@dataclass
class FusionResult:
    weights: AdapterWeights
    decoder: ToyDecoder
    trace: list[dict] = field(default_factory=list)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def triple_input(table: EmbeddingTable, triples) -> np.ndarray:
    """Rows ``v_h ⊕ v_r ⊕ v_t`` of real embedding views, shape ``(n, 6 d_e)``."""
    arr = np.asarray([tuple(t) for t in triples], dtype=np.int64).reshape(-1, 3)
    return np.concatenate([table.entity[arr[:, 0]], table.relation_flat(arr[:, 1]),
                           table.entity[arr[:, 2]]], axis=1)


def check_binding(weights: AdapterWeights, table: EmbeddingTable):
    fp = table.fingerprint()
    if weights.d_e != table.dim or weights.table_fingerprint != fp:
        raise DimensionMismatchError(
            f"adapter bound to table {weights.table_fingerprint[:16]} (d_e={weights.d_e}), "
            f"got table {fp[:16]} (d_e={table.dim})"
        )


def project_prefix(weights: AdapterWeights, table: EmbeddingTable, triple) -> np.ndarray:
    """``W (v_h ⊕ v_r ⊕ v_t) + b`` for one triple."""
    check_binding(weights, table)
    return weights.W @ triple_input(table, [triple])[0] + weights.b


def random_prefix(triple, d_token, seed) -> np.ndarray:
    """Seeded noise prefix used when structure is ablated; depends only on (seed, triple)."""
    rng = np.random.default_rng([int(seed), *map(int, triple)])
    return rng.standard_normal(d_token)


def init_fusion(table: EmbeddingTable, config: FusionConfig):
    rng = np.random.default_rng(config.seed)
    in_dim = 6 * table.dim
    W = rng.normal(0.0, 1.0 / math.sqrt(in_dim), size=(config.d_token, in_dim))
    b = np.zeros(config.d_token)
    u = rng.normal(0.0, 1.0 / math.sqrt(config.d_token + 4), size=config.d_token + N_VERDICT + 1)
    weights = AdapterWeights(W, b, table.dim, table.fingerprint(), config.seed)
    return weights, u, 0.0


@dataclass
class FeatureBlock:
    """Decoder inputs for a set of triples, before the adapter is applied."""

    x: np.ndarray  # adapter input, (n, 6 d_e)
    extra: np.ndarray  # verdict one-hot ⊕ normalised score, (n, 4)
    noise: np.ndarray | None = None  # replacement prefixes when structure is ablated


def build_features(table, triples, verdicts, thresholds=None, score_scale=1.0,
                   use_ontology=True, use_structure=True, noise_seed=0, d_token=64) -> FeatureBlock:
    arr = np.asarray([tuple(t) for t in triples], dtype=np.int64).reshape(-1, 3)
    x = triple_input(table, arr)
    n = len(arr)
    extra = np.zeros((n, N_VERDICT + 1))
    if use_ontology:
        extra[:, :N_VERDICT] = [v.one_hot() for v in verdicts]
    if use_structure:
        scores = table.scores(arr)
        cuts = np.array([thresholds.threshold(r) for r in arr[:, 1]]) if thresholds is not None else 0.0
        extra[:, N_VERDICT] = (scores - cuts) / score_scale
        noise = None
    else:
        noise = np.stack([random_prefix(t, d_token, noise_seed) for t in arr]) if n else np.zeros((0, d_token))
    return FeatureBlock(x, extra, noise)


def forward(W, b, u, c, block: FeatureBlock):
    prefix = block.noise if block.noise is not None else block.x @ W.T + b
    feats = np.concatenate([prefix, block.extra], axis=1)
    return feats, _sigmoid(feats @ u + c)


def fusion_loss(W, b, u, c, block: FeatureBlock, labels, gamma=1.0, grad=False):
    """``gamma`` times mean binary cross-entropy; optionally with gradients
    ``(dW, db, du, dc)``."""
    y = np.asarray(labels, dtype=float)
    feats, p = forward(W, b, u, c, block)
    z = feats @ u + c
    # BCE from logits: log(1 + e^z) - y z
    loss = gamma * float(np.mean(np.logaddexp(0.0, z) - y * z))
    if not grad:
        return loss
    n = len(y)
    dz = gamma * (p - y) / n
    du = feats.T @ dz
    dc = float(dz.sum())
    T = W.shape[0]
    if block.noise is None:
        dprefix_sum_x = dz @ block.x
        dW = np.outer(u[:T], dprefix_sum_x)
        db = u[:T] * dz.sum()
    else:
        dW = np.zeros_like(W)
        db = np.zeros_like(b)
    return loss, dW, db, du, dc


def _verdicts_for(reasoner, table, triples, use_ontology):
    if not use_ontology or reasoner is None:
        return [Verdict.satisfied()] * len(triples)
    out = []
    for t in triples:
        sym = (table.entity_symbols[t[0]], table.relation_symbols[t[1]], table.entity_symbols[t[2]])
        out.append(reasoner.verdict(sym))
    return out


def _as_reasoner(ontology, graph):
    if ontology is None or isinstance(ontology, Reasoner):
        return ontology
    return Reasoner(graph if graph is not None else set(), ontology)


def train_fusion(graph, table: EmbeddingTable, ontology, train_set, valid_set, config: FusionConfig,
                 thresholds=None, use_ontology=True, use_structure=True) -> FusionResult:
    """Fit adapter and decoder on labelled triples; the table is read only."""
    for name, data in (("train", train_set), ("valid", valid_set)):
        labels = {bool(lt.label) for lt in data}
        if labels != {True, False}:
            raise ValidationError(f"{name} set must contain both labels")
    if not table.entity_symbols:
        raise ValidationError("embedding table carries no symbol table")
    reasoner = _as_reasoner(ontology, graph)
    before = table.fingerprint()
    weights, u, c = init_fusion(table, config)
    tr_triples = [lt.triple for lt in train_set]
    va_triples = [lt.triple for lt in valid_set]
    y_tr = np.array([lt.label for lt in train_set], dtype=float)
    y_va = np.array([lt.label for lt in valid_set], dtype=float)
    if use_structure:
        sc = table.scores(np.asarray([tuple(t) for t in tr_triples]))
        scale = float(np.std(sc)) or 1.0
    else:
        scale = 1.0
    noise_seed = config.seed + 104729
    common = dict(thresholds=thresholds, score_scale=scale, use_ontology=use_ontology,
                  use_structure=use_structure, noise_seed=noise_seed, d_token=config.d_token)
    tr = build_features(table, tr_triples, _verdicts_for(reasoner, table, tr_triples, use_ontology), **common)
    va = build_features(table, va_triples, _verdicts_for(reasoner, table, va_triples, use_ontology), **common)
    W, b = weights.W, weights.b
    rng = np.random.default_rng(config.seed + 1)
    n = len(y_tr)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            sub = FeatureBlock(tr.x[idx], tr.extra[idx], None if tr.noise is None else tr.noise[idx])
            loss, dW, db, du, dc = fusion_loss(W, b, u, c, sub, y_tr[idx], config.gamma, grad=True)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite fusion loss at epoch {epoch}")
            W -= config.lr * dW
            b -= config.lr * db
            u -= config.lr * du
            c -= config.lr * dc
            total += loss * len(idx)
        _, p_va = forward(W, b, u, c, va)
        trace.append({"epoch": epoch, "train_loss": total / n,
                      "valid_accuracy": float(np.mean((p_va >= 0.5) == (y_va > 0.5)))})
    if table.fingerprint() != before:
        raise RuntimeError("embedding table changed during fusion training")
    decoder = ToyDecoder(u, float(c), scale, use_ontology, use_structure, noise_seed)
    return FusionResult(weights, decoder, trace)


@dataclass
class FusedPrediction:
    label: bool
    probability: float
    explanation: dict


def classify_fused(weights: AdapterWeights, decoder: ToyDecoder, table: EmbeddingTable, ontology, closure,
                   thresholds, triple, graph=None) -> FusedPrediction:
    """Decoder probability ``>= 0.5`` means True.

    ``ontology`` may be a :class:`Reasoner` (full verdicts) or an
    :class:`Ontology`, in which case facts come from ``graph`` when given and
    only domain/range is checked otherwise.
    """
    check_binding(weights, table)
    triple = tuple(int(x) for x in triple)
    table._check_ids(*(np.array([x]) for x in triple))
    sym = (table.entity_symbols[triple[0]], table.relation_symbols[triple[1]], table.entity_symbols[triple[2]])
    if ontology is None:
        verdict, onto = Verdict.satisfied(), None
    elif isinstance(ontology, Reasoner):
        verdict, onto = ontology.verdict(sym), ontology.ontology
    elif graph is not None:
        r = Reasoner(graph, ontology)
        verdict, onto = r.verdict(sym), ontology
    else:
        verdict, onto = check_domain_range(ontology, closure or ontology.closure, sym), ontology
    block = build_features(table, [triple], [verdict], thresholds, decoder.score_scale, decoder.use_ontology,
                           decoder.use_structure, decoder.noise_seed, weights.d_token)
    _, p = forward(weights.W, weights.b, decoder.u, decoder.c, block)
    prob = float(p[0])
    selected = select_relevant(onto, onto.closure, sym) if (onto is not None and decoder.use_ontology) else []
    explanation = {
        "triple": list(sym),
        "verdict": verdict.status.value,
        "violated": [ax.line() for ax in verdict.violated],
        "selected_axioms": [ax.line() for ax in selected],
        "kge_score": float(table.scores([triple])[0]),
        "probability": prob,
    }
    return FusedPrediction(prob >= 0.5, prob, explanation)


def predict_many(result: FusionResult, table, reasoner, thresholds, triples) -> np.ndarray:
    """Batch probabilities for ``triples`` (ids)."""
    check_binding(result.weights, table)
    dec = result.decoder
    triples = [tuple(t) for t in triples]
    verdicts = _verdicts_for(reasoner, table, triples, dec.use_ontology)
    block = build_features(table, triples, verdicts, thresholds, dec.score_scale, dec.use_ontology,
                           dec.use_structure, dec.noise_seed, result.weights.d_token)
    _, p = forward(result.weights.W, result.weights.b, dec.u, dec.c, block)
    return p


# -- checkpoint -------------------------------------------------------------------

MAGIC = b"OKAD"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIQBBQ32sdd")


def save_fusion(result: FusionResult, path) -> None:
    w, d = result.weights, result.decoder
    flags = (1 if d.use_ontology else 0) | (2 if d.use_structure else 0)
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, w.d_e, w.d_token, w.W.shape[1], w.seed, flags, 0,
                              d.noise_seed, bytes.fromhex(w.table_fingerprint), d.c, d.score_scale))
        for arr in (w.W, w.b, d.u):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_fusion(path) -> FusionResult:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"{path}: truncated adapter checkpoint")
    magic, version, d_e, d_token, in_dim, seed, flags, _, noise_seed, fp, c, scale = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValidationError(f"{path}: not an adapter checkpoint")
    off = _HEADER.size
    W = np.frombuffer(data, "<f8", d_token * in_dim, off).reshape(d_token, in_dim).copy()
    off += W.nbytes
    b = np.frombuffer(data, "<f8", d_token, off).copy()
    off += b.nbytes
    u = np.frombuffer(data, "<f8", d_token + N_VERDICT + 1, off).copy()
    weights = AdapterWeights(W, b, d_e, fp.hex(), seed)
    decoder = ToyDecoder(u, c, scale, bool(flags & 1), bool(flags & 2), noise_seed)
    return FusionResult(weights, decoder)


__all__ = [
    "AdapterWeights",
    "FusionConfig",
    "FusionResult",
    "ToyDecoder",
    "classify_fused",
    "fusion_loss",
    "load_fusion",
    "predict_many",
    "project_prefix",
    "save_fusion",
    "train_fusion",
]
