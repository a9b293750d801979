"""Per-relation decision thresholds tuned on labelled validation triples."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError


@dataclass
class ThresholdTable:
    global_threshold: float
    per_relation: dict[int, float] = field(default_factory=dict)

    def threshold(self, relation: int) -> float:
        return self.per_relation.get(int(relation), self.global_threshold)

    def to_json(self, relation_symbols=None) -> str:
        def key(r):
            return relation_symbols[r] if relation_symbols is not None else str(r)

        return json.dumps({
            "global": self.global_threshold,
            "per_relation": {key(r): v for r, v in sorted(self.per_relation.items())},
        }, indent=1)

    @classmethod
    def from_json(cls, text, relation_ids=None):
        d = json.loads(text)

        def rid(k):
            return relation_ids[k] if relation_ids is not None else int(k)

        return cls(float(d["global"]), {rid(k): float(v) for k, v in d["per_relation"].items()})

    def save(self, path, relation_symbols=None):
        Path(path).write_text(self.to_json(relation_symbols))


def best_threshold(scores, labels) -> tuple[float, float]:
    """Accuracy-maximising cut among midpoints of adjacent sorted scores.

    A triple is predicted positive when ``score >= cut``.  Ties in accuracy
    go to the larger cut.  Returns ``(cut, accuracy)``.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.size == 0:
        raise ValidationError("cannot tune a threshold on no examples")
    s = np.sort(scores)
    cands = s[:1] if s.size == 1 else 0.5 * (s[:-1] + s[1:])
    pos = np.sort(scores[labels])
    neg = np.sort(scores[~labels])
    # positives at or above the cut are right, negatives strictly below are right
    tp = pos.size - np.searchsorted(pos, cands, side="left")
    tn = np.searchsorted(neg, cands, side="left")
    acc = (tp + tn) / scores.size
    best = acc.max()
    cut = cands[acc == best].max()
    return float(cut), float(best)


def tune_thresholds(table, labeled) -> ThresholdTable:
    """Fit one cut per relation seen in ``labeled`` plus a pooled global cut."""
    if not labeled:
        raise ValidationError("validation set is empty")
    arr = np.asarray([tuple(lt.triple) for lt in labeled], dtype=np.int64)
    labels = np.asarray([lt.label for lt in labeled], dtype=bool)
    if labels.all() or not labels.any():
        raise ValidationError("validation set needs at least one positive and one negative")
    scores = table.scores(arr)
    global_cut, _ = best_threshold(scores, labels)
    per = {}
    for r in np.unique(arr[:, 1]):
        m = arr[:, 1] == r
        per[int(r)], _ = best_threshold(scores[m], labels[m])
    return ThresholdTable(global_cut, per)


def classify_kge(table, thresholds: ThresholdTable, triple) -> bool:
    from .model import score_triple

    return score_triple(table, triple) >= thresholds.threshold(triple[1])


def classify_many(table, thresholds: ThresholdTable, triples) -> np.ndarray:
    arr = np.asarray([tuple(t) for t in triples], dtype=np.int64).reshape(-1, 3)
    scores = table.scores(arr)
    cuts = np.array([thresholds.threshold(r) for r in arr[:, 1]])
    return scores >= cuts
