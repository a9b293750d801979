"""Triple-classification metrics and report formatting."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    abstained: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    @property
    def precision(self) -> float | None:
        """``None`` when nothing was predicted positive."""
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def recall(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def f1(self) -> float | None:
        p, r = self.precision, self.recall
        if p is None or r is None or p + r == 0:
            return None
        return 2 * p * r / (p + r)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(accuracy=self.accuracy, precision=self.precision, recall=self.recall, f1=self.f1)
        return d


def evaluate(predictions, gold) -> Metrics:
    """Confusion counts from boolean predictions.

    A ``None`` prediction is an abstention and is scored as wrong: it lands
    in FN when the gold label is true and in FP otherwise.
    """
    predictions = list(predictions)
    gold = list(gold)
    if len(predictions) != len(gold):
        raise ValidationError(f"{len(predictions)} predictions for {len(gold)} gold labels")
    if not gold:
        raise ValidationError("cannot evaluate an empty prediction set")
    tp = fp = fn = tn = ab = 0
    for p, g in zip(predictions, gold):
        g = bool(g)
        if p is None:
            ab += 1
            p = not g
        p = bool(p)
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return Metrics(tp, fp, fn, tn, ab)


def pct(x) -> str:
    return "n/a" if x is None else f"{100 * x:.2f}"


def mean_defined(values):
    """Mean over defined values plus the count of undefined ones."""
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return (sum(vals) / len(vals) if vals else None), len(values) - len(vals)


def format_row(name: str, m: Metrics) -> str:
    """``name | Acc | P | F1`` in percent with two decimals."""
    return f"{name:<24} {pct(m.accuracy):>7} {pct(m.precision):>7} {pct(m.f1):>7}"


def format_table(rows) -> str:
    """``rows`` is a list of ``(name, Metrics)``."""
    head = f"{'model':<24} {'Acc':>7} {'P':>7} {'F1':>7}"
    return "\n".join([head] + [format_row(n, m) for n, m in rows])


def to_csv(records: list[dict], columns=None) -> str:
    if not records:
        return ""
    columns = columns or list(records[0])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerow({k: ("n/a" if rec.get(k) is None else rec.get(k)) for k in columns})
    return buf.getvalue()
