"""Precision, recall and F1 for relation predictions.

The headline number is micro-averaged F1 with confusion counts pooled over
the non-negative classes only; the dominant negative class would otherwise
swamp the average.  For a binary schema this equals the positive-class F1.
"""

from __future__ import annotations

import dataclasses

from .corpus import LabelSchema


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ratio(num: int, denom: int) -> float:
    return num / denom if denom else 0.0


@dataclasses.dataclass(frozen=True)
class Metrics:
    """Per-class confusion counts and scores plus the pooled micro scores."""

    tp: tuple
    fp: tuple
    fn: tuple
    precision: tuple
    recall: tuple
    f1: tuple
    micro_precision: float
    micro_recall: float
    micro_f1: float

    def summary(self, schema: LabelSchema = None) -> str:
        lines = [
            f"micro over non-negative classes: "
            f"P={self.micro_precision:.4f} R={self.micro_recall:.4f} F1={self.micro_f1:.4f}"
        ]
        for c in range(len(self.f1)):
            name = schema.name(c) if schema else f"class {c}"
            lines.append(
                f"  {name}: P={self.precision[c]:.4f} R={self.recall[c]:.4f} "
                f"F1={self.f1[c]:.4f} (tp={self.tp[c]} fp={self.fp[c]} fn={self.fn[c]})"
            )
        return "\n".join(lines)


def evaluate(predictions, gold, schema: LabelSchema) -> Metrics:
    """Score predicted class indices against gold ones."""
    predictions = list(predictions)
    gold = list(gold)
    if len(predictions) != len(gold):
        raise ValueError(
            f"{len(predictions)} predictions against {len(gold)} gold labels"
        )
    k = len(schema)
    tp = [0] * k
    fp = [0] * k
    fn = [0] * k
    for p, g in zip(predictions, gold):
        if not (0 <= p < k and 0 <= g < k):
            raise ValueError(f"class index out of range: pred {p}, gold {g}")
        if p == g:
            tp[p] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    precision = tuple(_ratio(tp[c], tp[c] + fp[c]) for c in range(k))
    recall = tuple(_ratio(tp[c], tp[c] + fn[c]) for c in range(k))
    f1 = tuple(f1_score(precision[c], recall[c]) for c in range(k))
    pos = schema.positive_indices()
    tp_pool = sum(tp[c] for c in pos)
    fp_pool = sum(fp[c] for c in pos)
    fn_pool = sum(fn[c] for c in pos)
    micro_p = _ratio(tp_pool, tp_pool + fp_pool)
    micro_r = _ratio(tp_pool, tp_pool + fn_pool)
    return Metrics(
        tp=tuple(tp), fp=tuple(fp), fn=tuple(fn),
        precision=precision, recall=recall, f1=f1,
        micro_precision=micro_p, micro_recall=micro_r,
        micro_f1=f1_score(micro_p, micro_r),
    )
