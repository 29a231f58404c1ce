"""Fine-tuning-free evaluation through verbalizer tokens.

A test instance is projected with the session's PCA model (never refit),
unit-normalized, and scored against each class's verbalizer tokens: the class
logit is the best (or, behind a flag, the mean) dot product with that class's
tokens, and predictions are the softmax argmax.  Classes without any
verbalizer token cannot be predicted; their instances are skipped and
reported, never silently counted wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embed_io import EmbeddingSet, SetKind
from .errors import DegenerateRow, MissingClassToken, UnknownGoldLabel
from .geometry import DEGENERATE_NORM, PcaModel, transform
from .selection import VerbalizerSet, canonical_label

AGG_MAX = "max"
AGG_MEAN = "mean"

PROXY_NOTE = "proxy metric: verbalizer-token similarity only, no fine-tuning"


@dataclass(eq=False)
class EvalReport:
    accuracy: float
    per_class: dict[str, dict[str, int]]
    confusion: list[list[int]]    # rows gold, columns predicted, label_space order
    n_evaluated: int
    n_skipped: int
    label_space: tuple[str, ...]
    empty_warning: bool = False
    note: str = PROXY_NOTE

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {c: dict(v) for c, v in self.per_class.items()},
            "confusion": [list(r) for r in self.confusion],
            "n_evaluated": self.n_evaluated,
            "n_skipped": self.n_skipped,
            "label_space": list(self.label_space),
            "empty_warning": self.empty_warning,
            "note": self.note,
        }


def class_probabilities(instance_vector, verbalizers: VerbalizerSet, classes,
                        aggregation: str = AGG_MAX) -> dict[str, float]:
    """Softmax over per-class verbalizer logits, in the given class order."""
    if aggregation not in (AGG_MAX, AGG_MEAN):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    classes = list(classes)
    by_class = verbalizers.by_class()
    h = np.asarray(instance_vector, dtype=np.float64)

    logits = np.empty(len(classes))
    for j, cls in enumerate(classes):
        entries = by_class.get(cls)
        if not entries:
            raise MissingClassToken(f"class {cls!r} has no verbalizer token")
        dots = np.array([float(e.vector @ h) for e in entries])
        logits[j] = float(dots.max() if aggregation == AGG_MAX else dots.mean())

    shifted = logits - logits.max()
    weights = np.exp(shifted)
    probs = weights / weights.sum()
    return {cls: float(p) for cls, p in zip(classes, probs)}


def evaluate(test_instances: EmbeddingSet, gold: dict[str, str], verbalizers: VerbalizerSet,
             pca_model: PcaModel, label_space, aggregation: str = AGG_MAX) -> EvalReport:
    if test_instances.kind != SetKind.INSTANCE:
        raise ValueError("evaluate expects an instance embedding set")
    label_space = tuple(canonical_label(c) for c in label_space)
    idx_of = {c: i for i, c in enumerate(label_space)}

    gold_canon: dict[str, str] = {}
    for ident in test_instances.ids:
        if ident not in gold:
            raise UnknownGoldLabel(f"no gold label for instance {ident!r}")
        cls = canonical_label(gold[ident])
        if cls not in idx_of:
            raise UnknownGoldLabel(f"gold label {gold[ident]!r} outside the label space")
        gold_canon[ident] = cls

    covered = [c for c in label_space if verbalizers.by_class().get(c)]
    covered_set = set(covered)

    k = len(label_space)
    confusion = [[0] * k for _ in range(k)]
    per_class = {c: {"support": 0, "correct": 0} for c in label_space}
    n_evaluated = 0
    n_skipped = 0
    correct = 0

    if test_instances.count and covered:
        Z = transform(pca_model, test_instances.matrix.astype(np.float64))
        norms = np.linalg.norm(Z, axis=1)
        bad = np.nonzero(norms < DEGENERATE_NORM)[0]
        if bad.size:
            raise DegenerateRow(
                f"test instance {test_instances.ids[int(bad[0])]!r} is degenerate after reduction"
            )
        H = Z / norms[:, None]
    else:
        H = np.zeros((test_instances.count, pca_model.reduced_dim))

    for i, ident in enumerate(test_instances.ids):
        g = gold_canon[ident]
        if g not in covered_set:
            n_skipped += 1
            continue
        probs = class_probabilities(H[i], verbalizers, covered, aggregation)
        # Ties resolve to the earliest class in label-space order.
        pred = max(covered, key=lambda c: (probs[c], -idx_of[c]))
        n_evaluated += 1
        per_class[g]["support"] += 1
        confusion[idx_of[g]][idx_of[pred]] += 1
        if pred == g:
            per_class[g]["correct"] += 1
            correct += 1

    empty = n_evaluated == 0
    return EvalReport(
        accuracy=(correct / n_evaluated) if n_evaluated else 0.0,
        per_class=per_class,
        confusion=confusion,
        n_evaluated=n_evaluated,
        n_skipped=n_skipped,
        label_space=label_space,
        empty_warning=empty,
    )


def render_report(report: EvalReport) -> str:
    """Aligned plain-text table, accuracy as a percentage with 2 decimals."""
    lines = [
        f"accuracy: {100.0 * report.accuracy:.2f}%  "
        f"(evaluated {report.n_evaluated}, skipped {report.n_skipped})"
    ]
    if report.empty_warning:
        lines.append("warning: no instances were evaluated")
    width = max([len("class")] + [len(c) for c in report.label_space])
    lines.append(f"{'class':<{width}}  support  correct  accuracy")
    for cls in report.label_space:
        row = report.per_class[cls]
        pct = 100.0 * row["correct"] / row["support"] if row["support"] else math.nan
        shown = f"{pct:.2f}%" if row["support"] else "-"
        lines.append(f"{cls:<{width}}  {row['support']:>7}  {row['correct']:>7}  {shown:>8}")
    lines.append(f"note: {report.note}")
    return "\n".join(lines) + "\n"
