"""Metrics, the majority baseline, and role-level reports.

Macro scores are unweighted means over the four roles. A per-role
precision or recall with a zero denominator counts as 0 (no exclusion);
F1 is 0 when P + R = 0. Sequence scores are token-level: BIO tags map to
their role, O counts toward accuracy but is excluded from macro averaging.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from rolefuse.data_model import ROLES, Role, RoleCounts

O_LABEL = "O"


@dataclass(frozen=True)
class EvalReport:
    """Confusion matrix plus derived scores.

    ``labels`` is the axis ordering of ``confusion`` (gold rows, predicted
    columns): the four roles for classification, the four roles plus O for
    token-level sequence scoring. Macro scores always average over the four
    roles only.
    """

    labels: tuple[str, ...]
    confusion: np.ndarray
    accuracy: float
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    macro_precision: float
    macro_recall: float
    macro_f1: float

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "confusion": self.confusion.tolist(),
            "total": self.total,
            "accuracy": self.accuracy,
            "per_role": {
                lab: {
                    "precision": self.precision[lab],
                    "recall": self.recall[lab],
                    "f1": self.f1[lab],
                }
                for lab in self.labels
                if lab != O_LABEL
            },
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_table(self) -> str:
        """Aligned text table in Acc / P / R / F1 column order, 2 decimals."""
        lines = [f"{'':10s} {'Acc':>6s} {'P':>6s} {'R':>6s} {'F1':>6s}"]
        lines.append(
            f"{'overall':10s} {self.accuracy:6.2f} {self.macro_precision:6.2f} "
            f"{self.macro_recall:6.2f} {self.macro_f1:6.2f}"
        )
        for lab in self.labels:
            if lab == O_LABEL:
                continue
            lines.append(
                f"{lab.lower():10s} {'':6s} {self.precision[lab]:6.2f} "
                f"{self.recall[lab]:6.2f} {self.f1[lab]:6.2f}"
            )
        return "\n".join(lines)


def _report_from_confusion(labels: tuple[str, ...], confusion: np.ndarray) -> EvalReport:
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    precision: dict[str, float] = {}
    recall: dict[str, float] = {}
    f1: dict[str, float] = {}
    for i, lab in enumerate(labels):
        tp = confusion[i, i]
        pred = confusion[:, i].sum()
        gold = confusion[i, :].sum()
        p = float(tp / pred) if pred else 0.0
        r = float(tp / gold) if gold else 0.0
        precision[lab] = p
        recall[lab] = r
        f1[lab] = 2 * p * r / (p + r) if (p + r) else 0.0
    role_labels = [r.name for r in ROLES]
    return EvalReport(
        labels=labels,
        confusion=confusion,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=sum(precision[l] for l in role_labels) / len(role_labels),
        macro_recall=sum(recall[l] for l in role_labels) / len(role_labels),
        macro_f1=sum(f1[l] for l in role_labels) / len(role_labels),
    )


def evaluate(gold: Sequence[Role], pred: Sequence[Role]) -> EvalReport:
    """Score a classification run; gold and pred must align."""
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} pred")
    if not gold:
        raise ValueError("empty evaluation input")
    labels = tuple(r.name for r in ROLES)
    confusion = np.zeros((4, 4), dtype=np.int64)
    for g, p in zip(gold, pred):
        confusion[g.index, p.index] += 1
    return _report_from_confusion(labels, confusion)


def sequence_evaluate(
    gold_seqs: Sequence[Sequence[str]], pred_seqs: Sequence[Sequence[str]]
) -> EvalReport:
    """Token-level scores over role tags; O included in accuracy only."""
    if len(gold_seqs) != len(pred_seqs):
        raise ValueError(
            f"sequence count mismatch: {len(gold_seqs)} gold vs {len(pred_seqs)} pred"
        )
    labels = tuple([r.name for r in ROLES] + [O_LABEL])
    index = {lab: i for i, lab in enumerate(labels)}
    confusion = np.zeros((5, 5), dtype=np.int64)
    for k, (gold, pred) in enumerate(zip(gold_seqs, pred_seqs)):
        if len(gold) != len(pred):
            raise ValueError(
                f"sequence {k}: length mismatch {len(gold)} vs {len(pred)}"
            )
        for g, p in zip(gold, pred):
            confusion[index[_tag_to_role_label(g)], index[_tag_to_role_label(p)]] += 1
    return _report_from_confusion(labels, confusion)


def _tag_to_role_label(tag: str) -> str:
    if tag == O_LABEL:
        return O_LABEL
    if tag.startswith(("B-", "I-")):
        return tag[2:]
    raise ValueError(f"unknown tag {tag!r}")


@dataclass(frozen=True)
class MajorityBaseline:
    """Constant predictor: the most frequent training role."""

    role: Role

    def __call__(self, *_args, **_kwargs) -> Role:
        return self.role

    def predict(self, n: int) -> list[Role]:
        return [self.role] * n


def majority_baseline(train_counts: RoleCounts) -> MajorityBaseline:
    if train_counts.total <= 0:
        raise ValueError("majority baseline needs a nonempty training count")
    best = max(ROLES, key=lambda r: (train_counts[r], -r.index))
    return MajorityBaseline(best)
