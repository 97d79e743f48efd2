from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    """Binary metrics with fake (1) as the positive class.

    ``confusion`` is ((TN, FP), (FN, TP)).  Precision or recall with a zero
    denominator is reported as 0 and flagged.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: tuple
    n_test: int
    precision_undefined: bool = False
    recall_undefined: bool = False

    @property
    def tn(self):
        return self.confusion[0][0]

    @property
    def fp(self):
        return self.confusion[0][1]

    @property
    def fn(self):
        return self.confusion[1][0]

    @property
    def tp(self):
        return self.confusion[1][1]

    def to_dict(self):
        d = asdict(self)
        d["confusion"] = [list(r) for r in self.confusion]
        return d

    def as_text(self):
        lines = [
            f"n_test     {self.n_test}",
            f"accuracy   {self.accuracy:.4f}",
            f"precision  {self.precision:.4f}" + ("  (undefined: no positive predictions)"
                                                  if self.precision_undefined else ""),
            f"recall     {self.recall:.4f}" + ("  (undefined: no positive samples)"
                                               if self.recall_undefined else ""),
            f"f1         {self.f1:.4f}",
            "confusion  pred_real pred_fake",
            f"  real     {self.tn:9d} {self.fp:9d}",
            f"  fake     {self.fn:9d} {self.tp:9d}",
        ]
        return "\n".join(lines)


def report_from_counts(tp, tn, fp, fn) -> EvalReport:
    n = tp + tn + fp + fn
    p_undef = tp + fp == 0
    r_undef = tp + fn == 0
    precision = 0.0 if p_undef else tp / (tp + fp)
    recall = 0.0 if r_undef else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return EvalReport((tp + tn) / n if n else 0.0, precision, recall, f1,
                      ((int(tn), int(fp)), (int(fn), int(tp))), int(n), p_undef, r_undef)


def evaluate_predictions(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true).astype(np.int64)
    y_pred = np.asarray(y_pred).astype(np.int64)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    return report_from_counts(tp, tn, fp, fn)
