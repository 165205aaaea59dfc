"""Confusion counts and the five evaluation indexes."""

from dataclasses import asdict, dataclass

from .segment import HEALTHY

METRIC_NAMES = ("precision", "npv", "recall", "specificity", "accuracy")
UNDEFINED = None  # zero-denominator marker, rendered as "n/a"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionMatrix":
        """Same predictions scored with the other class as positive."""
        return ConfusionMatrix(self.tn, self.fn, self.fp, self.tp)


@dataclass(frozen=True)
class MetricsReport:
    precision: float | None
    npv: float | None
    recall: float | None
    specificity: float | None
    accuracy: float | None

    def as_dict(self):
        return asdict(self)

    def formatted(self, digits: int = 2) -> dict:
        return {k: fmt(v, digits) for k, v in asdict(self).items()}


def fmt(value, digits: int = 2) -> str:
    return "n/a" if value is UNDEFINED else f"{value:.{digits}f}"


def confusion(true_labels, predicted, positive_class=HEALTHY) -> ConfusionMatrix:
    t, p = list(true_labels), list(predicted)
    if len(t) != len(p):
        raise ValueError("length mismatch")
    if not t:
        raise ValueError("empty input")
    tp = fp = fn = tn = 0
    for a, b in zip(t, p):
        if b == positive_class:
            if a == positive_class:
                tp += 1
            else:
                fp += 1
        elif a == positive_class:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def _ratio(num, den):
    return UNDEFINED if den == 0 else num / den


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total < 1:
        raise ValueError("empty confusion matrix")
    return MetricsReport(
        precision=_ratio(cm.tp, cm.tp + cm.fp),
        npv=_ratio(cm.tn, cm.tn + cm.fn),
        recall=_ratio(cm.tp, cm.tp + cm.fn),
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
        accuracy=_ratio(cm.tp + cm.tn, cm.total),
    )
