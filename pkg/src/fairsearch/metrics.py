"""Effectiveness and group-fairness metrics over binary predictions.

All fairness scores are reported as absolute values, so 0 is always the
fair optimum. Degenerate 0/0 denominators in the effectiveness metrics
resolve to 0; fairness rates with an empty denominator raise
:class:`MetricUndefinedError` and the caller decides policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MetricUndefinedError, ShapeError

EFFECTIVENESS_KEYS = ("accuracy", "precision", "recall", "f1", "mcc")
INTERSECTIONAL_KEYS = ("wcs_spd", "wcs_eod", "wcs_aod", "avg_spd", "avg_eod", "avg_aod")


@dataclass(frozen=True)
class GroupConfusion:
    """TP/FP/TN/FN counts for one (sub)group of rows."""

    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "GroupConfusion":
        y_true, y_pred = _paired(y_true, y_pred)
        return cls(
            tp=int(np.count_nonzero((y_true == 1) & (y_pred == 1))),
            fp=int(np.count_nonzero((y_true == 0) & (y_pred == 1))),
            tn=int(np.count_nonzero((y_true == 0) & (y_pred == 0))),
            fn=int(np.count_nonzero((y_true == 1) & (y_pred == 0))),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def tpr(self) -> float:
        if self.tp + self.fn == 0:
            raise MetricUndefinedError("TPR undefined: no positive ground truth")
        return self.tp / (self.tp + self.fn)

    def fpr(self) -> float:
        if self.fp + self.tn == 0:
            raise MetricUndefinedError("FPR undefined: no negative ground truth")
        return self.fp / (self.fp + self.tn)

    def positive_rate(self) -> float:
        if self.total == 0:
            raise MetricUndefinedError("positive rate undefined: empty group")
        return (self.tp + self.fp) / self.total


def _paired(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ShapeError(f"paired label vectors expected, got {y_true.shape} and {y_pred.shape}")
    if y_true.size < 1:
        raise ShapeError("label vectors must be non-empty")
    return y_true, y_pred


def effectiveness(y_true, y_pred) -> dict[str, float]:
    """Accuracy, precision, recall, F1 and MCC with the 0/0 -> 0 convention."""
    c = GroupConfusion.from_predictions(y_true, y_pred)
    tp, fp, tn, fn = c.tp, c.fp, c.tn, c.fn
    accuracy = (tp + tn) / c.total
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    denom = float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / np.sqrt(denom) if denom else 0.0
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "mcc": float(mcc),
    }


def _group_split(vector, group):
    group = np.asarray(group)
    if group.shape != vector.shape:
        raise ShapeError("group vector length mismatch")
    unpriv = group == 0
    priv = group == 1
    if not unpriv.any() or not priv.any():
        raise MetricUndefinedError("both group values must be present")
    return unpriv, priv


def spd(y_pred, group) -> float:
    """Absolute statistical parity difference between the groups'
    positive-prediction rates."""
    y_pred = np.asarray(y_pred)
    if y_pred.ndim != 1 or y_pred.size < 1:
        raise ShapeError("prediction vector must be 1-D and non-empty")
    unpriv, priv = _group_split(y_pred, group)
    return abs(float(y_pred[unpriv].mean()) - float(y_pred[priv].mean()))


def eod(y_true, y_pred, group) -> float:
    """Absolute difference in true positive rate between the groups."""
    y_true, y_pred = _paired(y_true, y_pred)
    unpriv, priv = _group_split(y_true, group)
    cu = GroupConfusion.from_predictions(y_true[unpriv], y_pred[unpriv])
    cp = GroupConfusion.from_predictions(y_true[priv], y_pred[priv])
    return abs(cu.tpr() - cp.tpr())


def aod(y_true, y_pred, group) -> float:
    """Absolute mean of the FPR and TPR differences between the groups."""
    y_true, y_pred = _paired(y_true, y_pred)
    unpriv, priv = _group_split(y_true, group)
    cu = GroupConfusion.from_predictions(y_true[unpriv], y_pred[unpriv])
    cp = GroupConfusion.from_predictions(y_true[priv], y_pred[priv])
    return abs(0.5 * ((cu.fpr() - cp.fpr()) + (cu.tpr() - cp.tpr())))


def _subgroup_confusions(y_true, y_pred, subgroups):
    subgroups = np.asarray(subgroups)
    if subgroups.ndim != 2 or subgroups.shape[0] != y_true.shape[0]:
        raise ShapeError("subgroups must be an (n_rows, n_sensitive) array")
    keys, inverse = np.unique(subgroups, axis=0, return_inverse=True)
    return [
        GroupConfusion.from_predictions(y_true[inverse == k], y_pred[inverse == k])
        for k in range(keys.shape[0])
    ]


def _span_and_average(rates: list[float], overall: float | None, mode: str):
    if len(rates) < 2:
        return None, None
    span = max(rates) - min(rates)
    if mode == "literal":
        avg = sum(rates) / len(rates)
    else:  # mean absolute deviation from the overall rate
        avg = sum(abs(r - overall) for r in rates) / len(rates)
    return span, avg


def intersectional(y_true, y_pred, subgroups, average_mode: str = "literal") -> dict:
    """Worst-case (max - min) and average subgroup rates for the positive
    rate, TPR, and mean of TPR and FPR.

    Subgroups lacking the rows a rate needs are skipped for that rate; a
    rate with fewer than two evaluable subgroups comes back as None.
    ``average_mode="deviation"`` switches the averages to mean absolute
    deviation from the pooled overall rate instead of the plain mean.
    """
    if average_mode not in ("literal", "deviation"):
        raise ValueError(f"unknown average_mode {average_mode!r}")
    y_true, y_pred = _paired(y_true, y_pred)
    confusions = _subgroup_confusions(y_true, y_pred, subgroups)
    if len(confusions) < 2:
        raise MetricUndefinedError("fewer than two subgroups present")

    overall = GroupConfusion.from_predictions(y_true, y_pred)
    pos_rates, tprs, mean_odds = [], [], []
    for c in confusions:
        pos_rates.append(c.positive_rate())
        try:
            t = c.tpr()
            tprs.append(t)
        except MetricUndefinedError:
            t = None
        if t is not None:
            try:
                mean_odds.append(0.5 * (t + c.fpr()))
            except MetricUndefinedError:
                pass

    def overall_rate(kind):
        try:
            if kind == "spd":
                return overall.positive_rate()
            if kind == "eod":
                return overall.tpr()
            return 0.5 * (overall.tpr() + overall.fpr())
        except MetricUndefinedError:
            return None

    wcs_spd, avg_spd = _span_and_average(pos_rates, overall_rate("spd"), average_mode)
    wcs_eod, avg_eod = _span_and_average(tprs, overall_rate("eod"), average_mode)
    wcs_aod, avg_aod = _span_and_average(mean_odds, overall_rate("aod"), average_mode)
    return {
        "wcs_spd": wcs_spd,
        "wcs_eod": wcs_eod,
        "wcs_aod": wcs_aod,
        "avg_spd": avg_spd,
        "avg_eod": avg_eod,
        "avg_aod": avg_aod,
    }


@dataclass(frozen=True)
class MetricsRecord:
    """All effectiveness and fairness scores for one trained model.

    Intersectional fields stay None unless the table carries at least two
    sensitive attributes; per-attribute fields are None when the split
    left a rate undefined.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    spd: dict[str, float | None] = field(default_factory=dict)
    eod: dict[str, float | None] = field(default_factory=dict)
    aod: dict[str, float | None] = field(default_factory=dict)
    wcs_spd: float | None = None
    wcs_eod: float | None = None
    wcs_aod: float | None = None
    avg_spd: float | None = None
    avg_eod: float | None = None
    avg_aod: float | None = None

    def to_flat_dict(self) -> dict[str, float | None]:
        out = {k: getattr(self, k) for k in EFFECTIVENESS_KEYS}
        for family in ("spd", "eod", "aod"):
            for attr, value in getattr(self, family).items():
                out[f"{family}.{attr}"] = value
        for k in INTERSECTIONAL_KEYS:
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out

    @classmethod
    def from_flat_dict(cls, flat: dict) -> "MetricsRecord":
        kwargs = {k: flat[k] for k in EFFECTIVENESS_KEYS}
        for family in ("spd", "eod", "aod"):
            kwargs[family] = {
                key.split(".", 1)[1]: value
                for key, value in flat.items()
                if key.startswith(family + ".")
            }
        for k in INTERSECTIONAL_KEYS:
            if k in flat:
                kwargs[k] = flat[k]
        return cls(**kwargs)


def compute_record(
    y_true, y_pred, sensitive: dict[str, np.ndarray], average_mode: str = "literal"
) -> MetricsRecord:
    """Full MetricsRecord for one prediction vector; undefined per-attribute
    rates degrade to None instead of raising."""
    eff = effectiveness(y_true, y_pred)
    per_attr: dict[str, dict[str, float | None]] = {"spd": {}, "eod": {}, "aod": {}}
    for name, group in sensitive.items():
        for family, fn in (("spd", None), ("eod", eod), ("aod", aod)):
            try:
                value = spd(y_pred, group) if family == "spd" else fn(y_true, y_pred, group)
            except MetricUndefinedError:
                value = None
            per_attr[family][name] = value
    inter: dict = {}
    if len(sensitive) >= 2:
        subgroups = np.column_stack(list(sensitive.values()))
        try:
            inter = intersectional(y_true, y_pred, subgroups, average_mode=average_mode)
        except MetricUndefinedError:
            inter = {}
    return MetricsRecord(**eff, **per_attr, **inter)
