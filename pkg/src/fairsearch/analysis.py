"""Pareto-front analysis and nonparametric statistics for run comparisons.

Objective points live in minimization space: accuracy-like metrics enter
as 1 - value, fairness metrics as-is. Dominance is weak (<= in both
coordinates, < in at least one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import PairingError, ParameterError, ShapeError
from .metrics import EFFECTIVENESS_KEYS, MetricsRecord

ALPHA = 0.05
EXACT_WILCOXON_LIMIT = 25


@dataclass(frozen=True)
class ObjectivePoint:
    """A (to-minimize, to-minimize) pair tagged with where it came from."""

    values: tuple[float, float]
    provenance: tuple[str, int] | None = None

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.values):
            raise ParameterError(f"objective values must be finite, got {self.values}")


def to_min_space(effectiveness_value: float, fairness_value: float) -> tuple[float, float]:
    return (1.0 - effectiveness_value, fairness_value)


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def _non_dominated_mask(values: list[tuple[float, float]]) -> list[bool]:
    # sweep over x-groups in ascending order; O(n log n)
    order = sorted(range(len(values)), key=lambda i: values[i])
    mask = [False] * len(values)
    best_y_smaller_x = math.inf
    i = 0
    while i < len(order):
        j = i
        x = values[order[i]][0]
        while j < len(order) and values[order[j]][0] == x:
            j += 1
        group = order[i:j]
        group_min_y = min(values[g][1] for g in group)
        for g in group:
            y = values[g][1]
            mask[g] = y < best_y_smaller_x and y <= group_min_y
        best_y_smaller_x = min(best_y_smaller_x, group_min_y)
        i = j
    return mask


def pareto_front(points: list[ObjectivePoint]) -> list[ObjectivePoint]:
    """All non-dominated points, duplicates of front points included."""
    if not points:
        raise ParameterError("pareto_front needs at least one point")
    mask = _non_dominated_mask([p.values for p in points])
    return [p for p, keep in zip(points, mask) if keep]


def hypervolume2d(front: list[ObjectivePoint], reference: ObjectivePoint) -> float:
    """Area dominated by the front up to the reference point (sort-and-sweep).

    Points beyond the reference are clipped to it, so they contribute
    zero area instead of failing.
    """
    if not front:
        return 0.0
    rx, ry = reference.values
    clipped = sorted((min(p.values[0], rx), min(p.values[1], ry)) for p in front)
    hv = 0.0
    cur_y = ry
    for x, y in clipped:
        if y < cur_y:
            hv += (rx - x) * (cur_y - y)
            cur_y = y
    return hv


def reference_point(all_fronts: list[list[ObjectivePoint]], epsilon: float = 0.5) -> ObjectivePoint:
    """Coordinatewise worst value over every front's points, plus epsilon."""
    points = [p for front in all_fronts for p in front]
    if not points:
        raise ParameterError("reference_point needs at least one non-empty front")
    worst0 = max(p.values[0] for p in points)
    worst1 = max(p.values[1] for p in points)
    return ObjectivePoint((worst0 + epsilon, worst1 + epsilon))


def _average_ranks(magnitudes: list[float]) -> list[float]:
    order = sorted(range(len(magnitudes)), key=lambda i: magnitudes[i])
    ranks = [0.0] * len(magnitudes)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and magnitudes[order[j]] == magnitudes[order[i]]:
            j += 1
        avg = (i + 1 + j) / 2.0  # mean of ranks i+1 .. j
        for k in order[i:j]:
            ranks[k] = avg
        i = j
    return ranks


def _exact_tail(doubled_ranks: list[int], doubled_stat: int, upper: bool) -> float:
    # distribution of the doubled rank sum over all 2^n sign assignments
    total = sum(doubled_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled_ranks:
        for s in range(total, r - 1, -1):
            counts[s] += counts[s - r]
    if upper:
        hits = sum(counts[doubled_stat:])
    else:
        hits = sum(counts[: doubled_stat + 1])
    return hits / 2 ** len(doubled_ranks)


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(a, b, alternative: str) -> float:
    """One-sided paired Wilcoxon signed-rank p-value.

    Zero differences are dropped; with every difference zero the p-value
    is 1.0 (no evidence). Exact by enumeration up to n=25 non-zero pairs,
    a tie-corrected normal approximation with continuity correction above.
    ``alternative`` is "improved-less" (a tends below b) or
    "improved-greater".
    """
    if alternative not in ("improved-less", "improved-greater"):
        raise ParameterError(f"unknown alternative {alternative!r}")
    if len(a) != len(b):
        raise ShapeError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    diffs = [d for d in diffs if d != 0.0]
    if not diffs:
        return 1.0
    n = len(diffs)
    if n < 5:
        raise ParameterError(f"need at least 5 non-zero differences, got {n}")
    ranks = _average_ranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    upper = alternative == "improved-greater"
    if n <= EXACT_WILCOXON_LIMIT:
        doubled = [round(2 * r) for r in ranks]
        return _exact_tail(doubled, round(2 * w_plus), upper)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    i = 0
    sorted_abs = sorted(abs(d) for d in diffs)
    while i < n:  # tie correction
        j = i
        while j < n and sorted_abs[j] == sorted_abs[i]:
            j += 1
        t = j - i
        var -= (t**3 - t) / 48.0
        i = j
    sd = math.sqrt(var)
    if upper:
        return _norm_sf((w_plus - 0.5 - mean) / sd)
    return 1.0 - _norm_sf((w_plus + 0.5 - mean) / sd)


def effect_label(a12: float) -> str:
    """Magnitude bucket for an A12 effect size."""
    if 0.44 < a12 < 0.56:
        return "negligible"
    if 0.56 <= a12 < 0.64 or 0.36 < a12 <= 0.44:
        return "small"
    if 0.64 <= a12 < 0.71 or 0.29 < a12 <= 0.36:
        return "medium"
    return "large"


def vargha_delaney_a12(a, b) -> tuple[float, str]:
    """Probability that a draw from ``a`` exceeds a draw from ``b`` (ties
    count half), with its magnitude label."""
    if not len(a) or not len(b):
        raise ParameterError("both samples must be non-empty")
    wins = sum(1.0 for x in a for y in b if x > y)
    ties = sum(1.0 for x in a for y in b if x == y)
    a12 = (wins + 0.5 * ties) / (len(a) * len(b))
    return a12, effect_label(a12)


@dataclass(frozen=True)
class StatReport:
    """Outcome of one method-vs-baseline comparison on one metric."""

    p_value: float
    a12: float
    effect_label: str
    direction: str  # improved | not-improved

    @classmethod
    def compare(cls, target, baseline, improved: str) -> "StatReport":
        p = wilcoxon_signed_rank(target, baseline, alternative=improved)
        a12, label = vargha_delaney_a12(target, baseline)
        return cls(p_value=p, a12=a12, effect_label=label,
                   direction="improved" if p < ALPHA else "not-improved")


def pareto_optimality_counts(
    points_by_method: dict[str, list[tuple[float, float]]],
) -> dict[str, int]:
    """Pool every method's points, take the global front, and count how
    many of each method's points sit on it (duplicates all count)."""
    pooled: list[tuple[float, float]] = []
    for pts in points_by_method.values():
        pooled.extend(pts)
    if not pooled:
        raise ParameterError("no points to count")
    mask = _non_dominated_mask(pooled)
    counts = {method: 0 for method in points_by_method}
    i = 0
    for method, pts in points_by_method.items():
        for _ in pts:
            if mask[i]:
                counts[method] += 1
            i += 1
    return counts


@dataclass
class RunSolution:
    """One solution of a run: its configuration, validation fitness (for
    search methods) and held-out test metrics."""

    config: dict
    test_metrics: MetricsRecord
    validation_fitness: dict | None = None


@dataclass
class RunResult:
    """One seeded run of one method."""

    method: str
    run_index: int
    seed: int
    solutions: list[RunSolution]
    front_average: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.front_average:
            self.front_average = front_average_of(self.solutions)


def front_average_of(solutions: list[RunSolution]) -> dict[str, float]:
    """Arithmetic mean of each test metric over a run's solutions; metrics
    undefined for every solution are dropped."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for sol in solutions:
        for key, value in sol.test_metrics.to_flat_dict().items():
            if value is None:
                continue
            sums[key] = sums.get(key, 0.0) + value
            counts[key] = counts.get(key, 0) + 1
    return {k: sums[k] / counts[k] for k in sums}


def is_fairness_metric(key: str) -> bool:
    return key not in EFFECTIVENESS_KEYS


def check_alignment(results_by_method: dict[str, list[RunResult]]) -> None:
    """All methods must carry the same number of runs with the same seeds
    in the same run order."""
    reference = None
    for method, runs in results_by_method.items():
        seeds = [(r.run_index, r.seed) for r in runs]
        if reference is None:
            reference = seeds
        elif seeds != reference:
            raise PairingError(f"run seeds of {method!r} do not align with the first method")


def aggregate_runs(
    results_by_method: dict[str, list[RunResult]], target: str
) -> tuple[dict, dict]:
    """Per-method mean and sample standard deviation of the front-averaged
    metrics, plus a StatReport of the target against every other method.

    Effectiveness metrics test "target greater", fairness metrics test
    "target less"; only metrics defined in every run of both methods are
    compared.
    """
    if target not in results_by_method:
        raise PairingError(f"target method {target!r} missing from results")
    check_alignment(results_by_method)

    summary: dict[str, dict[str, tuple[float, float]]] = {}
    for method, runs in results_by_method.items():
        keys = sorted({k for r in runs for k in r.front_average})
        summary[method] = {}
        for key in keys:
            values = [r.front_average[key] for r in runs if key in r.front_average]
            mean = sum(values) / len(values)
            if len(values) > 1:
                std = math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))
            else:
                std = 0.0
            summary[method][key] = (mean, std)

    target_runs = results_by_method[target]
    reports: dict[str, dict[str, StatReport]] = {}
    for method, runs in results_by_method.items():
        if method == target:
            continue
        reports[method] = {}
        for key in sorted(set(summary[target]) & set(summary[method])):
            t_vals = [r.front_average.get(key) for r in target_runs]
            b_vals = [r.front_average.get(key) for r in runs]
            if any(v is None for v in t_vals + b_vals):
                continue
            improved = "improved-less" if is_fairness_metric(key) else "improved-greater"
            reports[method][key] = StatReport.compare(t_vals, b_vals, improved)
    return summary, reports
