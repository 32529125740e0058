import itertools
import math

import numpy as np
import pytest

from fairsearch.analysis import (
    ObjectivePoint,
    RunResult,
    RunSolution,
    StatReport,
    aggregate_runs,
    dominates,
    effect_label,
    hypervolume2d,
    pareto_front,
    pareto_optimality_counts,
    reference_point,
    vargha_delaney_a12,
    wilcoxon_signed_rank,
)
from fairsearch.errors import PairingError, ParameterError, ShapeError
from fairsearch.metrics import MetricsRecord

# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def brute_force_mask(values):
    return [not any(dominates(q, p) for q in values) for p in values]


def signed_rank_stat(diffs):
    """Average ranks of |d| and the positive-rank sum, independently coded."""
    magnitudes = sorted((abs(d), i) for i, d in enumerate(diffs))
    ranks = [0.0] * len(diffs)
    i = 0
    while i < len(magnitudes):
        j = i
        while j < len(magnitudes) and magnitudes[j][0] == magnitudes[i][0]:
            j += 1
        avg = (i + j + 1) / 2.0
        for _, idx in magnitudes[i:j]:
            ranks[idx] = avg
        i = j
    return ranks, sum(r for r, d in zip(ranks, diffs) if d > 0)


def brute_force_wilcoxon(a, b, alternative):
    """Full 2^n enumeration of sign assignments."""
    diffs = [x - y for x, y in zip(a, b) if x != y]
    n = len(diffs)
    if n == 0:
        return 1.0
    ranks, w_obs = signed_rank_stat(diffs)
    hits = 0
    for signs in itertools.product((False, True), repeat=n):
        w_sim = sum(r for r, positive in zip(ranks, signs) if positive)
        if alternative == "improved-greater":
            hits += w_sim >= w_obs
        else:
            hits += w_sim <= w_obs
    return hits / 2**n


def pairwise_a12(a, b):
    wins = ties = 0
    for x in a:
        for y in b:
            if x > y:
                wins += 1
            elif x == y:
                ties += 1
    return (wins + 0.5 * ties) / (len(a) * len(b))


def mc_hypervolume(front_values, ref, n_samples, seed):
    rng = np.random.default_rng(seed)
    pts = np.array(front_values)
    lo = pts.min(axis=0)
    hi = np.array(ref)
    samples = lo + rng.random((n_samples, 2)) * (hi - lo)
    covered = np.zeros(n_samples, dtype=bool)
    for p in pts:
        covered |= (samples >= p).all(axis=1)
    box = float(np.prod(hi - lo))
    frac = covered.mean()
    estimate = box * frac
    sigma = box * math.sqrt(max(frac * (1 - frac), 1e-12) / n_samples)
    return estimate, sigma


# ---------------------------------------------------------------------------


def P(x, y):
    return ObjectivePoint((x, y))


class TestParetoFront:
    def test_mutually_non_dominated(self):
        pts = [P(0.1, 0.9), P(0.9, 0.1), P(0.5, 0.5)]
        assert pareto_front(pts) == pts

    def test_strict_dominance(self):
        assert pareto_front([P(0.1, 0.1), P(0.2, 0.2)]) == [P(0.1, 0.1)]

    def test_duplicates_of_front_point_retained(self):
        pts = [P(0.1, 0.1), P(0.1, 0.1), P(0.3, 0.3)]
        assert pareto_front(pts) == [P(0.1, 0.1), P(0.1, 0.1)]

    def test_equal_x_different_y(self):
        assert pareto_front([P(0.1, 0.2), P(0.1, 0.3)]) == [P(0.1, 0.2)]

    def test_matches_brute_force_on_random_points(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            values = [
                (round(float(a), 2), round(float(b), 2))
                for a, b in rng.random((100, 2))
            ]
            pts = [ObjectivePoint(v) for v in values]
            got = {id(p) for p in pareto_front(pts)}
            expected = [p for p, keep in zip(pts, brute_force_mask(values)) if keep]
            assert got == {id(p) for p in expected}

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        pts = [ObjectivePoint(tuple(v)) for v in rng.random((50, 2))]
        front = pareto_front(pts)
        assert pareto_front(front) == front


class TestHypervolume:
    def test_single_rectangle(self):
        assert abs(hypervolume2d([P(0.2, 0.3)], P(1.0, 1.0)) - 0.56) < 1e-12

    def test_two_point_decomposition(self):
        hv = hypervolume2d([P(0.1, 0.5), P(0.5, 0.1)], P(1.0, 1.0))
        assert abs(hv - 0.65) < 1e-12

    def test_dominated_point_is_free(self):
        base = [P(0.1, 0.5), P(0.5, 0.1)]
        hv1 = hypervolume2d(base, P(1, 1))
        hv2 = hypervolume2d(base + [P(0.6, 0.6)], P(1, 1))
        assert hv1 == hv2

    def test_empty_front(self):
        assert hypervolume2d([], P(1, 1)) == 0.0

    def test_points_beyond_reference_clipped(self):
        assert hypervolume2d([P(2.0, 2.0)], P(1, 1)) == 0.0
        hv = hypervolume2d([P(0.5, 2.0), P(2.0, 0.5)], P(1, 1))
        assert hv == 0.0  # clipped to the reference corner contributes nothing

    def test_monotone_in_non_dominated_additions(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            pts = [ObjectivePoint(tuple(v)) for v in rng.random((12, 2))]
            ref = P(1.5, 1.5)
            front = pareto_front(pts)
            hv = hypervolume2d(front, ref)
            extra = ObjectivePoint((float(rng.random() * 0.3), float(rng.random() * 0.3)))
            assert hypervolume2d(front + [extra], ref) >= hv - 1e-12
            if len(front) > 1:
                assert hypervolume2d(front[1:], ref) <= hv + 1e-12

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(6)
        for trial in range(10):
            pts = [(float(a), float(b)) for a, b in rng.random((8, 2))]
            ref = (1.2, 1.3)
            hv = hypervolume2d([ObjectivePoint(p) for p in pts], ObjectivePoint(ref))
            est, sigma = mc_hypervolume(pts, ref, 200_000, seed=trial)
            assert abs(hv - est) <= 3 * sigma


class TestReferencePoint:
    def test_single_front(self):
        ref = reference_point([[P(0.2, 0.3)]])
        assert ref.values == (0.7, 0.8)

    def test_max_across_fronts(self):
        ref = reference_point([[P(0.4, 0.1)], [P(0.9, 0.2)]])
        assert ref.values == (1.4, 0.7)

    def test_weakly_dominated_by_every_point(self):
        rng = np.random.default_rng(7)
        fronts = [[ObjectivePoint(tuple(v)) for v in rng.random((5, 2))] for _ in range(4)]
        ref = reference_point(fronts)
        for front in fronts:
            for p in front:
                assert p.values[0] <= ref.values[0] and p.values[1] <= ref.values[1]

    def test_requires_points(self):
        with pytest.raises(ParameterError):
            reference_point([[]])


class TestWilcoxon:
    def test_identical_samples(self):
        assert wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 4, 5], "improved-less") == 1.0

    def test_strictly_less_n20(self):
        a = list(range(20))
        b = [x + 1 for x in a]
        p = wilcoxon_signed_rank(a, b, "improved-less")
        assert p == 1 / 2**20
        assert p < 0.001

    def test_tail_swap_identity_on_tie_free_data(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a = rng.standard_normal(10).tolist()
            b = rng.standard_normal(10).tolist()
            p_ab = wilcoxon_signed_rank(a, b, "improved-less")
            p_ba = wilcoxon_signed_rank(b, a, "improved-less")
            assert p_ab + p_ba >= 1.0 - 1e-12
            assert p_ab == brute_force_wilcoxon(a, b, "improved-less")

    def test_exact_matches_full_enumeration(self):
        rng = np.random.default_rng(9)
        for n in range(5, 13):
            for _ in range(6):
                a = [float(x) for x in rng.integers(0, 6, n)]
                b = [float(x) for x in rng.integers(0, 6, n)]
                if sum(1 for x, y in zip(a, b) if x != y) < 5:
                    continue
                for alt in ("improved-less", "improved-greater"):
                    assert wilcoxon_signed_rank(a, b, alt) == brute_force_wilcoxon(a, b, alt)

    def test_normal_approximation_close_to_exact_above_cutoff(self):
        from fairsearch.analysis import _exact_tail

        rng = np.random.default_rng(10)
        for _ in range(10):
            a = rng.standard_normal(30).tolist()
            b = (np.array(a) + 0.4 * rng.standard_normal(30) + 0.3).tolist()
            diffs = [x - y for x, y in zip(a, b) if x != y]
            ranks, w_obs = signed_rank_stat(diffs)
            exact = _exact_tail([round(2 * r) for r in ranks], round(2 * w_obs), upper=False)
            approx = wilcoxon_signed_rank(a, b, "improved-less")
            assert abs(exact - approx) < 0.01

    def test_zero_differences_dropped(self):
        a = [1, 2, 3, 4, 5, 6, 7]
        b = [1, 2, 0, 5, 6, 8, 9]  # two zero diffs, five non-zero
        assert wilcoxon_signed_rank(a, b, "improved-less") == brute_force_wilcoxon(
            a, b, "improved-less"
        )

    def test_too_few_nonzero_differences(self):
        with pytest.raises(ParameterError):
            wilcoxon_signed_rank([1, 2, 3], [2, 3, 4], "improved-less")

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            wilcoxon_signed_rank([1, 2], [1], "improved-less")


class TestA12:
    def test_total_separation(self):
        a12, label = vargha_delaney_a12([5, 6, 7], [1, 2, 3])
        assert a12 == 1.0 and label == "large"

    def test_identical_multisets(self):
        a12, label = vargha_delaney_a12([1, 2, 3], [3, 1, 2])
        assert a12 == 0.5 and label == "negligible"

    def test_enumerated_nine_pairs(self):
        # a={1,2,3} vs b={2,2,2}: 3 wins (a=3), 3 ties (a=2) -> (3+1.5)/9
        a12, label = vargha_delaney_a12([1, 2, 3], [2, 2, 2])
        assert a12 == pairwise_a12([1, 2, 3], [2, 2, 2]) == 0.5
        assert label == "negligible"

    def test_matches_pairwise_enumeration_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = rng.integers(0, 8, rng.integers(1, 12)).tolist()
            b = rng.integers(0, 8, rng.integers(1, 12)).tolist()
            got, _ = vargha_delaney_a12(a, b)
            assert abs(got - pairwise_a12(a, b)) < 1e-15

    def test_complement_identity(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            a = rng.standard_normal(9).tolist()
            b = rng.standard_normal(7).tolist()
            assert abs(vargha_delaney_a12(a, b)[0] + vargha_delaney_a12(b, a)[0] - 1.0) < 1e-12

    def test_effect_label_thresholds(self):
        assert effect_label(0.5) == "negligible"
        assert effect_label(0.56) == "small"
        assert effect_label(0.44) == "small"
        assert effect_label(0.5599) == "negligible"
        assert effect_label(0.64) == "medium"
        assert effect_label(0.36) == "medium"
        assert effect_label(0.29) == "large"
        assert effect_label(0.71) == "large"
        assert effect_label(0.0) == "large"
        assert effect_label(1.0) == "large"


class TestParetoCounts:
    def test_dominating_method_owns_the_front(self):
        counts = pareto_optimality_counts(
            {"good": [(0.1, 0.1), (0.05, 0.2)], "bad": [(0.5, 0.5), (0.4, 0.4)]}
        )
        assert counts == {"good": 2, "bad": 0}

    def test_identical_points_both_counted(self):
        counts = pareto_optimality_counts({"a": [(0.1, 0.1)], "b": [(0.1, 0.1)]})
        assert counts == {"a": 1, "b": 1}

    def test_matches_brute_force(self):
        rng = np.random.default_rng(13)
        pts = {
            m: [tuple(np.round(v, 2)) for v in rng.random((15, 2))]
            for m in ("m1", "m2", "m3")
        }
        counts = pareto_optimality_counts(pts)
        pooled = [p for v in pts.values() for p in v]
        mask = brute_force_mask(pooled)
        expected = {}
        i = 0
        for m, v in pts.items():
            c = 0
            for _ in v:
                c += mask[i]
                i += 1
            expected[m] = c
        assert counts == expected
        assert sum(counts.values()) == sum(mask)


def _record(acc, spd_value):
    return MetricsRecord(
        accuracy=acc, precision=acc, recall=acc, f1=acc, mcc=2 * acc - 1,
        spd={"a": spd_value}, eod={"a": spd_value}, aod={"a": spd_value},
    )


def _run(method, idx, seed, pairs):
    solutions = [RunSolution(config={}, test_metrics=_record(a, s)) for a, s in pairs]
    return RunResult(method, idx, seed, solutions)


class TestAggregateRuns:
    def test_method_against_itself(self):
        runs_a = [_run("m", i, 100 + i, [(0.7 + 0.01 * i, 0.1)]) for i in range(6)]
        runs_b = [_run("m2", i, 100 + i, [(0.7 + 0.01 * i, 0.1)]) for i in range(6)]
        summary, reports = aggregate_runs({"m": runs_a, "m2": runs_b}, "m")
        for metric, report in reports["m2"].items():
            assert report.p_value == 1.0
            assert report.a12 == 0.5
            assert report.effect_label == "negligible"

    def test_dominant_method_improves_fairness_with_large_effect(self):
        rng = np.random.default_rng(14)
        target = [
            _run("t", i, i, [(0.75 + 0.01 * float(rng.random()), 0.05 + 0.01 * float(rng.random()))])
            for i in range(12)
        ]
        base = [
            _run("b", i, i, [(0.74 + 0.01 * float(rng.random()), 0.2 + 0.02 * float(rng.random()))])
            for i in range(12)
        ]
        _, reports = aggregate_runs({"t": target, "b": base}, "t")
        for metric in ("spd.a", "eod.a", "aod.a"):
            assert reports["b"][metric].direction == "improved"
            assert reports["b"][metric].effect_label == "large"
            assert reports["b"][metric].p_value < 0.05

    def test_mean_std_match_two_pass_oracle(self):
        rng = np.random.default_rng(15)
        values = rng.random(10)
        runs = [_run("m", i, i, [(float(v), 0.1)]) for i, v in enumerate(values)]
        other = [_run("o", i, i, [(float(v), 0.1)]) for i, v in enumerate(values)]
        summary, _ = aggregate_runs({"m": runs, "o": other}, "m")
        mean = sum(values) / len(values)
        std = math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))
        got_mean, got_std = summary["m"]["accuracy"]
        assert abs(got_mean - mean) < 1e-12
        assert abs(got_std - std) < 1e-12

    def test_front_average_is_solution_mean(self):
        run = _run("m", 0, 0, [(0.6, 0.1), (0.8, 0.3)])
        assert abs(run.front_average["accuracy"] - 0.7) < 1e-12
        assert abs(run.front_average["spd.a"] - 0.2) < 1e-12

    def test_seed_misalignment(self):
        runs_a = [_run("a", i, i, [(0.7, 0.1)]) for i in range(6)]
        runs_b = [_run("b", i, i + 1, [(0.7, 0.1)]) for i in range(6)]
        with pytest.raises(PairingError):
            aggregate_runs({"a": runs_a, "b": runs_b}, "a")

    def test_run_count_mismatch(self):
        runs_a = [_run("a", i, i, [(0.7, 0.1)]) for i in range(6)]
        runs_b = [_run("b", i, i, [(0.7, 0.1)]) for i in range(5)]
        with pytest.raises(PairingError):
            aggregate_runs({"a": runs_a, "b": runs_b}, "a")


class TestStatReport:
    def test_compare_direction(self):
        target = [0.1, 0.12, 0.09, 0.11, 0.1, 0.13, 0.08]
        baseline = [0.3, 0.32, 0.29, 0.31, 0.3, 0.33, 0.28]
        report = StatReport.compare(target, baseline, "improved-less")
        assert report.direction == "improved"
        assert report.p_value < 0.05
        assert report.effect_label == "large"
