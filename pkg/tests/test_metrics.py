import numpy as np
import pytest

from fairsearch.errors import MetricUndefinedError, ShapeError
from fairsearch.metrics import (
    GroupConfusion,
    MetricsRecord,
    aod,
    compute_record,
    effectiveness,
    eod,
    intersectional,
    spd,
)

# ---------------------------------------------------------------------------
# Independent naive oracle: plain per-row loops, no shared code paths.
# ---------------------------------------------------------------------------


def naive_counts(y_true, y_pred, mask=None):
    tp = fp = tn = fn = 0
    for i in range(len(y_true)):
        if mask is not None and not mask[i]:
            continue
        if y_true[i] == 1 and y_pred[i] == 1:
            tp += 1
        elif y_true[i] == 0 and y_pred[i] == 1:
            fp += 1
        elif y_true[i] == 0 and y_pred[i] == 0:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def naive_effectiveness(y_true, y_pred):
    tp, fp, tn, fn = naive_counts(y_true, y_pred)
    n = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / denom**0.5 if denom else 0.0
    return {
        "accuracy": (tp + tn) / n,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "mcc": mcc,
    }


def naive_rate(y_pred, rows):
    hits = sum(1 for i in rows if y_pred[i] == 1)
    return hits / len(rows)


def naive_spd(y_pred, group):
    g0 = [i for i in range(len(group)) if group[i] == 0]
    g1 = [i for i in range(len(group)) if group[i] == 1]
    return abs(naive_rate(y_pred, g0) - naive_rate(y_pred, g1))


def naive_tpr(y_true, y_pred, rows):
    pos = [i for i in rows if y_true[i] == 1]
    return sum(1 for i in pos if y_pred[i] == 1) / len(pos)


def naive_fpr(y_true, y_pred, rows):
    neg = [i for i in rows if y_true[i] == 0]
    return sum(1 for i in neg if y_pred[i] == 1) / len(neg)


class TestEffectiveness:
    def test_perfect_predictor(self):
        y = [0, 1, 1, 0, 1]
        out = effectiveness(y, y)
        assert out["accuracy"] == out["f1"] == out["mcc"] == 1.0

    def test_hand_confusion(self):
        # TP=3, TN=4, FP=2, FN=1
        y_true = [1, 1, 1, 0, 0, 0, 0, 0, 0, 1]
        y_pred = [1, 1, 1, 0, 0, 0, 0, 1, 1, 0]
        out = effectiveness(y_true, y_pred)
        assert out["accuracy"] == 0.7
        assert out["precision"] == 0.6
        assert out["recall"] == 0.75
        assert abs(out["f1"] - 2 / 3) < 1e-12

    def test_constant_predictor_mcc_zero(self):
        out = effectiveness([0, 1, 0, 1], [1, 1, 1, 1])
        assert out["mcc"] == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            effectiveness([0, 1], [0, 1, 1])

    def test_mcc_equals_pearson_when_nonconstant(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            y_true = rng.integers(0, 2, 30)
            y_pred = rng.integers(0, 2, 30)
            if len(set(y_true)) < 2 or len(set(y_pred)) < 2:
                continue
            mcc = effectiveness(y_true, y_pred)["mcc"]
            pearson = np.corrcoef(y_true, y_pred)[0, 1]
            assert abs(mcc - pearson) < 1e-12


class TestGroupFairness:
    def test_spd_equal_rates(self):
        y_pred = [1, 0, 1, 0]
        group = [0, 0, 1, 1]
        assert spd(y_pred, group) == 0.0

    def test_spd_hand_counts(self):
        # unprivileged 2/4 positive, privileged 3/4 positive
        y_pred = [1, 1, 0, 0, 1, 1, 1, 0]
        group = [0, 0, 0, 0, 1, 1, 1, 1]
        assert abs(spd(y_pred, group) - 0.25) < 1e-12

    def test_spd_maximal(self):
        assert spd([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0

    def test_spd_group_missing(self):
        with pytest.raises(MetricUndefinedError):
            spd([1, 0], [1, 1])

    def test_spd_symmetric_under_group_swap_but_not_prediction_flip(self):
        rng = np.random.default_rng(1)
        flip_differs = False
        for _ in range(40):
            y_pred = rng.integers(0, 2, 20)
            group = rng.integers(0, 2, 20)
            if group.min() == group.max():
                continue
            assert abs(spd(y_pred, group) - spd(y_pred, 1 - group)) < 1e-12
            if abs(spd(y_pred, group) - spd(1 - y_pred, group)) > 1e-9:
                flip_differs = True
        # |P0-P1| is invariant under 1-y_pred, so the naive "not equal in
        # general" reading fails only via the documented symmetric identity
        assert not flip_differs

    def test_eod_hand_counts(self):
        # unpriv TPR 1/2, priv TPR 2/2
        y_true = [1, 1, 0, 1, 1, 0]
        y_pred = [1, 0, 0, 1, 1, 1]
        group = [0, 0, 0, 1, 1, 1]
        assert abs(eod(y_true, y_pred, group) - 0.5) < 1e-12

    def test_eod_perfect_predictor(self):
        y = [1, 0, 1, 0, 1, 1]
        assert eod(y, y, [0, 0, 0, 1, 1, 1]) == 0.0

    def test_eod_undefined_without_positives(self):
        with pytest.raises(MetricUndefinedError):
            eod([0, 0, 1], [0, 0, 1], [0, 0, 1])

    def test_aod_hand_counts(self):
        # unpriv: TPR 4/5, FPR 2/5; priv: TPR 2/5, FPR 1/5 -> aod = 0.3
        y_true = [1] * 5 + [0] * 5 + [1] * 5 + [0] * 5
        y_pred = [1, 1, 1, 1, 0] + [1, 1, 0, 0, 0] + [1, 1, 0, 0, 0] + [1, 0, 0, 0, 0]
        group = [0] * 10 + [1] * 10
        assert abs(aod(y_true, y_pred, group) - 0.3) < 1e-12

    def test_aod_cancellation(self):
        # dFPR = 0.4 and dTPR = -0.4 cancel inside the mean
        y_true = [1] * 5 + [0] * 5 + [1] * 5 + [0] * 5
        y_pred = [1, 1, 0, 0, 0] + [1, 1, 0, 0, 0] + [1, 1, 1, 1, 0] + [0] * 5
        group = [0] * 10 + [1] * 10
        assert abs(aod(y_true, y_pred, group)) < 1e-12

    def test_aod_perfect_predictor(self):
        y = [1, 0, 1, 0]
        assert aod(y, y, [0, 0, 1, 1]) == 0.0


class TestIntersectional:
    @staticmethod
    def subgroups_of(a, b):
        return np.column_stack([a, b])

    def test_all_rates_equal(self):
        y_pred = [1, 0] * 4
        y_true = [1, 0] * 4
        sub = self.subgroups_of([0, 0, 0, 0, 1, 1, 1, 1], [0, 0, 1, 1, 0, 0, 1, 1])
        out = intersectional(y_true, y_pred, sub)
        assert out["wcs_spd"] == 0.0
        assert out["wcs_eod"] == 0.0
        assert out["wcs_aod"] == 0.0

    def test_four_subgroup_positive_rates(self):
        # rates 0.2, 0.4, 0.6, 0.9 over 10 rows each
        rates = [2, 4, 6, 9]
        y_pred = sum(([1] * k + [0] * (10 - k) for k in rates), [])
        y_true = [1, 0] * 20
        a = [0] * 20 + [1] * 20
        b = ([0] * 10 + [1] * 10) * 2
        out = intersectional(y_true, y_pred, self.subgroups_of(a, b))
        assert abs(out["wcs_spd"] - 0.7) < 1e-12
        assert abs(out["avg_spd"] - 0.525) < 1e-12

    def test_marginal_spd_bounded_by_wcs(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = 40
            y_pred = rng.integers(0, 2, n)
            a = rng.integers(0, 2, n)
            b = rng.integers(0, 2, n)
            key = a * 2 + b
            if len(set(key.tolist())) < 4:
                continue
            out = intersectional(rng.integers(0, 2, n), y_pred, self.subgroups_of(a, b))
            assert out["wcs_spd"] >= spd(y_pred, a) - 1e-12
            assert out["wcs_spd"] >= spd(y_pred, b) - 1e-12

    def test_single_subgroup_undefined(self):
        with pytest.raises(MetricUndefinedError):
            intersectional([1, 0], [1, 0], self.subgroups_of([0, 0], [1, 1]))

    def test_skips_subgroups_without_positives(self):
        # subgroup (1,1) has no positive ground truth: excluded from EOD
        y_true = [1, 1, 0, 0, 1, 0, 0, 0]
        y_pred = [1, 0, 0, 0, 1, 1, 0, 1]
        a = [0, 0, 0, 0, 1, 1, 1, 1]
        b = [0, 0, 1, 1, 0, 0, 1, 1]
        out = intersectional(y_true, y_pred, self.subgroups_of(a, b))
        # evaluable TPRs: (0,0) -> 0.5, (1,0) -> 1.0
        assert abs(out["wcs_eod"] - 0.5) < 1e-12
        assert abs(out["avg_eod"] - 0.75) < 1e-12

    def test_deviation_mode(self):
        y_pred = [1, 1, 0, 0]
        y_true = [1, 0, 1, 0]
        sub = self.subgroups_of([0, 0, 1, 1], [0, 0, 1, 1])
        literal = intersectional(y_true, y_pred, sub)
        deviation = intersectional(y_true, y_pred, sub, average_mode="deviation")
        assert literal["avg_spd"] == 0.5  # mean of rates 1.0 and 0.0
        assert deviation["avg_spd"] == 0.5  # mean |rate - 0.5|
        assert literal["wcs_spd"] == deviation["wcs_spd"] == 1.0


class TestRecordAndOracle:
    def test_flat_round_trip(self):
        rng = np.random.default_rng(3)
        y_true = rng.integers(0, 2, 60)
        y_pred = rng.integers(0, 2, 60)
        sens = {"a": rng.integers(0, 2, 60), "b": rng.integers(0, 2, 60)}
        record = compute_record(y_true, y_pred, sens)
        again = MetricsRecord.from_flat_dict(record.to_flat_dict())
        assert again == record

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        y_true = rng.integers(0, 2, 50)
        y_pred = rng.integers(0, 2, 50)
        group = rng.integers(0, 2, 50)
        perm = rng.permutation(50)
        assert spd(y_pred, group) == spd(y_pred[perm], group[perm])
        assert eod(y_true, y_pred, group) == eod(y_true[perm], y_pred[perm], group[perm])
        assert aod(y_true, y_pred, group) == aod(y_true[perm], y_pred[perm], group[perm])

    def test_against_naive_oracle_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            n = int(rng.integers(8, 60))
            y_true = rng.integers(0, 2, n)
            y_pred = rng.integers(0, 2, n)
            group = rng.integers(0, 2, n)
            expected = naive_effectiveness(y_true.tolist(), y_pred.tolist())
            got = effectiveness(y_true, y_pred)
            for key in expected:
                assert abs(got[key] - expected[key]) < 1e-12
            if 0 < group.sum() < n:
                assert abs(spd(y_pred, group) - naive_spd(y_pred, group)) < 1e-12
                g0 = [i for i in range(n) if group[i] == 0]
                g1 = [i for i in range(n) if group[i] == 1]
                if y_true[group == 0].sum() and y_true[group == 1].sum():
                    expected_eod = abs(
                        naive_tpr(y_true, y_pred, g0) - naive_tpr(y_true, y_pred, g1)
                    )
                    assert abs(eod(y_true, y_pred, group) - expected_eod) < 1e-12

    def test_confusion_matches_naive(self):
        rng = np.random.default_rng(13)
        y_true = rng.integers(0, 2, 100)
        y_pred = rng.integers(0, 2, 100)
        c = GroupConfusion.from_predictions(y_true, y_pred)
        assert (c.tp, c.fp, c.tn, c.fn) == naive_counts(y_true, y_pred)
