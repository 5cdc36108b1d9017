import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrodet import aggregate, errors
from corrodet.aggregate import AggregationRule, TilePredictions


def preds_from_counts(counts, n_tiles=20):
    out = []
    for i, cnt in enumerate(counts):
        probs = np.zeros(n_tiles)
        probs[:cnt] = 1.0
        out.append(TilePredictions(image_id=f"img_{i:04d}", probs=probs))
    return out


class TestTilePredictions:
    def test_default_verdicts_threshold_half(self):
        p = TilePredictions(image_id="a", probs=[0.49, 0.5, 0.51, 0.0])
        assert p.verdicts.tolist() == [0, 1, 1, 0]

    def test_explicit_verdicts_kept(self):
        p = TilePredictions(image_id="a", probs=[0.9, 0.9], verdicts=[0, 1])
        assert p.verdicts.tolist() == [0, 1]

    def test_empty_rejected(self):
        with pytest.raises(errors.EmptyPrediction):
            TilePredictions(image_id="a", probs=[])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            TilePredictions(image_id="a", probs=[0.5, 1.2])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            TilePredictions(image_id="a", probs=[0.5, 0.5], verdicts=[1])


class TestClassifyImage:
    def test_strict_inequality(self):
        p = preds_from_counts([3])[0]
        assert aggregate.classify_image(p, AggregationRule(c=2)).verdict == 1
        assert aggregate.classify_image(p, AggregationRule(c=3)).verdict == 0

    def test_at_least_one_rule(self):
        zero, one = preds_from_counts([0, 1])
        rule = AggregationRule(c=0)
        assert aggregate.classify_image(zero, rule).verdict == 0
        assert aggregate.classify_image(one, rule).verdict == 1

    def test_fields(self):
        p = preds_from_counts([7], n_tiles=28)[0]
        out = aggregate.classify_image(p, AggregationRule(c=4))
        assert out.corroded_count == 7 and out.n_tiles == 28 and out.c == 4
        assert out.areal_percent == pytest.approx(25.0)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            AggregationRule(c=-1)

    @given(count=st.integers(0, 120), c=st.integers(0, 120))
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, count, c):
        p = preds_from_counts([count], n_tiles=120)[0]
        out = aggregate.classify_image(p, AggregationRule(c=c))
        assert out.verdict == (1 if sum(p.verdicts) > c else 0)

    def test_monotone_in_threshold(self, rng):
        p = TilePredictions(image_id="a", probs=rng.random(50))
        verdicts = [aggregate.classify_image(p, AggregationRule(c=c)).verdict for c in range(51)]
        assert all(a >= b for a, b in zip(verdicts, verdicts[1:]))


def test_areal_percent():
    p = preds_from_counts([5], n_tiles=20)[0]
    assert aggregate.areal_percent(p) == pytest.approx(25.0)


class TestTuneThreshold:
    def test_recovers_separating_threshold(self):
        # corroded images carry >= 12 hot tiles, intact <= 4: any c in [4, 11]
        # is perfect and the smallest wins
        preds = preds_from_counts([14, 12, 16, 2, 4, 0])
        labels = [1, 1, 1, 0, 0, 0]
        c_hat, curve = aggregate.tune_threshold(preds, labels)
        assert c_hat == 4
        assert dict(curve)[4] == pytest.approx(1.0)

    def test_smallest_c_on_ties(self):
        preds = preds_from_counts([10, 0])
        c_hat, _ = aggregate.tune_threshold(preds, [1, 0])
        assert c_hat == 0

    def test_curve_covers_full_range(self):
        preds = preds_from_counts([3, 1], n_tiles=6)
        _, curve = aggregate.tune_threshold(preds, [1, 0])
        assert [c for c, _ in curve] == list(range(0, 7))

    def test_accuracy_metric(self):
        preds = preds_from_counts([9, 1])
        c_hat, curve = aggregate.tune_threshold(preds, [1, 0], metric="accuracy")
        assert dict(curve)[c_hat] == pytest.approx(1.0)

    def test_explicit_range(self):
        preds = preds_from_counts([9, 1])
        _, curve = aggregate.tune_threshold(preds, [1, 0], c_range=(2, 5))
        assert [c for c, _ in curve] == [2, 3, 4, 5]

    def test_empty_rejected(self):
        with pytest.raises(errors.EmptyValidation):
            aggregate.tune_threshold([], [])
        with pytest.raises(errors.EmptyValidation):
            aggregate.tune_threshold(preds_from_counts([1]), [1, 0])

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            aggregate.tune_threshold(preds_from_counts([1]), [1], metric="auc")

    def test_all_intact_scores_zero_f1(self):
        preds = preds_from_counts([0, 0])
        c_hat, curve = aggregate.tune_threshold(preds, [0, 0])
        assert all(v == 0.0 for _, v in curve)
        assert c_hat == 0
