import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrodet import errors, metrics
from corrodet.metrics import ConfusionCounts


class TestConfusion:
    def test_hand_case(self):
        cc = metrics.confusion([1, 0, 1, 1, 0], [1, 0, 0, 1, 1])
        assert (cc.tn, cc.fp, cc.fn, cc.tp) == (1, 1, 1, 2)
        assert cc.total == 5

    def test_length_mismatch(self):
        with pytest.raises(errors.LengthMismatch):
            metrics.confusion([1], [1, 0])
        with pytest.raises(errors.LengthMismatch):
            metrics.confusion([], [])

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=200))
    @settings(max_examples=50, deadline=None)
    def test_cells_partition_total(self, pairs):
        preds, labels = zip(*pairs)
        cc = metrics.confusion(list(preds), list(labels))
        assert cc.total == len(pairs)
        assert cc.tp + cc.fn == sum(labels)
        assert cc.fp + cc.tn == len(pairs) - sum(labels)


class TestRates:
    def test_textbook_values(self):
        rm = metrics.rates(ConfusionCounts(tn=50, fp=10, fn=5, tp=35))
        assert rm.tpr == pytest.approx(35 / 40)
        assert rm.fpr == pytest.approx(10 / 60)
        assert rm.ppv == pytest.approx(35 / 45)
        assert rm.f1 == pytest.approx(2 * (35 / 45) * (35 / 40) / ((35 / 45) + (35 / 40)))

    def test_perfect_classifier(self):
        rm = metrics.rates(ConfusionCounts(tn=3, fp=0, fn=0, tp=7))
        assert (rm.tpr, rm.fpr, rm.ppv, rm.f1) == (1.0, 0.0, 1.0, 1.0)

    def test_no_positives_flags(self):
        rm = metrics.rates(ConfusionCounts(tn=4, fp=0, fn=0, tp=0))
        assert not rm.tpr_defined and not rm.ppv_defined and not rm.f1_defined
        assert rm.tpr == rm.ppv == rm.f1 == 0.0
        assert rm.fpr == 0.0 and rm.fpr_defined

    def test_no_negatives_flags(self):
        rm = metrics.rates(ConfusionCounts(tn=0, fp=0, fn=1, tp=3))
        assert not rm.fpr_defined and rm.tpr_defined

    def test_zero_f1_when_nothing_found(self):
        rm = metrics.rates(ConfusionCounts(tn=5, fp=0, fn=5, tp=0))
        assert rm.f1 == 0.0 and not rm.f1_defined


class TestRoc:
    def test_perfect_separation(self):
        curve = metrics.roc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert curve.auc == pytest.approx(1.0)
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_inverted_scores(self):
        curve = metrics.roc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])
        assert curve.auc == pytest.approx(0.0)

    def test_all_tied_is_chance(self):
        curve = metrics.roc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
        assert curve.auc == pytest.approx(0.5)
        assert curve.points == [(0.0, 0.0), (1.0, 1.0)]

    def test_single_class_raises(self):
        with pytest.raises(errors.SingleClass):
            metrics.roc([0.4, 0.6], [1, 1])
        with pytest.raises(errors.SingleClass):
            metrics.roc([0.4, 0.6], [0, 0])

    def test_length_mismatch(self):
        with pytest.raises(errors.LengthMismatch):
            metrics.roc([0.5], [1, 0])

    def test_auc_equals_rank_statistic(self, rng):
        # AUC with tie-grouped trapezoids equals the Mann-Whitney U statistic
        for _ in range(20):
            n = int(rng.integers(4, 60))
            scores = np.round(rng.random(n), 2)  # coarse grid forces ties
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                continue
            curve = metrics.roc(scores, labels)
            pos = scores[labels == 1]
            neg = scores[labels == 0]
            wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
            assert curve.auc == pytest.approx(wins / (len(pos) * len(neg)), abs=1e-12)

    def test_monotone_points(self, rng):
        curve = metrics.roc(rng.random(100), rng.integers(0, 2, size=100))
        xs = [p[0] for p in curve.points]
        ys = [p[1] for p in curve.points]
        assert xs == sorted(xs) and ys == sorted(ys)

    def test_csv_round_trip(self, tmp_path, rng):
        curve = metrics.roc(rng.random(30), rng.integers(0, 2, size=30))
        path = tmp_path / "roc.csv"
        metrics.save_roc_csv(curve, str(path))
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "fpr,tpr"
        assert len(rows) == len(curve.points) + 1
        x, y = map(float, rows[1].split(","))
        assert (x, y) == curve.points[0]


class TestReportText:
    def test_contains_all_cells_and_rates(self):
        cc = ConfusionCounts(tn=7004, fp=138, fn=205, tp=619)
        text = metrics.report_text(cc, metrics.rates(cc), title="tiles")
        assert "tiles" in text
        for token in ("7004", "138", "205", "619", "0.7512", "0.0193", "0.8177", "0.7830"):
            assert token in text

    def test_undefined_marker(self):
        cc = ConfusionCounts(tn=4, fp=0, fn=0, tp=0)
        text = metrics.report_text(cc, metrics.rates(cc))
        assert "(undefined)" in text
