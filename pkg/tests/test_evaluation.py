import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from folad.evaluation import (
    DisplacementResult,
    corpus_auc,
    displacement_metrics,
    frame_auc,
    frame_labels,
    merge_displacement,
    per_video_auc,
    roc_curve,
)
from folad.exceptions import ContractError
from folad.geometry import BBox
from folad.motion import PredictionSet
from folad.video import AnomalyAnnotation


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def track(n=20, vx=3.0):
    return {t: BBox(100 + vx * t, 50, 20, 10) for t in range(n)}


def sets_from(truth, horizon=5, shift=0.0, frames=range(0, 10)):
    return [PredictionSet(t, tuple(truth[t + j].shifted(shift) for j in range(1, horizon + 1))) for t in frames]


class TestDisplacement:
    def test_perfect(self):
        truth = track()
        r = displacement_metrics(sets_from(truth), truth)
        assert (r.fde, r.ade, r.fiou, r.n_sets, r.n_skipped) == (0.0, 0.0, 1.0, 10, 0)

    def test_constant_offset(self):
        truth = track()
        r = displacement_metrics(sets_from(truth, shift=3.0), truth)
        assert r.fde == pytest.approx(3.0) and r.ade == pytest.approx(3.0)
        # 20 px wide boxes shifted by 3: overlap 17 / union 23
        assert r.fiou == pytest.approx(17 / 23)

    def test_missing_truth_is_skipped(self):
        truth = track(12)
        r = displacement_metrics(sets_from(truth, frames=range(0, 7)) +
                                 [PredictionSet(8, tuple(truth[11] for _ in range(5)))], truth)
        assert r.n_sets == 7 and r.n_skipped == 1

    def test_ade_averages_every_step(self):
        truth = {t: BBox(0, 0, 10, 10) for t in range(3)}
        ps = PredictionSet(0, (BBox(1, 0, 10, 10), BBox(0, 3, 10, 10)))
        r = displacement_metrics([ps], truth)
        assert r.ade == 2.0 and r.fde == 3.0

    def test_nothing_scorable(self):
        r = displacement_metrics([], {})
        assert math.isnan(r.ade) and r.n_sets == 0

    def test_merge_weights_by_sets(self):
        a = DisplacementResult(1.0, 1.0, 1.0, 1)
        b = DisplacementResult(4.0, 2.0, 0.5, 3, 2)
        m = merge_displacement([a, b, DisplacementResult(math.nan, math.nan, math.nan, 0, 1)], 5)
        assert (m.fde, m.ade, m.fiou, m.n_sets, m.n_skipped) == (3.25, 1.75, 0.625, 4, 3)


class TestRoc:
    def test_perfect(self):
        labels = [0, 1, 1, 0, 1]
        assert roc_curve(labels, labels).auc == 1.0

    def test_constant(self):
        assert roc_curve([0.3] * 6, [0, 1, 0, 1, 1, 0]).auc == 0.5

    def test_worked_example(self):
        assert roc_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]).auc == 0.75

    def test_curve_shape(self):
        r = roc_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert r.fpr.tolist() == [0.0, 0.0, 0.5, 0.5, 1.0]
        assert r.tpr.tolist() == [0.0, 0.5, 0.5, 1.0, 1.0]
        assert r.thresholds[0] == np.inf

    @pytest.mark.parametrize("labels", [[0, 0, 0], [1, 1]])
    def test_one_class(self, labels):
        with pytest.raises(ContractError):
            roc_curve([0.1] * len(labels), labels)

    def test_bad_inputs(self):
        with pytest.raises(ContractError):
            roc_curve([0.1, 0.2], [0, 2])
        with pytest.raises(ContractError):
            roc_curve([0.1, np.nan], [0, 1])
        with pytest.raises(ContractError):
            roc_curve([0.1], [0, 1])

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.integers(0, 8), st.booleans()), min_size=2, max_size=60))
    def test_rank_statistic(self, rows):
        scores = [s / 8 for s, _ in rows]
        labels = [int(y) for _, y in rows]
        if len(set(labels)) < 2:
            return
        auc = roc_curve(scores, labels).auc
        assert abs(auc - brute_auc(scores, labels)) < 1e-9
        assert auc == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)

    @settings(max_examples=100)
    @given(st.lists(st.integers(-50, 50), min_size=2, max_size=40), st.data())
    def test_monotone_invariance(self, scores, data):
        # integer scores keep the transforms strictly monotone in floating point
        labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
        if len(set(labels)) < 2:
            return
        s = np.array(scores, dtype=float)
        base = roc_curve(s, labels).auc
        assert roc_curve(3 * s + 1, labels).auc == base
        assert roc_curve(s ** 3, labels).auc == base
        assert roc_curve(np.exp(s / 10), labels).auc == base

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=40), st.data())
    def test_monotone_curve(self, scores, data):
        labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
        if len(set(labels)) < 2:
            return
        r = roc_curve(scores, labels)
        assert np.all(np.diff(r.fpr) >= 0) and np.all(np.diff(r.tpr) >= 0)
        assert r.fpr[-1] == 1.0 and r.tpr[-1] == 1.0
        assert 0.0 <= r.auc <= 1.0


class TestLabels:
    def test_single_window(self):
        assert frame_labels(8, [AnomalyAnnotation(2, 4)]).tolist() == [0, 0, 1, 1, 1, 0, 0, 0]

    def test_no_annotation(self):
        assert not frame_labels(5, [None]).any()

    @given(st.lists(st.tuples(st.integers(0, 29), st.integers(0, 10)), max_size=5))
    def test_union_counts(self, spans):
        anns = [AnomalyAnnotation(s, min(s + d, 29)) for s, d in spans]
        covered = set()
        for a in anns:
            covered.update(range(a.start, a.end + 1))
        labels = frame_labels(30, anns)
        assert labels.sum() == len(covered)
        if len(anns) == 1:
            assert labels.sum() == anns[0].end - anns[0].start + 1

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            frame_labels(5, [AnomalyAnnotation(3, 5)])


class TestCorpus:
    def test_frame_auc(self):
        assert frame_auc([0.0, 0.1, 0.9, 0.8, 0.2], [AnomalyAnnotation(2, 3)]).auc == 1.0

    def test_concatenates_videos(self):
        a = np.array([0.1, 0.9, 0.2])
        b = np.array([0.3, 0.4, 0.5, 0.95])
        anns = [AnomalyAnnotation(1, 1), AnomalyAnnotation(3, 3)]
        expected = brute_auc(np.r_[a, b], [0, 1, 0, 0, 0, 0, 1])
        assert corpus_auc([a, b], anns).auc == pytest.approx(expected, abs=1e-12)

    def test_per_video(self):
        out = per_video_auc([np.array([0.1, 0.9]), np.array([0.5, 0.2])], [AnomalyAnnotation(1, 1), None])
        assert out[0] == 1.0 and math.isnan(out[1])

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            corpus_auc([np.zeros(3)], [])
