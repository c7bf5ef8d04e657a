import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from folad.benchmark import constant_velocity_config
from folad.estimators import FOLAnomalyDetector, FutureObjectLocalizer
from folad.geometry import FrameDims
from folad.scoring import METHODS
from folad.synthetic import AnomalySpec, generate

from helpers import persistence_params


@pytest.fixture(scope="module")
def videos():
    return [generate(constant_velocity_config(60 + i, n_frames=30)) for i in range(3)]


@pytest.fixture(scope="module")
def small(videos):
    return FutureObjectLocalizer(hidden_size=8, ego_hidden_size=4, n_epochs=3, learning_rate=2e-3,
                                 random_state=0).fit(videos)


def test_params_round_trip():
    est = FutureObjectLocalizer(hidden_size=8, learning_rate=3e-3)
    assert est.get_params()["hidden_size"] == 8
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(horizon=3)
    assert est.horizon == 3 and twin.horizon == 5


def test_default_is_full_scale():
    p = FutureObjectLocalizer().get_params()
    assert (p["hidden_size"], p["ego_hidden_size"], p["learning_rate"], p["batch_size"]) == (512, 128, 1e-4, 32)


def test_not_fitted(videos):
    with pytest.raises(NotFittedError):
        FutureObjectLocalizer().predict(videos)
    with pytest.raises(NotFittedError):
        FOLAnomalyDetector().transform(videos)


@pytest.mark.parametrize("bad", [dict(hidden_size=0), dict(learning_rate=-1.0), dict(decay=1.0),
                                 dict(ego_weight=-0.5), dict(window=2.5)])
def test_invalid_hyperparameters(videos, bad):
    with pytest.raises(ValueError):
        FutureObjectLocalizer(n_epochs=1, **bad).fit(videos)


def test_fit_sets_attributes(small, videos):
    assert len(small.loss_curve_) == 3
    assert small.n_windows_ > 0 and small.dims_ == videos[0].dims
    assert small.params_.config.hidden_size == 8


def test_fit_is_seeded(videos, small):
    again = clone(small).fit(videos)
    assert again.params_.equal(small.params_)
    assert again.loss_curve_ == small.loss_curve_


def test_predict_shape(small, videos):
    out = small.predict(videos[:1])
    assert len(out) == 1
    for tid, sets in out[0].items():
        assert all(len(ps.boxes) == 5 for ps in sets)
        made = [ps.made_at for ps in sets]
        assert made == sorted(made)


def test_score_is_negative_ade(small, videos):
    assert small.score(videos) == pytest.approx(-small.displacement(videos).ade)


def test_persistence_localizer():
    videos = [generate(constant_velocity_config(1, n_frames=20, object_speed=(0.0, 0.0)))]
    est = FutureObjectLocalizer.from_params(persistence_params(dims=FrameDims(1280, 720)))
    assert est.displacement(videos).ade == pytest.approx(0.0, abs=1e-9)


@pytest.fixture(scope="module")
def stop_videos():
    return [generate(constant_velocity_config(s, n_frames=40, n_objects=(1, 1), object_speed=(6.0, 6.0),
                                              anomaly=AnomalySpec("sudden_stop", 20))) for s in (3, 4)]


class TestDetector:
    def test_prefit_requires_localizer(self, stop_videos):
        with pytest.raises(ValueError):
            FOLAnomalyDetector(prefit=True).fit(stop_videos)

    def test_transform_columns(self, small, stop_videos):
        det = FOLAnomalyDetector(small, prefit=True).fit(stop_videos)
        X = det.transform(stop_videos)
        assert X.shape == (80, len(METHODS))
        assert np.all((X >= 0) & (X <= 1))
        col = METHODS.index("max-std")
        np.testing.assert_array_equal(det.decision_function(stop_videos), X[:, col])

    def test_evaluate(self, small, stop_videos):
        aucs = FOLAnomalyDetector(small, prefit=True).fit(stop_videos).evaluate(stop_videos)
        assert set(aucs) == set(METHODS)
        assert all(0.0 <= a <= 1.0 and not math.isnan(a) for a in aucs.values())

    def test_fit_clones_the_localizer(self, videos):
        base = FutureObjectLocalizer(hidden_size=4, ego_hidden_size=4, n_epochs=1, random_state=0)
        det = FOLAnomalyDetector(base).fit(videos)
        assert hasattr(det.localizer_, "params_") and not hasattr(base, "params_")

    def test_bad_method(self, small, videos):
        with pytest.raises(ValueError):
            FOLAnomalyDetector(small, method="median", prefit=True).fit(videos)

    def test_get_params_nested(self, small):
        det = FOLAnomalyDetector(small, method="avg-iou")
        assert det.get_params()["localizer__hidden_size"] == 8
