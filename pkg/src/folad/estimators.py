"""scikit-learn style front end: a trainable localizer and the anomaly detector on top."""

from __future__ import annotations

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from .evaluation import DisplacementResult, corpus_auc, displacement_metrics, merge_displacement
from .model.network import ModelConfig, ModelParams
from .model.training import train
from .model.windows import build_windows
from .pipeline import TrackingOptions, score_video, track_video
from .scoring import METHODS, ScoreSeries
from .validation import (
    check_fraction,
    check_method,
    check_positive,
    check_positive_int,
    check_videos,
)

log = logging.getLogger(__name__)


class FutureObjectLocalizer(BaseEstimator):
    """Encoder-decoder box forecaster with an ego-motion sub-model, trained on normal videos.

    ``fit`` takes a list of videos; ``predict`` returns, per video, each track's
    prediction sets (tracking by detection ids).
    """

    def __init__(self, hidden_size=512, ego_hidden_size=128, horizon=5, n_epochs=50, batch_size=32,
                 learning_rate=1e-4, decay=0.99, eps=1e-8, ego_weight=1.0, window=20, stride=10,
                 random_state=None):
        self.hidden_size = hidden_size
        self.ego_hidden_size = ego_hidden_size
        self.horizon = horizon
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.decay = decay
        self.eps = eps
        self.ego_weight = ego_weight
        self.window = window
        self.stride = stride
        self.random_state = random_state

    def _validate(self):
        for name in ("hidden_size", "ego_hidden_size", "horizon", "n_epochs", "batch_size", "window", "stride"):
            check_positive_int(getattr(self, name), name)
        check_positive(self.learning_rate, "learning_rate")
        check_positive(self.eps, "eps")
        check_fraction(self.decay, "decay", open_interval=True)
        if self.ego_weight < 0:
            raise ValueError(f"ego_weight must be non-negative, got {self.ego_weight}")

    def fit(self, X, y=None, on_epoch=None):
        self._validate()
        videos = check_videos(X)
        dims = videos[0].dims
        config = ModelConfig(self.hidden_size, self.ego_hidden_size, self.horizon, dims)
        rng = np.random.default_rng(self.random_state)
        batch = build_windows(videos, self.horizon, self.window, self.stride)
        params = ModelParams.initialize(config, rng)
        log.info("training on %d windows from %d videos", len(batch), len(videos))
        params, history = train(params, batch, epochs=self.n_epochs, batch_size=self.batch_size,
                                lr=self.learning_rate, decay=self.decay, eps=self.eps,
                                ego_weight=self.ego_weight, rng=rng, on_epoch=on_epoch)
        self.params_ = params
        self.loss_curve_ = history
        self.n_windows_ = len(batch)
        self.dims_ = dims
        return self

    @classmethod
    def from_params(cls, params: ModelParams, **kwargs) -> "FutureObjectLocalizer":
        c = params.config
        est = cls(hidden_size=c.hidden_size, ego_hidden_size=c.ego_hidden_size, horizon=c.horizon, **kwargs)
        est.params_ = params
        est.loss_curve_ = []
        est.n_windows_ = 0
        est.dims_ = c.dims
        return est

    def predict(self, X, max_age: int = 5):
        check_is_fitted(self, "params_")
        opts = TrackingOptions(max_age=max_age, use_track_ids=True)
        return [track_video(self.params_, v, opts) for v in check_videos(X)]

    def displacement(self, X, max_age: int = 5) -> DisplacementResult:
        """FDE/ADE/FIOU against each video's noise-free boxes."""
        videos = check_videos(X)
        results = []
        for v, made in zip(videos, self.predict(videos, max_age)):
            truth = v.tracks(truth=True)
            for tid, sets in made.items():
                results.append(displacement_metrics(sets, truth.get(tid, {})))
        return merge_displacement(results, self.horizon)

    def score(self, X, y=None) -> float:
        """Negative ADE, so larger is better."""
        ade = self.displacement(X).ade
        return -ade if not math.isnan(ade) else -math.inf


class FOLAnomalyDetector(TransformerMixin, BaseEstimator):
    """Per-frame anomaly scores from a future object localizer.

    ``transform`` returns one row per frame (videos concatenated) and one
    column per scoring method, in ``METHODS`` order, normalized per video.
    ``decision_function`` returns the column of ``method``.
    """

    def __init__(self, localizer=None, method="max-std", max_age=5, iou_threshold=0.3,
                 use_track_ids=False, pixel_units=False, prefit=False):
        self.localizer = localizer
        self.method = method
        self.max_age = max_age
        self.iou_threshold = iou_threshold
        self.use_track_ids = use_track_ids
        self.pixel_units = pixel_units
        self.prefit = prefit

    def fit(self, X, y=None):
        check_method(self.method)
        check_positive_int(self.max_age, "max_age")
        check_fraction(self.iou_threshold, "iou_threshold", open_interval=True)
        if self.prefit:
            if self.localizer is None:
                raise ValueError("prefit=True needs a fitted localizer")
            check_is_fitted(self.localizer, "params_")
            self.localizer_ = self.localizer
        else:
            base = self.localizer if self.localizer is not None else FutureObjectLocalizer()
            self.localizer_ = clone(base).fit(X)
        return self

    @property
    def options_(self) -> TrackingOptions:
        return TrackingOptions(self.max_age, self.iou_threshold, self.use_track_ids)

    def score_videos(self, X, methods=METHODS) -> list[dict[str, ScoreSeries]]:
        check_is_fitted(self, "localizer_")
        params = self.localizer_.params_
        return [score_video(params, v, methods, self.options_, self.pixel_units) for v in check_videos(X)]

    def transform(self, X):
        series = self.score_videos(X)
        cols = [np.concatenate([np.asarray(s[m].normalized) for s in series]) for m in METHODS]
        return np.column_stack(cols)

    def decision_function(self, X):
        check_method(self.method)
        series = self.score_videos(X, (self.method,))
        return np.concatenate([np.asarray(s[self.method].normalized) for s in series])

    def evaluate(self, X) -> dict[str, float]:
        """Corpus-level frame AUC for every method on annotated videos."""
        videos = check_videos(X)
        series = self.score_videos(videos)
        ann = [v.annotation for v in videos]
        return {m: corpus_auc([s[m] for s in series], ann).auc for m in METHODS}
