"""Behaviour of small models trained on the packaged synthetic scenes."""

import pytest

from folad.benchmark import constant_velocity_config, occlude
from folad.estimators import FutureObjectLocalizer
from folad.geometry import iou
from folad.model.network import ModelParams, ego_predict
from folad.motion import EgoDelta
from folad.pipeline import TrackingOptions, track_video
from folad.synthetic import generate


@pytest.fixture(scope="module")
def held_out():
    return [generate(constant_velocity_config(900 + i, n_objects=(1, 1))) for i in range(20)]


def test_constant_velocity_fde(cv_localizer, held_out):
    r = cv_localizer.displacement(held_out)
    assert r.n_sets > 300
    assert r.fde < 2.0


def test_beats_persistence(cv_localizer, held_out):
    zero = FutureObjectLocalizer.from_params(ModelParams.zeros(cv_localizer.params_.config))
    assert cv_localizer.displacement(held_out).ade < 0.2 * zero.displacement(held_out).ade


def test_stationary_ego(cv_localizer):
    # the constant-velocity scenes keep the ego vehicle parked
    out = ego_predict(cv_localizer.params_, [EgoDelta(0.0, 0.0, 0.0)] * 10)
    assert len(out) == 5
    for d in out:
        assert max(abs(d.dphi), abs(d.dx), abs(d.dz)) < 1e-2


@pytest.mark.parametrize("v", [0.6, 1.0, 1.4])
def test_constant_speed_ego(ego_localizer, v):
    history = [EgoDelta(0.0, 0.0, 0.0)] + [EgoDelta(0.0, 0.0, v)] * 10
    out = ego_predict(ego_localizer.params_, history)
    for j, d in enumerate(out, start=1):
        assert d.dz == pytest.approx(j * v, rel=0.10)
        assert abs(d.dx) < 0.1 * v


def test_occlusion_recovery(cv_localizer):
    """Two missed frames, then the stored forecast still overlaps the reappearing object."""
    checked = 0
    for seed in range(950, 970):
        video = generate(constant_velocity_config(seed, n_objects=(1, 1)))
        boxes = video.tracks(truth=True).get(0, {})
        if not all(t in boxes for t in range(10, 20)):
            continue
        hidden = occlude(video, 0, [14, 15])
        made = track_video(cv_localizer.params_, hidden, TrackingOptions(max_age=5, use_track_ids=True))
        sets = {ps.made_at: ps for ps in made[0]}
        # made at frame 15 while the object was still hidden
        assert iou(sets[15].boxes[0], boxes[16]) >= 0.5
        checked += 1
    assert checked >= 5
