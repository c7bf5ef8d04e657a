import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folad.exceptions import ContractError
from folad.features import FEATURE_SIZE, FlowLayer, LayeredFlow, roi_pool, zero_flow
from folad.geometry import BBox, FrameDims
from folad.model import HiddenState, ModelConfig, ModelParams
from folad.motion import EgoDelta
from folad.tracking import TrackerRegistry, associate, fol_track_step

from helpers import persistence_params

DIMS = FrameDims(640, 360)
STILL = [EgoDelta(0.0, 0.0, 0.0)] * 5


def small_params(seed=0, horizon=5):
    return ModelParams.initialize(ModelConfig(6, 4, horizon, DIMS), np.random.default_rng(seed))


def noisy_params(seed=0, horizon=5):
    # non-zero heads so predictions move away from the inputs
    p = small_params(seed, horizon)
    rng = np.random.default_rng(seed + 100)
    p.tensors["head.W"] = rng.normal(0, 0.5, size=p["head.W"].shape)
    p.tensors["head.b"] = rng.normal(0, 0.2, size=4)
    return p


def observe(boxes: dict[int, BBox], flow=None):
    flow = flow or zero_flow(DIMS)
    return {tid: (b, roi_pool(flow, b)) for tid, b in boxes.items()}


def registry_with(boxes: dict[int, BBox], params=None, max_age=5):
    reg = TrackerRegistry(horizon=5, max_age=max_age)
    fol_track_step(reg, observe(boxes), zero_flow(DIMS), STILL, params or persistence_params())
    return reg


class TestAssociate:
    def test_empty_detections(self):
        reg = registry_with({1: BBox(100, 100, 20, 20), 2: BBox(300, 100, 20, 20)})
        a = associate([], reg)
        assert a.matches == [] and a.unmatched_trackers == [1, 2] and a.unmatched_detections == []

    def test_empty_registry(self):
        a = associate([BBox(1, 1, 2, 2)], TrackerRegistry())
        assert a.unmatched_detections == [0]

    def test_identical_boxes(self):
        boxes = {1: BBox(100, 100, 20, 20), 2: BBox(300, 100, 20, 20), 3: BBox(500, 200, 30, 10)}
        reg = registry_with(boxes)
        a = associate([boxes[3], boxes[1], boxes[2]], reg)
        assert a.matches == [(1, 1), (2, 2), (3, 0)]
        assert a.unmatched_detections == [] and a.unmatched_trackers == []

    def test_two_detections_one_tracker(self):
        reg = registry_with({1: BBox(100, 100, 20, 20)})
        # IoU 0.6 and IoU 1/3 against the tracker
        near, far = BBox(105, 100, 20, 20), BBox(110, 100, 20, 20)
        a = associate([far, near], reg)
        assert a.matches == [(1, 1)]
        assert a.unmatched_detections == [0]

    def test_below_threshold(self):
        reg = registry_with({1: BBox(100, 100, 20, 20)})
        a = associate([BBox(112, 100, 20, 20)], reg, iou_threshold=0.3)
        assert a.matches == [] and a.unmatched_trackers == [1]

    def test_ties_prefer_lower_tracker_id(self):
        box = BBox(100, 100, 20, 20)
        reg = registry_with({4: box, 2: box})
        a = associate([box], reg)
        assert a.matches == [(2, 0)] and a.unmatched_trackers == [4]

    def test_ties_prefer_lower_detection_index(self):
        box = BBox(100, 100, 20, 20)
        reg = registry_with({1: box})
        a = associate([box, box], reg)
        assert a.matches == [(1, 0)] and a.unmatched_detections == [1]

    def test_uses_one_step_prediction(self):
        p = persistence_params()
        p.tensors["head.b"][0] = 10.0 / (0.05 * DIMS.width)  # +10 px per step
        reg = registry_with({1: BBox(100, 100, 20, 20)}, params=p)
        a = associate([BBox(110, 100, 20, 20)], reg, iou_threshold=0.99)
        assert a.matches == [(1, 0)]

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.5])
    def test_threshold_range(self, bad):
        with pytest.raises(ContractError):
            associate([], TrackerRegistry(), iou_threshold=bad)


class TestStep:
    def test_all_observed(self):
        boxes = {1: BBox(100, 100, 20, 20), 2: BBox(300, 100, 20, 20)}
        reg = registry_with(boxes)
        fol_track_step(reg, observe(boxes), zero_flow(DIMS), STILL, persistence_params())
        assert len(reg) == 2 and all(t.age == 0 for t in reg)

    def test_new_tracker_predicts_immediately(self):
        reg = registry_with({7: BBox(100, 100, 20, 20)})
        assert reg[7].predictions.made_at == 0
        assert len(reg[7].history) == 1

    def test_removed_after_max_age(self):
        reg = registry_with({1: BBox(100, 100, 20, 20)}, max_age=2)
        for expected_age in (1, 2):
            fol_track_step(reg, {}, zero_flow(DIMS), STILL, persistence_params())
            assert reg[1].age == expected_age
        fol_track_step(reg, {}, zero_flow(DIMS), STILL, persistence_params())
        assert 1 not in reg

    def test_missed_box_is_previous_first_prediction(self):
        p = noisy_params()
        reg = registry_with({1: BBox(300, 180, 40, 30)}, params=p)
        expected = reg[1].predictions.boxes[0]
        fol_track_step(reg, {}, zero_flow(DIMS), STILL, p)
        assert reg[1].box == expected

    def test_missed_feature_is_pooled_at_predicted_box(self):
        # a flow layer only under the predicted box changes the outcome
        p = noisy_params()
        reg_a = registry_with({1: BBox(300, 180, 40, 30)}, params=p)
        reg_b = registry_with({1: BBox(300, 180, 40, 30)}, params=p)
        guess = reg_a[1].predictions.boxes[0]
        layered = LayeredFlow(DIMS, layers=(FlowLayer(guess, 5.0, -3.0),))
        fol_track_step(reg_a, {}, layered, STILL, p)
        fol_track_step(reg_b, {}, zero_flow(DIMS), STILL, p)
        assert reg_a[1].hidden != reg_b[1].hidden

    def test_hidden_states_are_per_object(self):
        p = small_params(3)
        a, b = BBox(100, 100, 20, 20), BBox(400, 250, 60, 40)
        both = registry_with({1: a, 2: b}, params=p)
        alone = registry_with({2: b}, params=p)
        np.testing.assert_allclose(both[2].hidden.h_loc, alone[2].hidden.h_loc, atol=1e-14)
        np.testing.assert_allclose(both[2].hidden.h_mot, alone[2].hidden.h_mot, atol=1e-14)

    def test_reborn_id_starts_fresh(self):
        p = small_params(1)
        box = BBox(100, 100, 20, 20)
        reg = registry_with({1: box}, params=p, max_age=1)
        fol_track_step(reg, {}, zero_flow(DIMS), STILL, p)
        fol_track_step(reg, {}, zero_flow(DIMS), STILL, p)
        assert 1 not in reg
        fol_track_step(reg, observe({1: box}), zero_flow(DIMS), STILL, p)
        fresh = registry_with({1: box}, params=p)
        assert reg[1].hidden == fresh[1].hidden
        assert len(reg[1].history) == 1

    def test_ego_length_checked(self):
        with pytest.raises(ContractError):
            fol_track_step(TrackerRegistry(), {}, zero_flow(DIMS), STILL[:3], persistence_params())

    def test_empty_step(self):
        reg = TrackerRegistry()
        fol_track_step(reg, {}, zero_flow(DIMS), STILL, persistence_params())
        assert len(reg) == 0 and reg.frame == 0

    def test_feature_shape(self):
        reg = TrackerRegistry()
        obs = {1: (BBox(10, 10, 4, 4), np.zeros(FEATURE_SIZE))}
        fol_track_step(reg, obs, zero_flow(DIMS), STILL, persistence_params())
        assert reg[1].hidden == HiddenState.zeros(4)


schedules = st.lists(st.lists(st.booleans(), min_size=3, max_size=3), min_size=1, max_size=18)


@settings(max_examples=40, deadline=None)
@given(schedules, st.integers(1, 4))
def test_registry_follows_the_reference_state_machine(schedule, max_age):
    p = noisy_params(2)
    base = {1: BBox(100, 100, 30, 20), 2: BBox(300, 150, 40, 40), 3: BBox(500, 250, 20, 50)}
    reg = TrackerRegistry(horizon=5, max_age=max_age)
    ages: dict[int, int] = {}
    for t, seen in enumerate(schedule):
        observed = {tid: base[tid].shifted(2.0 * t) for tid, s in zip((1, 2, 3), seen) if s}
        before = {tid: (reg[tid].predictions.boxes[0], len(reg[tid].history)) for tid in reg.trackers}

        # reference: births and resets on observation, otherwise age + 1 and drop past max_age
        for tid in list(ages):
            if tid not in observed:
                ages[tid] += 1
                if ages[tid] > max_age:
                    del ages[tid]
        for tid in observed:
            ages[tid] = 0

        fol_track_step(reg, observe(observed), zero_flow(DIMS), STILL, p)
        assert {tid: tr.age for tid, tr in reg.trackers.items()} == ages
        for tid, tr in reg.trackers.items():
            assert tr.age <= max_age
            assert len(tr.history) <= 5
            made = [ps.made_at for ps in tr.history]
            assert made == list(range(t, t - len(made), -1))
            if tid in observed:
                assert tr.box == observed[tid]
            else:
                assert tr.box == before[tid][0]
                assert len(tr.history) == min(before[tid][1] + 1, 5)
