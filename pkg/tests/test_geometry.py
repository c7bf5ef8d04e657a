import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folad.exceptions import ContractError
from folad.geometry import (
    BBox,
    BinaryMask,
    FrameDims,
    average_boxes,
    component_std,
    iou,
    iou_matrix,
    mask_iou,
    rasterize,
)

coord = st.floats(-500, 500, allow_nan=False)
size = st.floats(0.5, 300, allow_nan=False)
boxes = st.builds(BBox, coord, coord, size, size)


def brute_iou(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.cx - a.w / 2, a.cy - a.h / 2, a.cx + a.w / 2, a.cy + a.h / 2
    bx1, by1, bx2, by2 = b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


class TestBBox:
    @pytest.mark.parametrize("field", ["w", "h"])
    def test_rejects_non_positive_size(self, field):
        kw = dict(cx=0.0, cy=0.0, w=1.0, h=1.0)
        kw[field] = 0.0
        with pytest.raises(ContractError):
            BBox(**kw)

    def test_rejects_nan(self):
        with pytest.raises(ContractError):
            BBox(math.nan, 0.0, 1.0, 1.0)

    def test_may_leave_the_frame(self):
        assert BBox(-100.0, 5000.0, 10.0, 10.0).cx == -100.0

    def test_xyxy_round_trip(self):
        b = BBox(3.0, 4.0, 2.0, 6.0)
        assert BBox.from_xyxy(*b.xyxy()) == b

    def test_frame_dims_must_be_positive(self):
        with pytest.raises(ContractError):
            FrameDims(0, 10)


class TestIoU:
    def test_identity(self):
        b = BBox(7.5, -2.0, 3.0, 9.0)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BBox(1, 1, 2, 2), BBox(10, 10, 2, 2)) == 0.0

    def test_half_overlap_is_one_third(self):
        # intersection 2, union 6
        assert iou(BBox(1, 1, 2, 2), BBox(2, 1, 2, 2)) == pytest.approx(1 / 3, abs=1e-15)

    @given(boxes, boxes)
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0

    @given(boxes, boxes)
    def test_matches_brute_force(self, a, b):
        assert iou(a, b) == pytest.approx(brute_iou(a, b), abs=1e-12)

    @given(boxes, boxes)
    def test_one_only_for_identical(self, a, b):
        if iou(a, b) == 1.0:
            # exact up to the rounding of the overlap arithmetic
            np.testing.assert_allclose(a.as_array(), b.as_array(), atol=1e-9)

    @given(st.lists(boxes, min_size=1, max_size=5), st.lists(boxes, min_size=1, max_size=5))
    def test_matrix_agrees_with_scalar(self, xs, ys):
        m = iou_matrix(np.array([b.as_array() for b in xs]), np.array([b.as_array() for b in ys]))
        for i, a in enumerate(xs):
            for j, b in enumerate(ys):
                assert m[i, j] == pytest.approx(iou(a, b), abs=1e-12)


class TestAverage:
    def test_singleton(self):
        b = BBox(1.5, 2.5, 3.5, 4.5)
        assert average_boxes([b]) == b

    def test_midpoint(self):
        assert average_boxes([BBox(0, 0, 2, 2), BBox(2, 2, 4, 4)]) == BBox(1, 1, 3, 3)

    def test_component_mean(self):
        assert average_boxes([BBox(0, 0, 1, 1), BBox(0, 0, 1, 1), BBox(3, 0, 1, 1)]) == BBox(1, 0, 1, 1)

    def test_empty_raises(self):
        with pytest.raises(ContractError):
            average_boxes([])


class TestRasterize:
    dims = FrameDims(4, 4)

    def test_empty(self):
        assert rasterize([], self.dims).count() == 0

    def test_full_cover(self):
        assert rasterize([BBox(2, 2, 4, 4)], self.dims).count() == 16

    def test_corner_box(self):
        m = rasterize([BBox(1, 1, 2, 2)], self.dims)
        assert m.count() == 4
        # bits are indexed [row v, column u]
        assert {(u, v) for v, u in zip(*np.nonzero(m.bits))} == {(0, 0), (1, 0), (0, 1), (1, 1)}

    def test_clipped_to_frame(self):
        m = rasterize([BBox(-10, -10, 8, 8), BBox(50, 50, 2, 2)], self.dims)
        assert m.count() == 0

    def test_closed_box_includes_centers_on_the_edge(self):
        # box [0.5, 2.5] touches the centers of pixels 0, 1 and 2
        m = rasterize([BBox(1.5, 1.5, 2.0, 2.0)], self.dims)
        assert m.count() == 9

    @given(st.lists(st.builds(BBox, st.floats(-2, 6), st.floats(-2, 6), st.floats(0.1, 5), st.floats(0.1, 5)),
                    max_size=4))
    def test_matches_pixel_center_definition(self, bs):
        m = rasterize(bs, self.dims)
        for v in range(4):
            for u in range(4):
                px, py = u + 0.5, v + 0.5
                inside = any(b.cx - b.w / 2 <= px <= b.cx + b.w / 2 and b.cy - b.h / 2 <= py <= b.cy + b.h / 2
                             for b in bs)
                assert m.bits[v, u] == inside


class TestMaskIoU:
    dims = FrameDims(4, 4)

    def test_identity(self):
        m = rasterize([BBox(1, 2, 2, 3)], self.dims)
        assert mask_iou(m, m) == 1.0

    def test_empty_pair_is_perfect(self):
        e = rasterize([], self.dims)
        assert mask_iou(e, e) == 1.0

    def test_offset_squares(self):
        a = rasterize([BBox(1, 1, 2, 2)], self.dims)
        b = rasterize([BBox(2, 1, 2, 2)], self.dims)
        assert mask_iou(a, b) == pytest.approx(1 / 3, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            mask_iou(rasterize([], self.dims), rasterize([], FrameDims(5, 4)))

    def test_bits_shape_checked(self):
        with pytest.raises(ContractError):
            BinaryMask(self.dims, np.zeros((3, 4), dtype=bool))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_converges_to_box_iou(self, seed):
        rng = np.random.default_rng(seed)
        dims = FrameDims(512, 512)

        def box():
            w, h = rng.uniform(32, 256, size=2)
            return BBox(rng.uniform(w / 2, 512 - w / 2), rng.uniform(h / 2, 512 - h / 2), w, h)

        a, b = box(), box()
        assert abs(mask_iou(rasterize([a], dims), rasterize([b], dims)) - iou(a, b)) <= 0.05


class TestComponentStd:
    def test_identical(self):
        b = BBox(1, 2, 3, 4)
        assert component_std([b, b, b]) == (0.0, 0.0, 0.0, 0.0)

    def test_two_values(self):
        assert component_std([BBox(0, 0, 1, 1), BBox(2, 0, 1, 1)])[0] == pytest.approx(1.0, abs=1e-15)

    def test_three_values(self):
        s = component_std([BBox(0, 0, 1, 1), BBox(0, 0, 1, 1), BBox(3, 0, 1, 1)])
        assert s[0] == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_needs_two(self):
        with pytest.raises(ContractError):
            component_std([BBox(0, 0, 1, 1)])

    @given(st.lists(boxes, min_size=2, max_size=6), coord, coord)
    def test_translation_invariant(self, bs, dx, dy):
        a = component_std(bs)
        b = component_std([x.shifted(dx, dy) for x in bs])
        for u, v, scale in zip(a, b, (1000.0, 1000.0, 1.0, 1.0)):
            assert v == pytest.approx(u, abs=1e-9 * scale)
