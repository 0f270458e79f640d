import math

import pytest
from hypothesis import given, strategies as st

from cytoscreen.core import (
    CATEGORY_NAMES,
    BBox,
    Category,
    ContractViolation,
    Detection,
    fuse_score,
    iou,
    one_hot_scores,
)
from oracles import pixel_iou


class TestCategory:
    def test_taxonomy(self):
        assert [c.name for c in Category] == [
            "NORMAL", "ASCUS", "ASCH", "LSIL", "HSIL", "AGC", "ADE", "VAG", "MON", "DYS",
        ]
        assert sum(c.is_hard for c in Category) == 4
        assert sum(c.is_positive for c in Category) == 6
        assert {c for c in Category if c.is_hard} == {
            Category.ASCUS, Category.ASCH, Category.LSIL, Category.HSIL,
        }

    @pytest.mark.parametrize("name", CATEGORY_NAMES)
    def test_name_round_trip(self, name):
        assert Category.from_name(name).label == name

    @pytest.mark.parametrize("bad", ["asc-us", "ASCUS", "", "hsil "])
    def test_rejects_non_normative_names(self, bad):
        with pytest.raises(ValueError):
            Category.from_name(bad)


class TestIou:
    def test_identical(self):
        assert iou(BBox(3, 4, 10, 7), BBox(3, 4, 10, 7)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 5, 5)) == 0.0

    def test_hand_geometry(self):
        assert iou(BBox(0, 0, 2, 2), BBox(1, 1, 2, 2)) == pytest.approx(1 / 7, abs=1e-15)

    def test_zero_area(self):
        z = BBox(5, 5, 0, 4)
        assert iou(z, z) == 0.0
        assert iou(z, BBox(0, 0, 10, 10)) == 0.0

    def test_space_mismatch(self):
        with pytest.raises(ContractViolation):
            iou(BBox(0, 0, 1, 1, "slide"), BBox(0, 0, 1, 1, "tile(3)"))

    @given(
        st.tuples(*[st.integers(0, 12)] * 2, *[st.integers(1, 8)] * 2),
        st.tuples(*[st.integers(0, 12)] * 2, *[st.integers(1, 8)] * 2),
    )
    def test_matches_pixel_count(self, a, b):
        assert iou(BBox(*a), BBox(*b)) == pytest.approx(float(pixel_iou(a, b)), abs=1e-12)

    @given(
        st.tuples(*[st.floats(-1e3, 1e3)] * 2, *[st.floats(0.1, 100)] * 2),
        st.tuples(*[st.floats(-1e3, 1e3)] * 2, *[st.floats(0.1, 100)] * 2),
        st.floats(-500, 500),
        st.floats(-500, 500),
    )
    def test_properties(self, a, b, dx, dy):
        ba, bb = BBox(*a), BBox(*b)
        v = iou(ba, bb)
        assert 0.0 <= v <= 1.0
        assert v == iou(bb, ba)
        shifted = iou(BBox(a[0] + dx, a[1] + dy, a[2], a[3]), BBox(b[0] + dx, b[1] + dy, b[2], b[3]))
        assert shifted == pytest.approx(v, abs=1e-6)
        if v == 1.0:
            assert a[2:] == pytest.approx(b[2:], rel=1e-6)


class TestFuseScore:
    @pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
    def test_identity(self, p):
        assert fuse_score(1.0, p) == p

    def test_annihilator(self):
        assert fuse_score(0.0, 0.9) == 0.0

    def test_product(self):
        assert fuse_score(0.8, 0.5) == pytest.approx(0.4, abs=1e-15)

    @pytest.mark.parametrize("args", [(1.1, 0.5), (0.5, -0.1), (math.nan, 0.5)])
    def test_out_of_range(self, args):
        with pytest.raises(ContractViolation):
            fuse_score(*args)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, a, b, c):
        lo, hi = sorted((a, b))
        assert fuse_score(lo, c) <= fuse_score(hi, c)
        assert fuse_score(c, lo) <= fuse_score(c, hi)


class TestDetection:
    @given(st.floats(0, 1), st.lists(st.floats(0, 1), min_size=10, max_size=10))
    def test_from_scores(self, obj, scores):
        d = Detection.from_scores(BBox(0, 0, 5, 5), obj, scores)
        assert d.category == max(range(10), key=lambda i: (scores[i], -i))
        assert d.final_score == obj * scores[d.category]
        assert d.final_score <= d.objectness

    def test_rejects_bad_scores(self):
        with pytest.raises(ContractViolation):
            Detection.from_scores(BBox(0, 0, 1, 1), 0.5, [0.1] * 9)
        with pytest.raises(ContractViolation):
            Detection(BBox(0, 0, 1, 1), 0.5, Category.HSIL, 1.5)

    def test_negative_size_rejected(self):
        with pytest.raises(ContractViolation):
            BBox(0, 0, -1, 2)

    def test_one_hot(self):
        s = one_hot_scores(Category.AGC)
        assert s[Category.AGC] == 1.0 and sum(s) == 1.0
