import numpy as np
import pytest
from hypothesis import given, strategies as st

from cytoscreen.core import BBox, Category, ContractViolation, GroundTruthBox
from cytoscreen.imaging import resize_bilinear
from cytoscreen.pyramid import (
    PyramidSpec,
    build_pyramid,
    project_gt_to_tiles,
    slide_to_tile,
    tile_layer,
    tile_pyramid,
    tile_space_dims,
    tile_to_slide,
)

SPEC = PyramidSpec()
TILES = SPEC.tiles()


def tile_at(layer, row, col):
    return next(t for t in TILES if (t.layer_index, t.grid_row, t.grid_col) == (layer, row, col))


class TestBuildPyramid:
    def test_default_input_size(self):
        img = np.zeros((3008, 4112, 3), dtype=np.uint8)
        layers = build_pyramid(img)
        assert [l.shape[:2][::-1] for l in layers] == [(4000, 3000), (1600, 1200), (800, 600)]

    def test_identity_resize(self):
        img = np.random.default_rng(0).integers(0, 256, (3000, 4000, 3), dtype=np.uint8)
        assert np.array_equal(build_pyramid(img)[0], img)

    def test_constant_field(self):
        img = np.full((1000, 1333, 3), (12, 200, 77), dtype=np.uint8)
        for layer in build_pyramid(img):
            assert np.all(layer == (12, 200, 77))

    def test_empty_input(self):
        with pytest.raises(ValueError):
            build_pyramid(np.zeros((0, 10, 3), dtype=np.uint8))

    def test_bilinear_half_pixel(self):
        # 2x downscale with half-pixel centers averages each pixel pair
        row = np.array([[0, 10, 20, 30]], dtype=np.float64)
        np.testing.assert_allclose(resize_bilinear(row, 2, 1), [[5, 25]])


class TestTiling:
    def test_thirty_tiles(self):
        layers = build_pyramid(np.zeros((3000, 4000, 3), dtype=np.uint8))
        tiles = tile_pyramid(layers)
        assert len(tiles) == 30 == SPEC.num_tiles
        assert [sum(m.layer_index == i for _, m in tiles) for i in range(3)] == [25, 4, 1]
        assert all(t.shape[:2] == (600, 800) for t, _ in tiles)
        assert [m.tile_id for _, m in tiles] == list(range(30))

    def test_layer_three_tile(self):
        (raster, meta), = tile_layer(np.zeros((600, 800, 3), dtype=np.uint8), SPEC, 2)
        assert meta.origin == (0, 0) and meta.scale_to_slide == 5.0

    def test_grid_origin(self):
        meta = tile_at(0, 2, 3)
        assert meta.origin == (2400, 1200) and meta.scale_to_slide == 1.0

    def test_scales(self):
        assert {t.scale_to_slide for t in TILES} == {1.0, 2.5, 5.0}

    def test_partition(self):
        layer = np.arange(1200 * 1600).reshape(1200, 1600)
        seen = np.concatenate([t.ravel() for t, _ in tile_layer(layer, SPEC, 1)])
        assert np.array_equal(np.sort(seen), layer.ravel())

    def test_indivisible_layer(self):
        with pytest.raises(ValueError):
            PyramidSpec(layer_sizes=((4000, 3000), (1000, 700)))
        with pytest.raises(ValueError):
            tile_layer(np.zeros((600, 801)), SPEC, 2)


class TestMapping:
    def test_identity_tile(self):
        m = tile_at(0, 0, 0)
        assert tile_to_slide(BBox(0, 0, 10, 10, m.space), m) == BBox(0, 0, 10, 10)

    def test_translation(self):
        m = tile_at(0, 2, 3)
        assert tile_to_slide(BBox(100, 50, 40, 30, m.space), m) == BBox(2500, 1250, 40, 30)

    def test_scale(self):
        m = tile_at(2, 0, 0)
        assert tile_to_slide(BBox(10, 10, 20, 20, m.space), m) == BBox(50, 50, 100, 100)

    def test_space_checked(self):
        m = tile_at(0, 0, 0)
        with pytest.raises(ContractViolation):
            tile_to_slide(BBox(0, 0, 1, 1, "tile(5)"), m)
        with pytest.raises(ContractViolation):
            slide_to_tile(BBox(0, 0, 1, 1, m.space), m)

    # coordinates on a 1/256-pixel grid are exactly representable at every step
    grid = st.integers(0, 600 * 256).map(lambda v: v / 256)

    @given(st.sampled_from(TILES), grid, grid, grid, grid)
    def test_round_trip_exact(self, meta, x, y, w, h):
        b = BBox(x, y, w, h, meta.space)
        assert slide_to_tile(tile_to_slide(b, meta), meta) == b

    @given(st.sampled_from(TILES), *[st.floats(0, 800)] * 4)
    def test_round_trip_reals(self, meta, x, y, w, h):
        b = BBox(x, y, w, h, meta.space)
        back = slide_to_tile(tile_to_slide(b, meta), meta)
        np.testing.assert_allclose(back.as_list(), b.as_list(), rtol=0, atol=1e-9)


class TestProjectGt:
    def gt(self, x, y, w, h, cat=Category.HSIL):
        return GroundTruthBox(BBox(x, y, w, h), cat, "s")

    def test_containment(self):
        g = self.gt(100, 100, 50, 40)
        out = project_gt_to_tiles([g], TILES)
        hits = sorted(t for t, v in out.items() if v)
        layer_one = [t for t in hits if t < 25]
        assert layer_one == [0]
        assert out[0][0].bbox == BBox(100, 100, 50, 40, "tile(0)")
        # also present in layer two and three
        assert any(25 <= t < 29 for t in hits) and 29 in hits
        assert out[29][0].bbox == BBox(20, 20, 10, 8, "tile(29)")

    def test_straddle_half(self):
        g = self.gt(750, 100, 100, 100)
        out = project_gt_to_tiles([g], TILES)
        assert out[0][0].bbox.w == 50 and out[1][0].bbox.w == 50

    def test_sliver_dropped(self):
        g = self.gt(720, 100, 100, 100)  # 20% lies in tile 1
        out = project_gt_to_tiles([g], TILES)
        assert len(out[0]) == 1 and out[1] == []

    def test_vectorized_dims_agree(self):
        rng = np.random.default_rng(3)
        boxes = np.column_stack([rng.uniform(0, 3900, 200), rng.uniform(0, 2900, 200),
                                 rng.uniform(5, 400, 200), rng.uniform(5, 400, 200)])
        gts = [self.gt(*b) for b in boxes]
        out = project_gt_to_tiles(gts, TILES)
        ref = sorted((g.bbox.w, g.bbox.h) for v in out.values() for g in v)
        fast = sorted(map(tuple, tile_space_dims(boxes)))
        np.testing.assert_allclose(fast, ref, rtol=1e-12)
