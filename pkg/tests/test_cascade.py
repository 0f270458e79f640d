import numpy as np
import pytest

from cytoscreen.cascade import (
    ClassifierContractError,
    CropConfig,
    crop_region,
    extract_crop,
    refine,
    select_hard,
)
from cytoscreen.core import HARD_ORDER, BBox, Category, ContractViolation, Detection, one_hot_scores
from cytoscreen.fixtures import MockClassifier

IMAGE = np.random.default_rng(0).integers(0, 256, (300, 400, 3), dtype=np.uint8)


def det(cat, x=10, y=10, w=40, h=30, obj=0.8):
    return Detection.from_scores(BBox(x, y, w, h), obj, one_hot_scores(cat))


def mixed(n=10):
    cats = [Category(i % 10) for i in range(n)]
    return [det(c, x=5 + 30 * (i % 12), y=5 + 40 * (i // 12)) for i, c in enumerate(cats)]


class TestSelectHard:
    def test_none_hard(self):
        hard, rest = select_hard([det(Category.AGC), det(Category.VAG)])
        assert hard == [] and len(rest) == 2

    def test_partition(self):
        ds = mixed()
        hard, rest = select_hard(ds)
        assert len(hard) == 4 and len(rest) == 6
        assert all(d.category.is_hard for d in hard)
        assert sorted(map(id, hard + rest)) == sorted(map(id, ds))
        assert hard == [d for d in ds if d in hard]  # order preserved


class TestCrop:
    def test_region(self):
        assert crop_region(det(Category.HSIL, 100, 100, 50, 50), CropConfig()) == (95, 95, 60, 60)

    def test_full_image(self):
        d = det(Category.HSIL, 0, 0, 400, 300)
        patch = extract_crop(IMAGE, d, CropConfig(context_pad=0.0, output_edge=64))
        assert patch.shape == (64, 64, 3)
        from cytoscreen.imaging import resize_bilinear
        assert np.array_equal(patch, resize_bilinear(IMAGE, 64, 64))

    def test_corner_clamped(self):
        const = np.full((300, 400, 3), 9, dtype=np.uint8)
        const[:20, :20] = 200
        patch = extract_crop(const, det(Category.HSIL, 0, 0, 20, 20), CropConfig(context_pad=0.5, output_edge=30))
        # window clipped at (0, 0): the top-left of the patch is the bright corner
        assert patch[0, 0, 0] == 200

    def test_outside(self):
        with pytest.raises(ContractViolation):
            extract_crop(IMAGE, det(Category.HSIL, 1000, 1000, 10, 10))


class TestRefine:
    def test_identity_classifier(self):
        ds = mixed(20)
        out = refine(ds, IMAGE, MockClassifier(np.eye(4)))
        for a, b in zip(ds, out):
            if a.category.is_hard:
                assert b.relabeled and b.category == a.category and b.final_score == a.final_score
            else:
                assert b is a

    def test_constant_hsil(self):
        m = np.zeros((4, 4))
        m[:, 3] = 1.0
        out = refine(mixed(), IMAGE, MockClassifier(m))
        for d in out:
            if d.relabeled:
                assert d.category == Category.HSIL and d.final_score == d.objectness

    def test_confusion_swap(self):
        perm = [2, 1, 0, 3]  # ASCUS <-> LSIL
        m = np.eye(4)[perm]
        ds = mixed(20)
        out = refine(ds, IMAGE, MockClassifier(m))
        for a, b in zip(ds, out):
            expect = HARD_ORDER[perm[HARD_ORDER.index(a.category)]] if a.category.is_hard else a.category
            assert b.category == expect
            assert (b.bbox, b.objectness) == (a.bbox, a.objectness)

    def test_threads_agree(self):
        ds = mixed(40)
        clf = MockClassifier(np.eye(4)[[3, 2, 1, 0]])
        assert refine(ds, IMAGE, clf, threads=1) == refine(ds, IMAGE, clf, threads=4)

    def test_bad_output(self):
        class Broken:
            input_edge = 32
            thread_safe = True

            def __call__(self, patch, detection):
                return np.array([0.5, 0.5, 0.5, 0.0])

        with pytest.raises(ClassifierContractError, match="detection 1"):
            refine([det(Category.AGC), det(Category.ASCH)], IMAGE, Broken())

    def test_patch_resized_to_input_edge(self):
        seen = []

        class Spy:
            input_edge = 299
            thread_safe = True

            def __call__(self, patch, detection):
                seen.append(patch.shape)
                return np.array([1.0, 0, 0, 0])

        refine([det(Category.LSIL)], IMAGE, Spy())
        assert seen == [(299, 299, 3)]
