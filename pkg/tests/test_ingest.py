import numpy as np
import pytest

from vetrad.ingest import filter_images, histogram_entropy
from conftest import make_image


class TestEntropy:
    def test_constant_image_zero_entropy(self):
        assert histogram_entropy(np.full((8, 8), 0.5)) == 0.0

    def test_uniform_noise_high_entropy(self):
        px = np.random.default_rng(0).uniform(0, 1, (64, 64))
        assert histogram_entropy(px) > 5.0


class TestFilterImages:
    def test_exact_duplicates_removed(self):
        px = np.random.default_rng(0).uniform(0, 1, (16, 16))
        imgs = [
            make_image(image_id="a", pixels=px.copy()),
            make_image(image_id="b", pixels=px.copy()),
        ]
        kept, report = filter_images(imgs)
        assert [i.image_id for i in kept] == ["a"]
        assert report.removed_duplicates == 1
        assert report.reconciles()

    def test_constant_image_removed(self):
        imgs = [make_image(image_id="flat", pixels=np.full((16, 16), 0.3))]
        kept, report = filter_images(imgs, entropy_threshold=1.0)
        assert kept == []
        assert report.removed_low_complexity == 1

    def test_oversized_study_removed_entirely(self):
        imgs = [
            make_image(image_id=f"i{k}", study_id="big", seed=k) for k in range(11)
        ]
        kept, report = filter_images(imgs)
        assert kept == []
        assert report.removed_oversized_study == 11
        assert report.reconciles()

    def test_ten_image_study_kept(self):
        imgs = [
            make_image(image_id=f"i{k}", study_id="ok", seed=k) for k in range(10)
        ]
        kept, report = filter_images(imgs)
        assert len(kept) == 10

    def test_gate_rejections_counted(self):
        imgs = [make_image(image_id=f"i{k}", seed=k) for k in range(3)]
        kept, report = filter_images(imgs, gate=lambda img: img.image_id != "i1")
        assert report.removed_gate == 1
        assert [i.image_id for i in kept] == ["i0", "i2"]

    def test_empty_input(self):
        kept, report = filter_images([])
        assert kept == []
        assert report.input_count == 0 and report.kept_count == 0
        assert report.reconciles()

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            filter_images([], entropy_threshold=-1.0)

    def test_deterministic_and_first_duplicate_survives(self):
        px = np.random.default_rng(1).uniform(0, 1, (16, 16))
        imgs = [
            make_image(image_id="first", pixels=px.copy()),
            make_image(image_id="second", pixels=px.copy()),
        ]
        for _ in range(3):
            kept, _ = filter_images(imgs)
            assert kept[0].image_id == "first"
        kept_rev, _ = filter_images(imgs[::-1])
        assert kept_rev[0].image_id == "second"

    def test_report_accounting_identity_random(self):
        rng = np.random.default_rng(2)
        imgs = []
        for k in range(30):
            if rng.random() < 0.2:
                px = np.full((8, 8), 0.5)  # low complexity
            else:
                px = rng.uniform(0, 1, (8, 8))
            imgs.append(
                make_image(
                    image_id=f"i{k}", study_id=f"s{int(rng.integers(0, 5))}", pixels=px
                )
            )
        _, report = filter_images(imgs, gate=lambda im: rng.random() > 0.1)
        assert report.reconciles()
