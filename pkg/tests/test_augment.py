from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from histopipe.augment import (
    AugmentError,
    AugmentSpec,
    apply_spatial,
    batch_augment,
    check_soft_labels,
    cutmix,
    cutmix_with_rect,
    mixup,
    mixup_with_lambda,
    one_hot,
    rotate90,
)


def random_image(seed=0, dims=(24, 24)):
    return np.random.default_rng(seed).integers(0, 256, size=(*dims, 3), dtype=np.uint8)


def random_batch(seed, b=8, dims=(12, 12), classes=7):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(b, *dims, 3)).astype(np.float32)
    labels = np.stack([one_hot(int(rng.integers(0, classes)), classes) for _ in range(b)])
    return images, labels


class TestRotate90:
    def test_k0_identity(self):
        img = random_image(1)
        assert np.array_equal(rotate90(img, 0), img)

    def test_k4_wraps_to_identity(self):
        img = random_image(2)
        assert np.array_equal(rotate90(img, 4), img)

    def test_two_pixel_hand_rotation(self):
        # [[a], [b]] rotated clockwise once becomes [[b, a]]
        img = np.array([[[10, 11, 12]], [[20, 21, 22]]], dtype=np.uint8)
        out = rotate90(img, 1)
        assert out.shape == (1, 2, 3)
        assert tuple(out[0, 0]) == (20, 21, 22)
        assert tuple(out[0, 1]) == (10, 11, 12)

    def test_odd_k_swaps_dims(self):
        img = random_image(3, dims=(10, 20))
        assert rotate90(img, 1).shape == (20, 10, 3)
        assert rotate90(img, 2).shape == (10, 20, 3)

    def test_four_quarter_turns_compose_to_identity(self):
        img = random_image(4)
        out = img
        for _ in range(4):
            out = rotate90(out, 1)
        assert np.array_equal(out, img)

    @given(st.integers(0, 7), st.integers(0, 999))
    @settings(max_examples=30, deadline=None)
    def test_pixel_multiset_preserved(self, k, seed):
        img = random_image(seed, dims=(6, 9))
        out = rotate90(img, k)
        assert sorted(map(tuple, img.reshape(-1, 3))) == sorted(map(tuple, out.reshape(-1, 3)))


class TestApplySpatial:
    def test_disabled_spec_is_identity(self):
        img = random_image(5)
        out = apply_spatial(img, AugmentSpec.disabled(), np.random.default_rng(0))
        assert np.array_equal(out, img)

    def test_hflip_is_involution(self):
        from dataclasses import replace

        img = random_image(6)
        spec = replace(AugmentSpec.disabled(), hflip_prob=1.0)
        rng = np.random.default_rng(0)
        once = apply_spatial(img, spec, rng)
        twice = apply_spatial(once, spec, rng)
        assert not np.array_equal(once, img)
        assert np.array_equal(twice, img)

    def test_deterministic_given_seed(self):
        img = random_image(7, dims=(32, 32))
        spec = AugmentSpec(blur_sharpen=True)
        a = apply_spatial(img, spec, np.random.default_rng(123))
        b = apply_spatial(img, spec, np.random.default_rng(123))
        assert np.array_equal(a, b)

    def test_dims_preserved_even_non_square(self):
        img = random_image(8, dims=(20, 31))
        spec = AugmentSpec()
        for seed in range(10):
            out = apply_spatial(img, spec, np.random.default_rng(seed))
            assert out.shape == img.shape

    def test_output_range_stays_uint8(self):
        img = random_image(9)
        spec = AugmentSpec(brightness_delta=0.5, blur_sharpen=True)
        out = apply_spatial(img, spec, np.random.default_rng(11))
        assert out.dtype == np.uint8


class TestMixup:
    def test_lambda_one_returns_first_sample(self):
        images, labels = random_batch(1)
        mixed, mlabels = mixup_with_lambda(images, labels, 1.0, np.arange(len(images))[::-1])
        assert np.array_equal(mixed, images)
        assert np.array_equal(mlabels, labels)

    def test_lambda_half_blends_one_hot_labels(self):
        images = np.zeros((2, 4, 4, 3), dtype=np.float32)
        labels = np.stack([one_hot(2, 7), one_hot(5, 7)])
        _, mlabels = mixup_with_lambda(images, labels, 0.5, np.array([1, 0]))
        assert mlabels[0][2] == mlabels[0][5] == 0.5
        assert mlabels[1][2] == mlabels[1][5] == 0.5

    def test_label_sums_over_many_batches(self):
        rng = np.random.default_rng(0)
        for seed in range(200):
            images, labels = random_batch(seed, b=6)
            _, mlabels = mixup(images, labels, 1.0, rng)
            assert np.abs(mlabels.sum(axis=1) - 1.0).max() < 1e-6
            check_soft_labels(mlabels)

    def test_batch_of_one_returned_unchanged(self):
        images, labels = random_batch(2, b=1)
        mixed, mlabels = mixup(images, labels, 1.0, np.random.default_rng(0))
        assert np.array_equal(mixed, images) and np.array_equal(mlabels, labels)


class TestCutmix:
    def test_zero_area_rect_is_noop(self):
        images, labels = random_batch(3, b=4)
        mixed, mlabels = cutmix_with_rect(images, labels, (5, 5, 5, 9), np.array([1, 2, 3, 0]))
        assert np.array_equal(mixed, images)
        assert np.array_equal(mlabels, labels)

    def test_full_rect_becomes_partner(self):
        images, labels = random_batch(4, b=4, dims=(10, 10))
        perm = np.array([1, 2, 3, 0])
        mixed, mlabels = cutmix_with_rect(images, labels, (0, 0, 10, 10), perm)
        assert np.array_equal(mixed, images[perm])
        assert np.array_equal(mlabels, labels[perm])

    def test_partner_weight_is_exact_area_fraction(self):
        # 100x100 image, 40x50 patch -> partner label weight exactly 0.2
        images = np.stack([np.zeros((100, 100, 3)), np.ones((100, 100, 3))]).astype(np.float32)
        labels = np.stack([one_hot(0, 7), one_hot(3, 7)])
        mixed, mlabels = cutmix_with_rect(images, labels, (10, 20, 50, 70), np.array([1, 0]))
        assert mlabels[0][3] == pytest.approx(0.2, abs=0)
        assert mlabels[0][0] == pytest.approx(0.8, abs=0)
        # realized pasted pixels in sample 0 equal the claimed fraction exactly
        assert mixed[0].mean() == pytest.approx(0.2, abs=0)

    def test_sampled_rect_weight_matches_pasted_pixels(self):
        images = np.stack([np.zeros((32, 32, 3)), np.ones((32, 32, 3))]).astype(np.float32)
        labels = np.stack([one_hot(1, 7), one_hot(4, 7)])
        for seed in range(50):
            mixed, mlabels = cutmix(images, labels, 1.0, np.random.default_rng(seed))
            # sample 0's partner weight must equal its realized foreign-pixel area
            frac = mlabels[0][4]
            realized = mixed[0].mean()
            assert frac == pytest.approx(realized, abs=1e-12)

    def test_label_sums_over_many_batches(self):
        rng = np.random.default_rng(1)
        for seed in range(200):
            images, labels = random_batch(seed, b=6)
            _, mlabels = cutmix(images, labels, 1.0, rng)
            assert np.abs(mlabels.sum(axis=1) - 1.0).max() < 1e-6

    def test_batch_of_one_returned_unchanged(self):
        images, labels = random_batch(5, b=1)
        mixed, mlabels = cutmix(images, labels, 1.0, np.random.default_rng(0))
        assert np.array_equal(mixed, images) and np.array_equal(mlabels, labels)


class TestBatchAugment:
    def test_disabled_passes_through(self):
        images, labels = random_batch(6)
        out_images, out_labels = batch_augment(images, labels, AugmentSpec.disabled(),
                                               np.random.default_rng(0))
        assert out_images is images and out_labels is labels

    def test_mutually_exclusive_probabilities_validated(self):
        with pytest.raises(AugmentError, match="mutually exclusive"):
            AugmentSpec(cutmix_prob=0.7, mixup_prob=0.7)

    def test_labels_stay_valid_through_composition(self):
        spec = AugmentSpec(cutmix_prob=0.5, mixup_prob=0.5)
        rng = np.random.default_rng(2)
        images, labels = random_batch(7, b=8)
        for _ in range(100):
            images2, labels = batch_augment(images, labels, spec, rng)
            check_soft_labels(labels)


class TestSpecValidation:
    def test_probabilities_bounded(self):
        with pytest.raises(AugmentError):
            AugmentSpec(hflip_prob=1.5)

    def test_alpha_positive(self):
        with pytest.raises(AugmentError):
            AugmentSpec(mixup_alpha=0.0)
