import filecmp
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surformer.data import (CLASS_NAMES, IDENTITY_POLICY, ORIGINAL_COUNTS, TACTILE_POLICY, VISION_POLICY,
                            AugmentPolicy, DataConfig, SurfaceClass, affine_warp, augment_image,
                            balance_by_augmentation, generate_dataset, load_archive, quantize, stratified_split,
                            write_archive)
from surformer.errors import InsufficientDataError, ParameterError
from surformer.pipeline import TACTILE_COLUMNS


def small_config(**kw):
    base = dict(image_size=32, embedding_dim=64, signal_dim=8)
    base.update(kw)
    return DataConfig(**base)


def asymmetric_pattern(h=21, w=17):
    r, c = np.mgrid[0:h, 0:w]
    return ((r * 7 + c * c * 3) % 23) / 22.0


def test_class_order():
    assert [c.value for c in SurfaceClass] == [0, 1, 2, 3, 4]
    assert CLASS_NAMES[SurfaceClass.SYNTHETIC_FABRIC] == "SyntheticFabric"


def test_policy_presets():
    assert (VISION_POLICY.rotation_deg, VISION_POLICY.brightness_range, VISION_POLICY.channel_shift) == \
        (25.0, (0.8, 1.2), 0.1)
    assert (TACTILE_POLICY.rotation_deg, TACTILE_POLICY.brightness_range, TACTILE_POLICY.channel_shift) == \
        (20.0, (0.9, 1.1), 0.0)
    for p in (VISION_POLICY, TACTILE_POLICY):
        assert (p.shift_frac, p.zoom_range, p.h_flip, p.v_flip, p.fill) == (0.10, 0.05, True, False, "nearest")


def test_original_counts_small_images():
    ds = generate_dataset(small_config())
    assert ds.class_counts().tolist() == [288, 364, 661, 364, 600]
    assert len(ds) == 2277
    assert all(s.tactile.shape == (32, 32) and s.provenance == "original" for s in ds.samples)


def test_same_seed_bit_identical():
    a = generate_dataset(small_config(counts=(3, 3, 3, 3, 3)))
    b = generate_dataset(small_config(counts=(3, 3, 3, 3, 3)))
    c = generate_dataset(small_config(counts=(3, 3, 3, 3, 3), seed=1))
    for sa, sb in zip(a.samples, b.samples):
        np.testing.assert_array_equal(sa.tactile, sb.tactile)
        np.testing.assert_array_equal(sa.vision, sb.vision)
    assert not np.array_equal(a.samples[0].tactile, c.samples[0].tactile)


def test_image_mode_shapes_and_embeddings():
    ds = generate_dataset(small_config(counts=(2, 2, 2, 2, 2), vision_mode="images"))
    assert ds.samples[0].vision.shape == (32, 32, 3) and ds.samples[0].vision.dtype == np.uint8
    E = ds.embeddings()
    assert E.shape == (10, 64) and np.all(np.isfinite(E))


def test_identity_policy_is_bit_exact():
    img = asymmetric_pattern()
    out = augment_image(img, IDENTITY_POLICY, np.random.default_rng(0))
    np.testing.assert_array_equal(out, img)
    rgb = np.random.default_rng(1).random((9, 8, 3))
    np.testing.assert_array_equal(augment_image(rgb, IDENTITY_POLICY, np.random.default_rng(0)), rgb)


def test_rotation_180_is_index_reversal():
    img = asymmetric_pattern()
    rot = affine_warp(img, 180.0)
    np.testing.assert_allclose(rot, img[::-1, ::-1], atol=1e-9)
    q_rot, q_rev = quantize(rot).astype(int), quantize(img[::-1, ::-1]).astype(int)
    assert np.abs(q_rot - q_rev).max() <= 1


def test_rotation_90_oracle():
    img = asymmetric_pattern(15, 15)
    # Positive angles rotate counter-clockwise in (row, col) display coordinates.
    np.testing.assert_allclose(affine_warp(img, 90.0), np.rot90(img), atol=1e-9)


def test_brightness_clip():
    img = np.linspace(0.0, 0.9, 64).reshape(8, 8)
    policy = AugmentPolicy(0.0, 0.0, 0.0, False, False, (1.2, 1.2), 0.0)
    out = augment_image(img, policy, np.random.default_rng(0))
    assert out.max() == 1.0
    np.testing.assert_allclose(out[out < 1.0], (img * 1.2)[out < 1.0])


def test_flips():
    img = asymmetric_pattern()
    np.testing.assert_array_equal(affine_warp(img, flip_h=True), img[:, ::-1])
    np.testing.assert_array_equal(affine_warp(img, flip_v=True), img[::-1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([TACTILE_POLICY, VISION_POLICY]))
def test_augmented_pixels_stay_in_range(seed, policy):
    rng = np.random.default_rng(seed)
    shape = (16, 16) if policy is TACTILE_POLICY else (16, 16, 3)
    out = augment_image(rng.random(shape), policy, rng)
    assert out.shape == shape
    assert out.min() >= 0.0 and out.max() <= 1.0


@pytest.fixture(scope="module")
def small_balanced():
    original = generate_dataset(small_config())
    return original, balance_by_augmentation(original, seed=0)


def test_balancing_counts(small_balanced):
    original, balanced = small_balanced
    assert balanced.class_counts().tolist() == [1000] * 5
    assert len(balanced) == 5000
    provenance = np.array([s.provenance for s in balanced.samples])
    labels = balanced.labels
    augmented = np.bincount(labels[provenance == "augmented"], minlength=5)
    np.testing.assert_array_equal(augmented, 1000 - np.array(ORIGINAL_COUNTS))
    assert augmented[SurfaceClass.CONCRETE] == 712


def test_balancing_preserves_originals(small_balanced):
    original, balanced = small_balanced
    for a, b in zip(original.samples, balanced.samples[:len(original)]):
        assert b.provenance == "original" and a.label == b.label
        np.testing.assert_array_equal(a.tactile, b.tactile)
        np.testing.assert_array_equal(a.vision, b.vision)
    for s in balanced.samples[len(original):]:
        assert original.samples[s.source].label == s.label
        assert s.tactile.dtype == np.uint8


def test_class_at_target_gets_nothing():
    ds = generate_dataset(small_config(counts=(4, 2, 3, 1, 4)))
    out = balance_by_augmentation(ds, target_per_class=4)
    provenance = np.array([s.provenance for s in out.samples])
    assert np.bincount(out.labels[provenance == "augmented"], minlength=5).tolist() == [0, 2, 1, 3, 0]


def test_target_below_count_raises():
    ds = generate_dataset(small_config(counts=(4, 2, 3, 1, 4)))
    with pytest.raises(ParameterError):
        balance_by_augmentation(ds, target_per_class=3)


BALANCED_LABELS = np.repeat(np.arange(5), 1000)


def test_three_way_split_counts():
    split = stratified_split(BALANCED_LABELS, (0.8, 0.1, 0.1), seed=0)
    for part, n in ((split.train, 800), (split.val, 100), (split.test, 100)):
        assert np.bincount(BALANCED_LABELS[part], minlength=5).tolist() == [n] * 5
    np.testing.assert_array_equal(np.sort(np.concatenate([split.train, split.val, split.test])), np.arange(5000))


def test_two_way_split_counts():
    split = stratified_split(BALANCED_LABELS, (0.8, 0.2), seed=3)
    assert np.bincount(BALANCED_LABELS[split.train]).tolist() == [800] * 5
    assert np.bincount(BALANCED_LABELS[split.test]).tolist() == [200] * 5
    assert len(split.val) == 0


def test_split_seeded():
    a = stratified_split(BALANCED_LABELS, (0.8, 0.2), seed=0)
    b = stratified_split(BALANCED_LABELS, (0.8, 0.2), seed=0)
    c = stratified_split(BALANCED_LABELS, (0.8, 0.2), seed=1)
    np.testing.assert_array_equal(a.test, b.test)
    assert not np.array_equal(a.test, c.test)


def test_split_errors():
    with pytest.raises(InsufficientDataError):
        stratified_split([0, 0, 0, 1, 1], (0.8, 0.1, 0.1))
    with pytest.raises(ParameterError):
        stratified_split(BALANCED_LABELS, (0.8, 0.1))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(3, 40), min_size=1, max_size=5), st.integers(0, 100),
       st.sampled_from([(0.8, 0.1, 0.1), (0.8, 0.2), (0.5, 0.5)]))
def test_split_properties(sizes, seed, fractions):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    split = stratified_split(labels, fractions, seed)
    parts = [split.train, split.val, split.test] if len(fractions) == 3 else [split.train, split.test]
    merged = np.concatenate(parts)
    assert len(merged) == len(set(merged.tolist())) == len(labels)
    for label, size in enumerate(sizes):
        for part, frac in zip(parts, fractions):
            assert abs(np.sum(labels[part] == label) - frac * size) <= 1


@pytest.mark.parametrize("mode", ["embeddings", "images"])
def test_archive_byte_identical_and_round_trip(tmp_path, mode):
    cfg = small_config(counts=(3, 2, 2, 2, 3), vision_mode=mode)
    dirs = []
    for name in ("a", "b"):
        ds = balance_by_augmentation(generate_dataset(cfg), target_per_class=4, seed=5)
        dirs.append(write_archive(ds, tmp_path / name))
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file())
    _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], [str(f) for f in files], shallow=False)
    assert mismatch == [] and errors == []
    loaded = load_archive(dirs[0])
    assert loaded.class_counts().tolist() == [4] * 5
    assert loaded.balance_seed == 5
    for a, b in zip(ds.samples, loaded.samples):
        np.testing.assert_array_equal(a.tactile, b.tactile)
        np.testing.assert_array_equal(a.vision, b.vision)
        assert (a.label, a.provenance, a.source) == (b.label, b.provenance, b.source)


@pytest.mark.slow
def test_generator_calibration_oracle(calibrated_data):
    original = calibrated_data.original
    # Balancing appends, so the originals lead the balanced feature table.
    X = calibrated_data.features[:len(original), TACTILE_COLUMNS]
    y = original.labels
    means = np.stack([X[y == c].mean(axis=0) for c in range(5)])
    pooled = np.sqrt(np.mean([X[y == c].var(axis=0) for c in range(5)], axis=0))
    for a, b in itertools.combinations(range(5), 2):
        assert np.abs(means[a] - means[b]).max() > 0.0
    # Spread of class means, in pooled within-class stds, per feature.
    spread = (means.max(axis=0) - means.min(axis=0)) / pooled
    assert np.sum(spread > 3.0) >= 3
