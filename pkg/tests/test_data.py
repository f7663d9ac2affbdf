"""Tests for loaders, the synthetic generator, partitioning and augmentation."""

import struct

import numpy as np
import pytest

from fedssl.data import (
    Dataset,
    PartitionPlan,
    add_noise,
    augment,
    candidate_augmenter,
    flip_image,
    gen_synthetic,
    load_cifar_bin,
    load_idx,
    load_npz,
    pair_augmenters,
    partition_dirichlet,
    partition_iid,
    save_npz,
    shift_image,
    split_labeled_unlabeled,
    split_streaming,
    stratified_sample_indices,
)
from fedssl.errors import DataFormatError, InvalidInputError


# ---------------------------------------------------------------------------
# IDX loader
# ---------------------------------------------------------------------------


def write_idx_pair(tmp_path, pixels, labels):
    count = len(labels)
    img = tmp_path / "images.idx"
    lab = tmp_path / "labels.idx"
    img.write_bytes(struct.pack(">IIII", 0x803, count, 2, 2) + bytes(pixels))
    lab.write_bytes(struct.pack(">II", 0x801, count) + bytes(labels))
    return str(img), str(lab)


def test_load_idx_known_fixture(tmp_path):
    pixels = list(range(16))  # 4 images of 2x2
    img, lab = write_idx_pair(tmp_path, pixels, [0, 1, 2, 3])
    ds = load_idx(img, lab)
    assert len(ds) == 4 and ds.num_classes == 4
    assert ds.image_shape == (2, 2)
    want = np.array(pixels, dtype=float).reshape(4, 4) / 255.0
    np.testing.assert_allclose(ds.features, want, atol=0)
    np.testing.assert_array_equal(ds.labels, [0, 1, 2, 3])


def test_load_idx_count_mismatch(tmp_path):
    img, _ = write_idx_pair(tmp_path, list(range(16)), [0, 1, 2, 3])
    lab = tmp_path / "short.idx"
    lab.write_bytes(struct.pack(">II", 0x801, 3) + bytes([0, 1, 2]))
    with pytest.raises(DataFormatError, match="3 labels for 4 images"):
        load_idx(img, str(lab))


def test_load_idx_bad_magic(tmp_path):
    img = tmp_path / "bad.idx"
    img.write_bytes(struct.pack(">IIII", 0x9999, 1, 2, 2) + bytes(4))
    lab = tmp_path / "labels.idx"
    lab.write_bytes(struct.pack(">II", 0x801, 1) + bytes([0]))
    with pytest.raises(DataFormatError, match="offset 0"):
        load_idx(str(img), str(lab))


def test_load_idx_empty_file(tmp_path):
    img = tmp_path / "empty.idx"
    img.write_bytes(b"")
    with pytest.raises(DataFormatError, match="truncated"):
        load_idx(str(img), str(img))


def test_load_idx_truncated_pixels(tmp_path):
    img = tmp_path / "trunc.idx"
    img.write_bytes(struct.pack(">IIII", 0x803, 4, 2, 2) + bytes(7))
    lab = tmp_path / "labels.idx"
    lab.write_bytes(struct.pack(">II", 0x801, 4) + bytes(4))
    with pytest.raises(DataFormatError, match="offset 16"):
        load_idx(str(img), str(lab))


# ---------------------------------------------------------------------------
# CIFAR loader
# ---------------------------------------------------------------------------


def test_load_cifar_known_fixture(tmp_path):
    records = bytearray()
    for label in (1, 7):
        records.append(label)
        records.extend((label * 3 + i) % 256 for i in range(3072))
    path = tmp_path / "batch.bin"
    path.write_bytes(bytes(records))
    ds = load_cifar_bin([str(path)])
    assert len(ds) == 2 and ds.num_classes == 10
    assert ds.image_shape == (32, 32, 3)
    np.testing.assert_array_equal(ds.labels, [1, 7])
    # Oracle: re-derive the channel-last layout by hand for record 0.
    raw = np.array([(3 + i) % 256 for i in range(3072)], dtype=float)
    want = raw.reshape(3, 32, 32).transpose(1, 2, 0).reshape(-1) / 255.0
    np.testing.assert_allclose(ds.features[0], want, atol=0)


def test_load_cifar_bad_length(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes(3072))
    with pytest.raises(DataFormatError, match="multiple of 3073"):
        load_cifar_bin([str(path)])


def test_load_cifar_empty_file(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    with pytest.raises(DataFormatError):
        load_cifar_bin([str(path)])


def test_npz_roundtrip(tmp_path):
    ds = gen_synthetic(3, 5, 30, 0.1, seed=4)
    path = str(tmp_path / "ds.npz")
    save_npz(path, ds)
    back = load_npz(path)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.num_classes == ds.num_classes


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------


def test_gen_synthetic_zero_spread_hits_centroids():
    ds = gen_synthetic(3, 6, 30, 0.0, seed=1)
    for cls in range(3):
        rows = ds.features[ds.labels == cls]
        assert np.ptp(rows, axis=0).max() == 0.0


def test_gen_synthetic_deterministic():
    a = gen_synthetic(4, 8, 100, 0.2, seed=9)
    b = gen_synthetic(4, 8, 100, 0.2, seed=9)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_gen_synthetic_nearest_centroid_oracle():
    ds = gen_synthetic(4, 16, 400, 0.05, seed=3)
    centroids = np.stack([ds.features[ds.labels == c].mean(axis=0) for c in range(4)])
    dists = ((ds.features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assert (dists.argmin(axis=1) == ds.labels).mean() == 1.0


def test_gen_synthetic_class_counts_near_equal():
    ds = gen_synthetic(3, 4, 100, 0.1, seed=0)
    counts = np.bincount(ds.labels, minlength=3)
    assert counts.max() - counts.min() <= 1


def test_gen_synthetic_validation():
    with pytest.raises(InvalidInputError):
        gen_synthetic(1, 4, 10, 0.1, seed=0)
    with pytest.raises(InvalidInputError):
        gen_synthetic(4, 4, 3, 0.1, seed=0)


# ---------------------------------------------------------------------------
# Labeled/unlabeled split
# ---------------------------------------------------------------------------


def test_split_all_labeled():
    ds = gen_synthetic(3, 4, 30, 0.1, seed=2)
    labeled, unlabeled = split_labeled_unlabeled(ds, 30, seed=0)
    assert len(labeled) == 30 and len(unlabeled) == 0


def test_split_none_labeled():
    ds = gen_synthetic(3, 4, 30, 0.1, seed=2)
    labeled, unlabeled = split_labeled_unlabeled(ds, 0, seed=0)
    assert len(labeled) == 0 and len(unlabeled) == 30
    assert unlabeled.labels is None


def test_split_stratified_counts():
    ds = gen_synthetic(10, 4, 1000, 0.1, seed=5)
    labeled, _ = split_labeled_unlabeled(ds, 100, seed=1)
    counts = np.bincount(labeled.labels, minlength=10)
    np.testing.assert_array_equal(counts, np.full(10, 10))


def test_split_rejects_oversized_request():
    ds = gen_synthetic(3, 4, 30, 0.1, seed=2)
    with pytest.raises(InvalidInputError):
        split_labeled_unlabeled(ds, 31, seed=0)


def test_stratified_sample_skewed_spillover():
    labels = np.array([0] * 2 + [1] * 98)
    idx = stratified_sample_indices(labels, 50, 2, np.random.default_rng(0))
    assert idx.size == 50
    assert (labels[idx] == 0).sum() <= 2


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


def assert_disjoint_cover(plan, n):
    flat = sorted(i for shard in plan.assignments for i in shard)
    assert flat == list(range(n))
    assert all(len(shard) >= 1 for shard in plan.assignments)


def test_partition_iid_cover_and_sizes():
    ds = gen_synthetic(4, 4, 103, 0.1, seed=0)
    plan = partition_iid(ds, 10, seed=3)
    assert_disjoint_cover(plan, 103)
    sizes = [len(s) for s in plan.assignments]
    assert max(sizes) - min(sizes) <= 1


def test_partition_iid_matches_shuffle_deal_oracle():
    ds = gen_synthetic(4, 4, 23, 0.1, seed=0)
    plan = partition_iid(ds, 4, seed=7)
    order = np.random.default_rng(7).permutation(23)
    want = [sorted(order[k::4].tolist()) for k in range(4)]
    assert [list(s) for s in plan.assignments] == want


def test_partition_dirichlet_single_client_gets_everything():
    ds = gen_synthetic(4, 4, 40, 0.1, seed=0)
    plan = partition_dirichlet(ds, 1, mu=0.5, seed=0)
    assert list(plan.assignments[0]) == list(range(40))


def test_partition_dirichlet_cover_and_reproducibility():
    ds = gen_synthetic(10, 4, 500, 0.1, seed=1)
    a = partition_dirichlet(ds, 10, mu=0.5, seed=11)
    b = partition_dirichlet(ds, 10, mu=0.5, seed=11)
    assert_disjoint_cover(a, 500)
    assert a.assignments == b.assignments


def test_partition_dirichlet_huge_mu_is_nearly_uniform():
    ds = gen_synthetic(10, 4, 5000, 0.1, seed=2)
    plan = partition_dirichlet(ds, 10, mu=1e6, seed=4)
    global_hist = np.bincount(ds.labels, minlength=10) / len(ds)
    for shard in plan.assignments:
        hist = np.bincount(ds.labels[list(shard)], minlength=10) / len(shard)
        assert 0.5 * np.abs(hist - global_hist).sum() <= 0.05


def test_partition_dirichlet_small_mu_is_skewed():
    ds = gen_synthetic(10, 4, 5000, 0.1, seed=2)
    plan = partition_dirichlet(ds, 10, mu=0.1, seed=4)
    modal_shares = []
    for shard in plan.assignments:
        hist = np.bincount(ds.labels[list(shard)], minlength=10)
        modal_shares.append(hist.max() / hist.sum())
    assert max(modal_shares) > 0.5


def test_partition_dirichlet_requires_labels():
    ds = gen_synthetic(4, 4, 40, 0.1, seed=0).without_labels()
    with pytest.raises(InvalidInputError):
        partition_dirichlet(ds, 4, mu=0.5, seed=0)


def test_partition_plan_json_roundtrip():
    ds = gen_synthetic(4, 4, 40, 0.1, seed=0)
    for plan in (partition_iid(ds, 4, seed=3), partition_dirichlet(ds, 4, 0.3, seed=3)):
        back = PartitionPlan.from_json(plan.to_json())
        assert back == plan


def test_partition_plan_rejects_duplicates():
    with pytest.raises(InvalidInputError):
        PartitionPlan(((0, 1), (1, 2)), "iid", 0)


# ---------------------------------------------------------------------------
# Streaming shards
# ---------------------------------------------------------------------------


def test_split_streaming_sizes_and_union():
    shard = split_streaming(np.arange(37), seed=5)
    sizes = [len(p) for p in shard.parts]
    assert len(shard.parts) == 10
    assert max(sizes) - min(sizes) <= 1
    flat = sorted(i for part in shard.parts for i in part)
    assert flat == list(range(37))


def test_split_streaming_matches_shuffle_oracle():
    indices = np.arange(50, 90)
    shard = split_streaming(indices, seed=2)
    shuffled = np.random.default_rng(2).permutation(indices)
    want = [tuple(int(i) for i in part) for part in np.array_split(shuffled, 10)]
    assert list(shard.parts) == want


def test_split_streaming_round_cycling():
    shard = split_streaming(np.arange(30), seed=1)
    np.testing.assert_array_equal(shard.part_for_round(3), shard.part_for_round(13))


def test_split_streaming_rejects_tiny_shard():
    with pytest.raises(InvalidInputError):
        split_streaming(np.arange(9), seed=0)


# ---------------------------------------------------------------------------
# Augmentations
# ---------------------------------------------------------------------------


def test_shift_zero_offset_is_identity():
    x = np.random.default_rng(0).uniform(size=16)
    np.testing.assert_array_equal(shift_image(x, (4, 4), 0, 0), x)


def test_shift_moves_pixels_with_zero_fill():
    x = np.zeros(16)
    x[0] = 1.0  # top-left pixel
    shifted = shift_image(x, (4, 4), 1, 1).reshape(4, 4)
    assert shifted[1, 1] == 1.0 and shifted.sum() == 1.0
    gone = shift_image(x, (4, 4), -1, 0)
    assert gone.sum() == 0.0


def test_flip_twice_is_identity():
    x = np.random.default_rng(1).uniform(size=16)
    np.testing.assert_array_equal(flip_image(flip_image(x, (4, 4)), (4, 4)), x)


def test_flip_three_channel_layout():
    x = np.arange(2 * 2 * 3, dtype=float)
    flipped = flip_image(x, (2, 2, 3)).reshape(2, 2, 3)
    np.testing.assert_array_equal(flipped[:, 0, :], x.reshape(2, 2, 3)[:, 1, :])


def test_shift_three_channel_layout():
    x = np.zeros((3, 3, 3))
    x[0, 0, :] = [0.1, 0.2, 0.3]
    moved = shift_image(x.ravel(), (3, 3, 3), 1, 1).reshape(3, 3, 3)
    np.testing.assert_array_equal(moved[1, 1, :], [0.1, 0.2, 0.3])
    assert moved.sum() == pytest.approx(0.6)
    gone = shift_image(x.ravel(), (3, 3, 3), -1, 0)
    assert gone.sum() == 0.0


def test_noise_zero_sigma_is_identity():
    x = np.random.default_rng(2).uniform(size=10)
    np.testing.assert_array_equal(add_noise(x, 0.0, np.random.default_rng(0)), x)


def test_augment_preserves_length_and_range():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=16)
    for kind in ("shift", "flip", "noise"):
        out = augment(x, kind, rng, image_shape=(4, 4), sigma=0.3)
        assert out.shape == x.shape
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_augment_rejects_geometry_without_layout():
    with pytest.raises(InvalidInputError):
        augment(np.zeros(16), "shift", np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        augment(np.zeros(16), "warp", np.random.default_rng(0), image_shape=(4, 4))


def test_pair_augmenters_shapes():
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(5, 16))
    for image_shape in ((4, 4), None):
        first, second = pair_augmenters(image_shape, noise_sigma=0.05)
        assert first(x, rng).shape == x.shape
        assert second(x, rng).shape == x.shape
    aug = candidate_augmenter((4, 4))
    assert aug(x, rng).shape == x.shape


def test_dataset_validation():
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((2, 3)), labels=[0, 5], num_classes=3)
    with pytest.raises(InvalidInputError):
        Dataset(np.full((2, 3), np.nan), labels=None, num_classes=3)
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((2, 3)), labels=None, num_classes=3, image_shape=(2, 2))
