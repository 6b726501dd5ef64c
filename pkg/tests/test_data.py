import os

import numpy as np
import pytest
from PIL import Image

from vesselmtl import data
from vesselmtl.data import CacheStats, batches, load_dataset, load_splits, make_splits, save_splits, write_gray_png
from vesselmtl.distance import edt_bruteforce, edt_exact, normalize_dt
from vesselmtl.errors import ContractError, ImageFormatError, PairingError
from vesselmtl.tensormap import load_tensor_map


def star_mask(size=21):
    m = np.zeros((size, size), bool)
    c = size // 2
    m[c, 2:-2] = m[2:-2, c] = True
    for k in range(-6, 7):
        m[c + k, c + k] = m[c + k, c - k] = True
    m[c - 2 : c + 3, c - 2 : c + 3] = True
    return m


def test_toy_folder_order_and_cache(toy_folder):
    CacheStats.reset()
    samples = load_dataset(str(toy_folder))
    assert [s.id for s in samples] == ["a_first", "b_second"]
    assert CacheStats.computed == 2 and CacheStats.hits == 0
    for s in samples:
        assert s.image.shape == s.mask.shape == s.dt.shape == (16, 16)
        assert s.image.dtype == np.float32 and s.mask.dtype == bool
        np.testing.assert_allclose(s.dt, normalize_dt(edt_exact(s.mask)).values, atol=1e-6)
    CacheStats.reset()
    again = load_dataset(str(toy_folder))
    assert CacheStats.computed == 0 and CacheStats.hits == 2
    for a, b in zip(samples, again):
        np.testing.assert_array_equal(a.dt, b.dt)


def test_cache_invalidated_by_mask_mtime(toy_folder):
    load_dataset(str(toy_folder))
    gt = toy_folder / "gt" / "a_first.png"
    st = os.stat(gt)
    os.utime(gt, ns=(st.st_atime_ns, st.st_mtime_ns + 10**10))
    CacheStats.reset()
    load_dataset(str(toy_folder))
    assert CacheStats.computed == 1 and CacheStats.hits == 1


def test_star_shape_cache_matches_oracle(tmp_path):
    root = tmp_path / "star"
    (root / "img").mkdir(parents=True)
    (root / "gt").mkdir()
    m = star_mask()
    write_gray_png(str(root / "img" / "star.png"), np.full(m.shape, 90, np.uint8))
    write_gray_png(str(root / "gt" / "star.png"), m.astype(np.uint8) * 255)
    load_dataset(str(root))
    cached = load_tensor_map(str(root / "dtc" / "star.dtc"))["dt"]
    np.testing.assert_allclose(cached, normalize_dt(edt_bruteforce(m)).values, atol=1e-5, rtol=0)


def test_orphan_is_named(toy_folder):
    os.remove(toy_folder / "gt" / "b_second.png")
    with pytest.raises(PairingError, match="b_second.png"):
        load_dataset(str(toy_folder))


def test_non_grayscale_rejected(toy_folder):
    Image.new("RGB", (16, 16)).save(toy_folder / "img" / "a_first.png")
    with pytest.raises(ImageFormatError):
        load_dataset(str(toy_folder))


def test_pixel_values_survive_batching(toy_folder):
    samples = load_dataset(str(toy_folder))
    raw = {s.id: np.array(Image.open(toy_folder / "img" / f"{s.id}.png")) for s in samples}
    for b in batches(samples, ["a_first", "b_second"], batch_size=2):
        for i, sid in enumerate(b.ids):
            np.testing.assert_array_equal(b.images[i, 0], (raw[sid] / 255.0).astype(np.float32))
            assert data.to_uint8(b.images[i, 0]).tolist() == raw[sid].tolist()
            np.testing.assert_array_equal(b.masks[i, 0], samples[i].mask.astype(np.float32))


def test_split_sizes_and_roundtrip(tmp_path):
    ids = [f"s{i:02d}" for i in range(10)]
    sp = make_splits(ids, (0.7, 0.15, 0.15), seed=3)
    assert (len(sp.train), len(sp.val), len(sp.test)) == (7, 1, 2)
    assert sorted(sp.train + sp.val + sp.test) == ids
    assert make_splits(ids, seed=3) == sp
    save_splits(sp, tmp_path / "s.txt")
    back = load_splits(tmp_path / "s.txt")
    assert back == sp and back.digest() == sp.digest()
    with pytest.raises(ContractError):
        make_splits([], seed=0)


def _fake_samples(n):
    return [data.Sample(f"s{i}", np.full((2, 2), i, np.float32), np.zeros((2, 2), bool), np.zeros((2, 2), np.float32)) for i in range(n)]


def test_shuffle_and_fixed_order():
    samples = _fake_samples(10)
    ids = [s.id for s in samples]

    def order(epoch, shuffle):
        return [i for b in batches(samples, ids, 3, seed=1, epoch=epoch, shuffle=shuffle) for i in b.ids]

    e0, e1 = order(0, True), order(1, True)
    assert sorted(e0) == sorted(ids)
    assert sum(a != b for a, b in zip(e0, e1)) >= 2
    assert order(0, True) == e0
    assert order(0, False) == order(5, False) == ids
    sizes = [len(b.ids) for b in batches(samples, ids, 3)]
    assert sizes == [3, 3, 3, 1]
    with pytest.raises(ContractError):
        batches(samples, ids, 0)
