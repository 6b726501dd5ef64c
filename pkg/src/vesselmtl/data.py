"""Dataset folders (``img/*.png`` + ``gt/*.png``), distance-map caching, splits and batching."""
import hashlib
import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .distance import edt_exact, normalize_dt
from .errors import ContractError, DataError, FormatError, ImageFormatError, PairingError
from .tensormap import load_tensor_map, save_tensor_map

IMG_DIR, GT_DIR, CACHE_DIR = "img", "gt", "dtc"
MASK_THRESHOLD = 128


class CacheStats:
    """Counts of distance maps computed vs read from cache since the last reset."""

    computed = 0
    hits = 0

    @classmethod
    def reset(cls):
        cls.computed = 0
        cls.hits = 0


@dataclass
class Sample:
    id: str
    image: np.ndarray  # H x W float32 in [0, 1]
    mask: np.ndarray  # H x W bool
    dt: np.ndarray  # H x W float32, unit-max normalized


@dataclass
class SplitIndex:
    train: list
    val: list
    test: list
    seed: int

    def to_text(self):
        return "".join(f"{k}: {' '.join(getattr(self, k))}\n" for k in ("train", "val", "test")) + f"seed: {self.seed}\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def get(self, name):
        if name == "all":
            return sorted(self.train + self.val + self.test)
        if name not in ("train", "val", "test"):
            raise ContractError(f"unknown split {name!r}")
        return getattr(self, name)


# --------------------------------------------------------------------------
# 8-bit grayscale PNG I/O
# --------------------------------------------------------------------------

def read_gray_png(path):
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise ImageFormatError(f"{path}: expected 8-bit grayscale PNG, got mode {im.mode}")
            return np.array(im, dtype=np.uint8)
    except OSError as exc:
        raise ImageFormatError(f"{path}: cannot read image ({exc})") from exc


def write_gray_png(path, arr):
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ContractError("PNG writer takes uint8 arrays")
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def to_uint8(values):
    """``round(255 * v)`` for values in [0, 1]."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------
# loading
# --------------------------------------------------------------------------

def target_dt(mask):
    return normalize_dt(edt_exact(mask)).values.astype(np.float32)


def _cached_dt(root, stem, mask, mask_path):
    cache_dir = os.path.join(root, CACHE_DIR)
    cache_path = os.path.join(cache_dir, stem + ".dtc")
    if os.path.exists(cache_path) and os.stat(cache_path).st_mtime_ns >= os.stat(mask_path).st_mtime_ns:
        try:
            dt = load_tensor_map(cache_path).get("dt")
        except FormatError:
            dt = None
        if dt is not None and dt.shape == mask.shape:
            CacheStats.hits += 1
            return dt
    dt = target_dt(mask)
    CacheStats.computed += 1
    os.makedirs(cache_dir, exist_ok=True)
    save_tensor_map(cache_path, {"dt": dt})
    return dt


def _pngs(folder):
    if not os.path.isdir(folder):
        raise DataError(f"missing folder {folder}")
    return sorted(f for f in os.listdir(folder) if f.lower().endswith(".png"))


def load_dataset(root, use_cache=True):
    """Read every ``img``/``gt`` pair under ``root``, sorted by filename."""
    img_dir, gt_dir = os.path.join(root, IMG_DIR), os.path.join(root, GT_DIR)
    imgs, gts = _pngs(img_dir), _pngs(gt_dir)
    orphans = sorted(set(imgs) ^ set(gts))
    if orphans:
        side = IMG_DIR if orphans[0] in imgs else GT_DIR
        raise PairingError(f"{side}/{orphans[0]} has no partner ({len(orphans)} unpaired file(s))")
    samples = []
    for name in imgs:
        stem = os.path.splitext(name)[0]
        raw = read_gray_png(os.path.join(img_dir, name))
        mask_path = os.path.join(gt_dir, name)
        mask = read_gray_png(mask_path) >= MASK_THRESHOLD
        if raw.shape != mask.shape:
            raise ImageFormatError(f"{name}: image {raw.shape} and mask {mask.shape} differ in size")
        if use_cache:
            dt = _cached_dt(root, stem, mask, mask_path)
        else:
            dt = target_dt(mask)
            CacheStats.computed += 1
        image = (raw.astype(np.float64) / 255.0).astype(np.float32)
        samples.append(Sample(stem, image, mask, dt))
    return samples


# --------------------------------------------------------------------------
# splits and batches
# --------------------------------------------------------------------------

def make_splits(ids, fractions=(0.7, 0.15, 0.15), seed=0):
    """Seeded split; train and val sizes are floored and test takes the remainder."""
    ids = sorted(getattr(s, "id", s) for s in ids)
    if not ids:
        raise ContractError("cannot split an empty dataset")
    if len(fractions) != 3 or min(fractions) < 0 or sum(fractions) > 1 + 1e-9:
        raise ContractError(f"bad split fractions {fractions}")
    n = len(ids)
    n_train = math.floor(fractions[0] * n + 1e-9)
    n_val = math.floor(fractions[1] * n + 1e-9)
    order = [ids[i] for i in np.random.default_rng(seed).permutation(n)]
    return SplitIndex(
        sorted(order[:n_train]),
        sorted(order[n_train : n_train + n_val]),
        sorted(order[n_train + n_val :]),
        seed,
    )


def save_splits(split, path):
    with open(path, "w") as fh:
        fh.write(split.to_text())


def load_splits(path):
    parts = {}
    with open(path) as fh:
        for line in fh:
            key, _, rest = line.partition(":")
            parts[key.strip()] = rest.split()
    try:
        return SplitIndex(parts["train"], parts["val"], parts["test"], int(parts["seed"][0]))
    except (KeyError, IndexError, ValueError) as exc:
        raise DataError(f"{path}: malformed split file") from exc


@dataclass
class Batch:
    ids: list
    images: np.ndarray  # N x 1 x H x W
    masks: np.ndarray  # N x 1 x H x W, 0/1
    dts: np.ndarray  # N x 1 x H x W


def batches(samples, ids, batch_size, seed=0, epoch=0, shuffle=False, dtype=np.float32):
    """Yield batches over ``ids``; ``shuffle`` reorders per (seed, epoch). The last batch may be short."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    by_id = samples if isinstance(samples, dict) else {s.id: s for s in samples}
    order = list(ids)
    if shuffle:
        perm = np.random.default_rng([seed, epoch]).permutation(len(order))
        order = [order[i] for i in perm]
    return _iter_batches(by_id, order, batch_size, dtype)


def _iter_batches(by_id, order, batch_size, dtype):
    for start in range(0, len(order), batch_size):
        chunk = [by_id[i] for i in order[start : start + batch_size]]
        yield Batch(
            [s.id for s in chunk],
            np.stack([s.image for s in chunk])[:, None].astype(dtype, copy=False),
            np.stack([s.mask for s in chunk])[:, None].astype(dtype),
            np.stack([s.dt for s in chunk])[:, None].astype(dtype, copy=False),
        )

