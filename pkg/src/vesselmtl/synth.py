"""Synthetic tubular images: stroked quadratic Bezier curves over a noisy gradient."""
import os

import numpy as np
from scipy.ndimage import uniform_filter

from .data import GT_DIR, IMG_DIR, to_uint8, write_gray_png

NOISE_SIGMA = 0.1
MAX_FOREGROUND = 0.5


def bezier_points(p0, p1, p2, step=0.25):
    """Points along a quadratic Bezier, uniform in t and at most ``2 * step`` pixels apart."""
    p0, p1, p2 = (np.asarray(p, dtype=np.float64) for p in (p0, p1, p2))
    # speed never exceeds 2 * longest control edge <= 2 * polygon length
    bound = np.linalg.norm(p1 - p0) + np.linalg.norm(p2 - p1)
    n = max(2, int(np.ceil(bound / step)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2


def curve_mask(size, control, radius):
    """Pixels within ``radius`` of the sampled curve (pixel centres at integer coords)."""
    pts = bezier_points(*control)
    yy, xx = np.mgrid[0:size, 0:size]
    mask = np.zeros((size, size), dtype=bool)
    r2 = radius * radius
    for chunk in np.array_split(pts, max(1, len(pts) // 64)):
        d2 = (yy[..., None] - chunk[:, 0]) ** 2 + (xx[..., None] - chunk[:, 1]) ** 2
        mask |= (d2 <= r2).any(axis=-1)
    return mask


def sample_curves(rng, size):
    """2-5 curves, each ``(control_points, radius)`` with radius in [1, 3] px."""
    margin = 2.0
    curves = []
    for _ in range(int(rng.integers(2, 6))):
        control = rng.uniform(margin, size - 1 - margin, size=(3, 2))
        radius = float(rng.uniform(1.0, 3.0))
        curves.append((control, radius))
    return curves


def synth_image(size, rng):
    """One ``(image, mask, curves)`` triple; resamples curves until the foreground fraction is below one half."""
    while True:
        curves = sample_curves(rng, size)
        mask = np.zeros((size, size), dtype=bool)
        for control, radius in curves:
            mask |= curve_mask(size, control, radius)
        if 0 < mask.mean() < MAX_FOREGROUND:
            break
    img = mask.astype(np.float64)
    for _ in range(2):
        img = uniform_filter(img, size=3, mode="nearest")
    img += rng.normal(0.0, NOISE_SIGMA, size=img.shape)
    angle = rng.uniform(0, 2 * np.pi)
    strength = rng.uniform(0.0, 0.4)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp -= ramp.min()
    img += strength * ramp / max(ramp.max(), 1e-12)
    return np.clip(img, 0.0, 1.0), mask, curves


def synth_generate(n, size, seed, out_dir):
    """Write ``n`` image/mask pairs in the ``img/`` + ``gt/`` layout. Image ``i`` depends only on (seed, i)."""
    os.makedirs(os.path.join(out_dir, IMG_DIR), exist_ok=True)
    os.makedirs(os.path.join(out_dir, GT_DIR), exist_ok=True)
    names = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        image, mask, _ = synth_image(size, rng)
        name = f"{i:04d}.png"
        write_gray_png(os.path.join(out_dir, IMG_DIR, name), to_uint8(image))
        write_gray_png(os.path.join(out_dir, GT_DIR, name), mask.astype(np.uint8) * 255)
        names.append(name)
    return names
