"""Procedurally drawn demo pools.

Real cut-outs are not redistributable, so tests, benchmarks and the README
walkthrough use eight drawn pod shapes (a curved spine of two to four seed
bulges, 60 to 120 px long) and dark, lightly textured backdrops.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from podforge.assets import BackgroundAsset, BackgroundPool, PodPool, make_pod_asset

POD_LENGTHS = (60, 68, 77, 86, 94, 103, 111, 120)
SUPERSAMPLE = 4


def draw_pod(length, rng):
    """Return an RGBA array holding one pod, long axis roughly horizontal."""
    n_seeds = int(rng.integers(2, 5))
    thickness = length * rng.uniform(0.26, 0.34)
    bend = rng.uniform(-0.12, 0.12) * length
    pad = 4
    w = int(np.ceil(length + 2 * pad))
    h = int(np.ceil(thickness + 2 * abs(bend) + 2 * pad))

    s = SUPERSAMPLE
    ys, xs = np.mgrid[0 : h * s, 0 : w * s]
    px = (xs + 0.5) / s
    py = (ys + 0.5) / s

    cy = h / 2.0
    # Distance field of the spine, radius modulated by seed bulges.
    t = np.linspace(0.0, 1.0, 64)
    bulge = 0.82 + 0.18 * np.abs(np.sin(np.pi * n_seeds * t))
    taper = np.clip(np.sin(np.pi * t) ** 0.35, 0.35, 1.0)
    radius = thickness / 2 * bulge * taper
    # Tips touch the padding so the object spans ``length`` pixels.
    x0, x1 = pad + radius[0], w - pad - radius[-1]
    spine_x = x0 + (x1 - x0) * t
    spine_y = cy + bend * (4 * t * (1 - t) - 0.5)

    inside = np.zeros(px.shape, dtype=bool)
    shade = np.zeros(px.shape)
    for sx, sy, r in zip(spine_x, spine_y, radius):
        d2 = (px - sx) ** 2 + (py - sy) ** 2
        hit = d2 <= r * r
        inside |= hit
        shade = np.maximum(shade, np.where(hit, 1 - np.sqrt(d2) / r, 0))

    # Box-filter the supersampled coverage into soft alpha.
    cov = inside.reshape(h, s, w, s).mean(axis=(1, 3))
    light = shade.reshape(h, s, w, s).mean(axis=(1, 3))

    base = np.array([150.0, 112.0, 62.0]) * rng.uniform(0.85, 1.15, size=3)
    noise = rng.normal(0.0, 6.0, size=(h, w, 1))
    rgb = base * (0.55 + 0.6 * light[..., None]) + noise
    rgba = np.zeros((h, w, 4), dtype=np.uint8)
    rgba[..., :3] = np.clip(rgb, 0, 255).astype(np.uint8)
    rgba[..., 3] = np.clip(np.rint(cov * 255), 0, 255).astype(np.uint8)
    return rgba


def draw_background(canvas, rng):
    w, h = canvas
    coarse = rng.normal(0.0, 1.0, size=(h // 16 + 2, w // 16 + 2))
    up = np.asarray(
        Image.fromarray(coarse.astype(np.float32), mode="F").resize((w, h), Image.BILINEAR)
    )
    fine = rng.normal(0.0, 3.0, size=(h, w))
    gray = 22.0 + 5.0 * up + fine
    rgb = np.stack([gray * 1.0, gray * 0.95, gray * 1.05], axis=-1)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def demo_pod_rgba(seed=0):
    rng = np.random.default_rng(seed)
    return [(f"pod_{i:02d}", draw_pod(length, rng)) for i, length in enumerate(POD_LENGTHS)]


def demo_pod_pool(seed=0):
    return PodPool([make_pod_asset(pid, rgba, "demo") for pid, rgba in demo_pod_rgba(seed)])


def demo_background_pool(canvas=(1024, 1024), count=4, seed=0):
    rng = np.random.default_rng(seed + 1)
    return BackgroundPool(
        [BackgroundAsset(f"bg_{i:02d}", draw_background(canvas, rng)) for i in range(count)]
    )


def write_demo_pools(out_dir, canvas=(1024, 1024), backgrounds=4, seed=0):
    """Write ``pods/`` and ``backgrounds/`` under ``out_dir`` as PNG files."""
    out = Path(out_dir)
    pods_dir, bg_dir = out / "pods", out / "backgrounds"
    pods_dir.mkdir(parents=True, exist_ok=True)
    bg_dir.mkdir(parents=True, exist_ok=True)
    sidecar = {}
    for pid, rgba in demo_pod_rgba(seed):
        Image.fromarray(rgba, mode="RGBA").save(pods_dir / f"{pid}.png")
        sidecar[f"{pid}.png"] = "demo"
    (pods_dir / "pool.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True), encoding="utf-8")
    for bg in demo_background_pool(canvas, backgrounds, seed):
        Image.fromarray(bg.pixels, mode="RGB").save(bg_dir / f"{bg.id}.png")
    return pods_dir, bg_dir
