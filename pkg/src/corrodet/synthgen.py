"""Seeded procedural metal-surface generator with ground-truth defect masks.

Corrosion features (discoloration blotches, pit clusters, crack polylines) set
mask bits; confounders (scratch lines, shadow gradients) never do. Everything
is a pure function of (spec, seed), so datasets regenerate bit-identically.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter

from . import errors, imaging
from .imaging import Image, TilingSpec

DEFECT_KINDS = ("discoloration_blotch", "pit_cluster", "crack_polyline")
CONFOUNDER_KINDS = ("scratch_line", "shadow_gradient")

DEFAULT_MIN_PIXELS = 64  # ~0.1% of a 256^2 tile


@dataclass
class SurfaceSpec:
    width: int = 512
    height: int = 512
    base_texture: str = "brushed_metal"
    defect_mix: dict = field(
        default_factory=lambda: {
            "discoloration_blotch": 0.4,
            "pit_cluster": 0.3,
            "crack_polyline": 0.3,
        }
    )
    confounder_mix: dict = field(
        default_factory=lambda: {"scratch_line": 0.6, "shadow_gradient": 0.4}
    )
    defect_count_range: tuple = (1, 3)
    confounder_count_range: tuple = (0, 2)

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise errors.InvalidSpec("non-positive dimensions")
        if self.base_texture != "brushed_metal":
            raise errors.InvalidSpec(f"unknown base_texture {self.base_texture!r}")
        for name, mix, kinds in (
            ("defect_mix", self.defect_mix, DEFECT_KINDS),
            ("confounder_mix", self.confounder_mix, CONFOUNDER_KINDS),
        ):
            if set(mix) - set(kinds):
                raise errors.InvalidSpec(f"{name} has unknown kinds: {set(mix) - set(kinds)}")
            if abs(sum(mix.values()) - 1.0) > 1e-9:
                raise errors.InvalidSpec(f"{name} probabilities must sum to 1")
        for rng_ in (self.defect_count_range, self.confounder_count_range):
            lo, hi = rng_
            if lo < 0 or lo > hi:
                raise errors.InvalidSpec(f"bad count range {rng_}")
        return self


@dataclass
class DefectMask:
    values: np.ndarray  # (H, W) uint8, 1 = corrosion pixel

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def _rust_tint(rng):
    # iron-oxide band: reddish brown with per-instance jitter
    r = rng.uniform(120, 180)
    g = rng.uniform(50, 90)
    b = rng.uniform(25, 55)
    return np.array([r, g, b])


def _brushed_metal(rng, h, w):
    base = rng.uniform(115, 175)
    img = np.full((h, w, 3), base, dtype=np.float64)
    # directional band-limited noise: heavy horizontal smoothing
    streaks = gaussian_filter(rng.normal(0.0, 1.0, (h, w)), sigma=(0.6, 9.0)) * 26.0
    grain = rng.normal(0.0, 2.2, (h, w))
    img += (streaks + grain)[:, :, None]
    # slight cool metallic tone
    img[:, :, 2] += rng.uniform(0, 6)
    return img


def _blob_field(rng, h, w, cy, cx, n_blobs, radius):
    yy, xx = np.mgrid[0:h, 0:w]
    wfield = np.zeros((h, w))
    for _ in range(n_blobs):
        by = cy + rng.normal(0, radius * 0.5)
        bx = cx + rng.normal(0, radius * 0.5)
        sy = rng.uniform(radius * 0.25, radius * 0.7)
        sx = rng.uniform(radius * 0.25, radius * 0.7)
        wfield += np.exp(-(((yy - by) / sy) ** 2 + ((xx - bx) / sx) ** 2))
    return np.clip(wfield, 0.0, 1.0)


def _draw_discoloration(rng, img, mask):
    h, w = mask.shape
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    radius = rng.uniform(18, max(24, min(h, w) * 0.12))
    wfield = _blob_field(rng, h, w, cy, cx, int(rng.integers(2, 6)), radius)
    tint = _rust_tint(rng)
    img += wfield[:, :, None] * (tint[None, None, :] - img) * rng.uniform(0.55, 0.85)
    mask[wfield > 0.35] = 1


def _draw_pits(rng, img, mask):
    h, w = mask.shape
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    spread = rng.uniform(12, 42)
    n = int(rng.integers(6, 28))
    dark = rng.uniform(25, 60)
    for _ in range(n):
        py = int(cy + rng.normal(0, spread))
        px = int(cx + rng.normal(0, spread))
        if not (0 <= py < h and 0 <= px < w):
            continue
        ax = int(rng.integers(1, 5))
        ay = int(rng.integers(1, 5))
        ang = rng.uniform(0, 180)
        cv2.ellipse(img, (px, py), (ax, ay), ang, 0, 360, (dark, dark * 0.9, dark * 0.8), -1)
        cv2.ellipse(mask, (px, py), (ax + 1, ay + 1), ang, 0, 360, 1, -1)


def _draw_crack(rng, img, mask):
    h, w = mask.shape
    length = rng.uniform(100, 1500)
    width_px = int(rng.integers(1, 5))
    step = 4.0
    theta = rng.uniform(0, 2 * np.pi)
    y, x = rng.uniform(0, h), rng.uniform(0, w)
    pts = [(x, y)]
    travelled = 0.0
    branches = []
    while travelled < length:
        theta += np.deg2rad(rng.uniform(-15, 15))
        x += step * np.cos(theta)
        y += step * np.sin(theta)
        travelled += step
        pts.append((x, y))
        if rng.random() < 0.01 and len(branches) < 2:
            branches.append((x, y, theta + rng.uniform(-1.0, 1.0), length * 0.25))
    polylines = [pts]
    for bx, by, bth, blen in branches:
        bpts = [(bx, by)]
        t, xx2, yy2, th = 0.0, bx, by, bth
        while t < blen:
            th += np.deg2rad(rng.uniform(-15, 15))
            xx2 += step * np.cos(th)
            yy2 += step * np.sin(th)
            t += step
            bpts.append((xx2, yy2))
        polylines.append(bpts)
    dark = rng.uniform(15, 50)
    halo = rng.random() < 0.5
    for line in polylines:
        arr = np.array(line, dtype=np.int32).reshape(-1, 1, 2)
        if halo:
            halo_mask = np.zeros((h, w), dtype=np.uint8)
            cv2.polylines(halo_mask, [arr], False, 1, thickness=width_px + int(rng.integers(4, 10)))
            hf = gaussian_filter(halo_mask.astype(np.float64), 3.0)
            hf = np.clip(hf / max(hf.max(), 1e-9), 0, 1) * rng.uniform(0.25, 0.5)
            tint = _rust_tint(rng)
            img += hf[:, :, None] * (tint[None, None, :] - img)
            mask[halo_mask > 0] = 1
        cv2.polylines(img, [arr], False, (dark, dark, dark), thickness=width_px)
        cv2.polylines(mask, [arr], False, 1, thickness=width_px)


def _draw_scratch(rng, img):
    h, w = img.shape[:2]
    x0, y0 = rng.uniform(0, w), rng.uniform(0, h)
    ang = rng.uniform(0, 2 * np.pi)
    ln = rng.uniform(80, max(120, 0.8 * max(h, w)))
    x1, y1 = x0 + ln * np.cos(ang), y0 + ln * np.sin(ang)
    bright = rng.choice([rng.uniform(200, 250), rng.uniform(30, 70)])
    cv2.line(
        img,
        (int(x0), int(y0)),
        (int(x1), int(y1)),
        (bright, bright, bright),
        thickness=int(rng.integers(1, 3)),
    )


def _apply_shadow(rng, img):
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    kind = rng.random()
    if kind < 0.5:
        ang = rng.uniform(0, 2 * np.pi)
        ramp = (np.cos(ang) * xx / max(w - 1, 1)) + (np.sin(ang) * yy / max(h - 1, 1))
        ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
        mult = 1.0 - rng.uniform(0.15, 0.4) * ramp
    else:
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sig = rng.uniform(0.3, 0.7) * max(h, w)
        mult = 1.0 - rng.uniform(0.2, 0.45) * np.exp(
            -(((yy - cy) / sig) ** 2 + ((xx - cx) / sig) ** 2)
        )
    img *= mult[:, :, None]


_DEFECT_PAINTERS = {
    "discoloration_blotch": _draw_discoloration,
    "pit_cluster": _draw_pits,
    "crack_polyline": _draw_crack,
}


def generate_surface(spec: SurfaceSpec, seed: int) -> tuple[Image, DefectMask]:
    """Render one surface and its binary corrosion mask, deterministically."""
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence([0x5EED, int(seed) & 0xFFFFFFFF]))
    h, w = spec.height, spec.width
    img = _brushed_metal(rng, h, w)
    mask = np.zeros((h, w), dtype=np.uint8)

    n_conf = int(rng.integers(spec.confounder_count_range[0], spec.confounder_count_range[1] + 1))
    n_def = int(rng.integers(spec.defect_count_range[0], spec.defect_count_range[1] + 1))

    conf_kinds = list(spec.confounder_mix)
    conf_p = np.array([spec.confounder_mix[k] for k in conf_kinds])
    for _ in range(n_conf):
        kind = conf_kinds[int(rng.choice(len(conf_kinds), p=conf_p))]
        if kind == "scratch_line":
            _draw_scratch(rng, img)
        else:
            _apply_shadow(rng, img)

    def_kinds = list(spec.defect_mix)
    def_p = np.array([spec.defect_mix[k] for k in def_kinds])
    for _ in range(n_def):
        kind = def_kinds[int(rng.choice(len(def_kinds), p=def_p))]
        _DEFECT_PAINTERS[kind](rng, img, mask)

    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return Image(id=f"surface_{seed}", pixels=pixels), DefectMask(values=mask)


def mask_to_labels(mask: DefectMask, spec: TilingSpec | None = None, min_pixels: int = DEFAULT_MIN_PIXELS):
    """Label each tile window corroded iff it contains >= min_pixels mask pixels.

    Order matches TileGrid row-major order.
    """
    spec = spec or TilingSpec()
    rows, cols = imaging.grid_shape(mask.height, mask.width, spec)
    t, s = spec.tile_size, spec.stride
    labels = []
    for r in range(rows):
        for c in range(cols):
            window = mask.values[r * s : r * s + t, c * s : c * s + t]
            labels.append(1 if int(window.sum()) >= min_pixels else 0)
    return labels


def image_subseed(seed: int, index: int) -> int:
    """Schedule-independent per-image sub-seed."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFF)


def generate_dataset(
    spec: SurfaceSpec,
    n_corroded: int,
    n_intact: int,
    seed: int,
    out_dir: str,
    tiling: TilingSpec | None = None,
    min_pixels: int = DEFAULT_MIN_PIXELS,
):
    """Write image/mask pairs, tiles and a labeled manifest under out_dir.

    Corroded images are regenerated (walking the seeded stream) until at least
    one tile crosses min_pixels, so the image-level ground truth holds.
    """
    from .dataset import DatasetManifest, TileRecord

    if n_corroded < 0 or n_intact < 0:
        raise errors.InvalidSpec("counts must be >= 0")
    spec.validate()
    tiling = tiling or TilingSpec()
    img_dir = os.path.join(out_dir, "images")
    tile_dir = os.path.join(out_dir, "tiles")
    try:
        os.makedirs(img_dir, exist_ok=True)
        os.makedirs(tile_dir, exist_ok=True)
    except OSError as exc:
        raise errors.IoFailure(str(exc)) from exc

    want = [1] * n_corroded + [0] * n_intact
    records, images = [], []
    for idx, want_corroded in enumerate(want):
        image_id = f"syn_{idx:04d}"
        sub = image_subseed(seed, idx)
        if want_corroded:
            ispec = spec
        else:
            ispec = SurfaceSpec(
                width=spec.width,
                height=spec.height,
                base_texture=spec.base_texture,
                defect_mix=spec.defect_mix,
                confounder_mix=spec.confounder_mix,
                defect_count_range=(0, 0),
                confounder_count_range=spec.confounder_count_range,
            )
        for attempt in range(64):
            img, mask = generate_surface(ispec, sub + attempt)
            labels = mask_to_labels(mask, tiling, min_pixels)
            if not want_corroded or any(labels):
                break
        else:
            raise errors.IoFailure(f"could not realize a corroded image for {image_id}")
        img.id = image_id

        try:
            imaging.save_image(img, os.path.join(img_dir, f"{image_id}.png"))
            cv2.imwrite(os.path.join(img_dir, f"{image_id}.mask.png"), mask.values * 255)
        except OSError as exc:
            raise errors.IoFailure(str(exc)) from exc

        grid = imaging.tile_image(img, tiling)
        for (r, c, block), label in zip(grid.tiles, labels):
            fname = imaging.tile_filename(image_id, r, c)
            path = os.path.join(tile_dir, fname)
            imaging.save_image(block, path)
            records.append(
                TileRecord(image_id=image_id, row=r, col=c, label=label, split="train", path=path)
            )
        images.append(image_id)

    manifest = DatasetManifest.from_records(records)
    manifest.save(os.path.join(out_dir, "manifest.csv"))
    return manifest
