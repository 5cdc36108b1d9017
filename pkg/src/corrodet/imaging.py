"""Image I/O, deterministic tiling/stitching, augmentation and heatmap overlays.

Tiles are row-major from the top-left; partial edge tiles are dropped so every
tile is exactly tile_size x tile_size x 3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np
from PIL import Image as PilImage, UnidentifiedImageError

from . import errors


@dataclass
class Image:
    """Owned 8-bit RGB raster with identity and provenance."""

    id: str
    pixels: np.ndarray  # (H, W, 3) uint8
    source_path: str | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise errors.UnsupportedFormat(f"expected HxWx3 pixels, got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise errors.ZeroDimension("image has a zero dimension")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class TilingSpec:
    tile_size: int = 256
    stride: int | None = None  # None -> tile_size (non-overlapping)
    edge_policy: str = "drop_partial"

    def __post_init__(self):
        if self.stride is None:
            self.stride = self.tile_size
        if self.tile_size < 8:
            raise ValueError("tile_size must be >= 8")
        if not (1 <= self.stride <= self.tile_size):
            raise ValueError("stride must be in [1, tile_size]")
        if self.edge_policy != "drop_partial":
            raise ValueError(f"unknown edge_policy {self.edge_policy!r}")


@dataclass
class TileGrid:
    image_id: str
    rows: int
    cols: int
    tile_size: int
    stride: int
    tiles: list  # [(row, col, ndarray(tile, tile, 3) uint8)]


@dataclass
class AugmentConfig:
    max_rotation: float = 10.0  # degrees
    allow_flips: bool = True
    color_shift: float = 0.1  # fraction per channel
    zoom_range: tuple = (1.0, 1.1)
    warp_magnitude: float = 0.02
    enabled: bool = True

    def __post_init__(self):
        if self.max_rotation < 0 or self.color_shift < 0 or self.warp_magnitude < 0:
            raise ValueError("augmentation magnitudes must be >= 0")
        if self.zoom_range[0] > self.zoom_range[1]:
            raise ValueError("zoom_range min must be <= max")


@dataclass
class HeatmapPalette:
    corroded_color: tuple = (255, 210, 0)  # yellow
    intact_color: tuple = (0, 170, 40)  # green
    blend_alpha: float = 0.35

    def __post_init__(self):
        if not (0.0 <= self.blend_alpha <= 1.0):
            raise ValueError("blend_alpha must be in [0, 1]")


def load_image(path: str, image_id: str | None = None) -> Image:
    """Read a PNG/JPEG file as an 8-bit RGB Image.

    Grayscale inputs are expanded to 3 identical channels.
    """
    try:
        with PilImage.open(path) as im:
            im.load()
            if im.mode not in ("RGB", "L"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise errors.UnsupportedFormat(str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise errors.UnreadableFile(f"{path}: {exc}") from exc
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise errors.ZeroDimension(path)
    if image_id is None:
        image_id = _stem(path)
    return Image(id=image_id, pixels=arr, source_path=str(path))


def save_image(image: Image | np.ndarray, path: str) -> None:
    px = image.pixels if isinstance(image, Image) else np.asarray(image, dtype=np.uint8)
    PilImage.fromarray(px, mode="RGB").save(path)


def _stem(path) -> str:
    import os

    return os.path.splitext(os.path.basename(str(path)))[0]


def grid_shape(height: int, width: int, spec: TilingSpec) -> tuple[int, int]:
    t, s = spec.tile_size, spec.stride
    rows = (height - t) // s + 1 if height >= t else 0
    cols = (width - t) // s + 1 if width >= t else 0
    return rows, cols


def tile_image(image: Image, spec: TilingSpec | None = None) -> TileGrid:
    """Crop an image into a row-major grid of fixed-size tiles.

    Images smaller than one tile yield an empty grid.
    """
    spec = spec or TilingSpec()
    rows, cols = grid_shape(image.height, image.width, spec)
    t, s = spec.tile_size, spec.stride
    tiles = []
    for r in range(rows):
        for c in range(cols):
            block = image.pixels[r * s : r * s + t, c * s : c * s + t].copy()
            tiles.append((r, c, block))
    return TileGrid(image_id=image.id, rows=rows, cols=cols, tile_size=t, stride=s, tiles=tiles)


def stitch(grid: TileGrid) -> Image:
    """Reassemble a complete non-overlapping grid into the covered crop."""
    if grid.stride != grid.tile_size:
        raise errors.OverlappingGridUnsupported("stitch requires stride == tile_size")
    expected = {(r, c) for r in range(grid.rows) for c in range(grid.cols)}
    have = {(r, c) for r, c, _ in grid.tiles}
    if have != expected or len(grid.tiles) != grid.rows * grid.cols:
        raise errors.IncompleteGrid(f"missing tiles: {sorted(expected - have)[:4]}")
    t = grid.tile_size
    out = np.zeros((grid.rows * t, grid.cols * t, 3), dtype=np.uint8)
    for r, c, block in grid.tiles:
        out[r * t : (r + 1) * t, c * t : (c + 1) * t] = block
    return Image(id=f"{grid.image_id}_stitched", pixels=out)


def tile_filename(image_id: str, row: int, col: int) -> str:
    return f"{image_id}_r{row:03d}_c{col:03d}.png"


def augment(tile: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Apply a random rotation / flip / color shift / zoom / warp chain.

    Parameters are drawn deterministically from rng; geometry uses bilinear
    resampling with reflected borders so output size always matches input.
    """
    if not cfg.enabled:
        return tile
    h, w = tile.shape[:2]
    out = tile

    if cfg.allow_flips:
        if rng.random() < 0.5:
            out = out[:, ::-1]
        if rng.random() < 0.5:
            out = out[::-1, :]

    angle = rng.uniform(-cfg.max_rotation, cfg.max_rotation) if cfg.max_rotation > 0 else 0.0
    zoom = rng.uniform(*cfg.zoom_range)
    if angle != 0.0 or zoom != 1.0:
        m = cv2.getRotationMatrix2D((w / 2 - 0.5, h / 2 - 0.5), angle, zoom)
        out = cv2.warpAffine(
            np.ascontiguousarray(out), m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101
        )

    if cfg.warp_magnitude > 0:
        # symmetric perspective jitter: opposite corners move by mirrored offsets
        d = cfg.warp_magnitude
        dx = rng.uniform(-d, d) * w
        dy = rng.uniform(-d, d) * h
        src = np.float32([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]])
        dst = np.float32(
            [[dx, dy], [w - 1 - dx, -dy], [w - 1 - dx, h - 1 - dy], [dx, h - 1 + dy]]
        )
        mp = cv2.getPerspectiveTransform(src, dst)
        out = cv2.warpPerspective(
            np.ascontiguousarray(out), mp, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101
        )

    if cfg.color_shift > 0:
        shift = rng.uniform(-cfg.color_shift, cfg.color_shift, size=3) * 255.0
        out = np.clip(out.astype(np.float32) + shift[None, None, :], 0, 255).astype(np.uint8)

    return np.ascontiguousarray(out)


def render_heatmap(
    image: Image,
    grid: TileGrid,
    verdicts,
    palette: HeatmapPalette | None = None,
) -> Image:
    """Alpha-blend each tile region with its verdict color.

    out = round((1 - alpha) * src + alpha * color); pixels outside the tiled
    area are untouched.
    """
    palette = palette or HeatmapPalette()
    verdicts = list(verdicts)
    if len(verdicts) != grid.rows * grid.cols:
        raise errors.LengthMismatch(
            f"{len(verdicts)} verdicts for {grid.rows}x{grid.cols} grid"
        )
    a = palette.blend_alpha
    out = image.pixels.astype(np.float64).copy()
    t, s = grid.tile_size, grid.stride
    for i, (r, c, _) in enumerate(grid.tiles):
        color = palette.corroded_color if verdicts[i] else palette.intact_color
        region = out[r * s : r * s + t, c * s : c * s + t]
        region *= 1.0 - a
        region += a * np.asarray(color[:3], dtype=np.float64)
    blended = np.rint(out).clip(0, 255).astype(np.uint8)
    return Image(id=f"{image.id}_heatmap", pixels=blended)
