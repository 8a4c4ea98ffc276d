"""Multi-scale tile extraction and mosaic merging for high-resolution ROIs.

A tile set holds exactly ``n_tiles`` crops allocated round-robin over the
(window size, zoom level) cross-product; the mosaic packs them onto a square
grid so a standard fixed-input backbone can consume one image per ROI.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import cv2
import numpy as np

from .preprocess import DEFAULT_LUMINANCE_THRESHOLD, NEUTRAL_GRAY, check_image, luminance

log = logging.getLogger(__name__)


class TilingError(ValueError):
    """Fatal tiling configuration or input error."""


@dataclass(frozen=True)
class TileSpec:
    window_sizes: tuple[int, ...] = (128, 256, 512)
    zoom_levels: int = 3
    n_tiles: int = 50
    canvas_dims: tuple[int, int] = (1748, 1748)
    selection_seed: int = 0
    background_threshold: int = DEFAULT_LUMINANCE_THRESHOLD
    max_attempts: int = 20

    def __post_init__(self) -> None:
        if self.n_tiles < 1:
            raise TilingError(f"n_tiles must be >= 1, got {self.n_tiles}")
        if self.zoom_levels < 1:
            raise TilingError(f"zoom_levels must be >= 1, got {self.zoom_levels}")
        if not self.window_sizes or min(self.window_sizes) < 1:
            raise TilingError(f"invalid window_sizes {self.window_sizes}")

    def combinations(self) -> list[tuple[int, int]]:
        """(window, zoom) pairs in allocation order."""
        return [(w, z) for w in self.window_sizes for z in range(self.zoom_levels)]


@dataclass(frozen=True)
class Tile:
    pixels: np.ndarray
    window: int
    zoom: int
    source_rect: tuple[int, int, int, int]  # (x, y, w, h) in original coordinates


@dataclass(frozen=True)
class TileSet:
    tiles: tuple[Tile, ...]
    source_id: str = ""


def zoomed_view(image: np.ndarray, zoom: int) -> np.ndarray:
    """Source image at zoom level ``zoom``: downscaled by 2**zoom (floor dims)."""
    if zoom == 0:
        return image
    f = 2**zoom
    h, w = image.shape[0] // f, image.shape[1] // f
    if h < 1 or w < 1:
        return image[:0, :0]
    return cv2.resize(image, (w, h), interpolation=cv2.INTER_LINEAR)


def allocate_round_robin(n_tiles: int, n_combos: int) -> list[int]:
    """Tiles per combination: the first ``n_tiles % n_combos`` combos get one extra."""
    base, extra = divmod(n_tiles, n_combos)
    return [base + 1 if i < extra else base for i in range(n_combos)]


def extract_tiles(image: np.ndarray, spec: TileSpec, source_id: str = "") -> TileSet:
    """Extract ``spec.n_tiles`` tiles spread over window sizes and zoom levels.

    Tile locations are drawn uniformly at random; near-background candidates
    (mean luminance above the threshold) are redrawn up to ``max_attempts``
    times, then accepted regardless. Deterministic for a fixed selection seed.
    """
    check_image(image)
    rng = np.random.default_rng(spec.selection_seed)
    views = {z: zoomed_view(image, z) for z in range(spec.zoom_levels)}
    usable: list[tuple[int, int]] = []
    for window, zoom in spec.combinations():
        zh, zw = views[zoom].shape[:2]
        if window <= min(zh, zw):
            usable.append((window, zoom))
        else:
            log.warning(
                "skipping tile combination window=%d zoom=%d: zoomed image is %dx%d",
                window, zoom, zh, zw,
            )
    if not usable:
        raise TilingError(
            f"image {image.shape[:2]} smaller than every window at every zoom level"
        )
    tiles: list[Tile] = []
    for (window, zoom), count in zip(usable, allocate_round_robin(spec.n_tiles, len(usable))):
        view = views[zoom]
        zh, zw = view.shape[:2]
        f = 2**zoom
        for _ in range(count):
            crop = None
            for _attempt in range(max(1, spec.max_attempts)):
                y = int(rng.integers(0, zh - window + 1))
                x = int(rng.integers(0, zw - window + 1))
                crop = view[y : y + window, x : x + window]
                if luminance(crop).mean() <= spec.background_threshold:
                    break
            tiles.append(
                Tile(
                    pixels=crop.copy(),
                    window=window,
                    zoom=zoom,
                    source_rect=(x * f, y * f, window * f, window * f),
                )
            )
    return TileSet(tuple(tiles), source_id)


def _cell_edges(total: int, cells: int) -> list[int]:
    """Cell boundary offsets; the remainder goes one pixel each to trailing cells."""
    base, extra = divmod(total, cells)
    sizes = [base] * (cells - extra) + [base + 1] * extra
    edges = [0]
    for s in sizes:
        edges.append(edges[-1] + s)
    return edges


def merge_tiles(tileset: TileSet, canvas_dims: tuple[int, int]) -> np.ndarray:
    """Pack tiles left-to-right, top-to-bottom onto a square grid mosaic.

    The grid has ceil(sqrt(n)) cells per side; each tile is rescaled to its
    cell and unused trailing cells are filled neutral gray. Output dims are
    exactly ``canvas_dims``.
    """
    n = len(tileset.tiles)
    if n == 0:
        raise TilingError("cannot merge an empty tile set")
    ch, cw = canvas_dims
    if ch < 1 or cw < 1:
        raise TilingError(f"canvas_dims must be positive, got {canvas_dims}")
    grid = int(np.ceil(np.sqrt(n)))
    row_edges = _cell_edges(ch, grid)
    col_edges = _cell_edges(cw, grid)
    canvas = np.full((ch, cw, 3), NEUTRAL_GRAY, dtype=np.uint8)
    for i, tile in enumerate(tileset.tiles):
        r, c = divmod(i, grid)
        y0, y1 = row_edges[r], row_edges[r + 1]
        x0, x1 = col_edges[c], col_edges[c + 1]
        canvas[y0:y1, x0:x1] = cv2.resize(
            tile.pixels, (x1 - x0, y1 - y0), interpolation=cv2.INTER_LINEAR
        )
    return canvas


def tile_mosaic(image: np.ndarray, spec: TileSpec, source_id: str = "") -> np.ndarray:
    """Convenience: extract tiles then merge onto the spec's canvas."""
    return merge_tiles(extract_tiles(image, spec, source_id), spec.canvas_dims)


def dump_tiles(image: np.ndarray, spec: TileSpec, out_dir, source_id: str = "sample") -> None:
    """Debug output: write every tile and the merged mosaic as PNGs."""
    from pathlib import Path

    from PIL import Image

    out_dir = Path(out_dir) / source_id
    out_dir.mkdir(parents=True, exist_ok=True)
    tileset = extract_tiles(image, spec, source_id)
    for i, tile in enumerate(tileset.tiles):
        Image.fromarray(tile.pixels).save(
            out_dir / f"tile_{i:03d}_w{tile.window}_z{tile.zoom}.png"
        )
    Image.fromarray(merge_tiles(tileset, spec.canvas_dims)).save(out_dir / "mosaic.png")
