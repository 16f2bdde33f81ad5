"""Glyph canvases: rasterize target text into binary images with ink masks.

The canvas is the model's pixel space, so its dimensions must be multiples of
the patch size. Rendering is binary (pixels exactly 0 or 1) and deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeMismatch, TextOverflow
from .font8 import BitmapFont, builtin_font
from .netpbm import read_netpbm

INK_THRESHOLD = 0.5


class Layout(str, enum.Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    DIAGONAL = "diagonal"


@dataclass
class GlyphImage:
    """Grayscale canvas in [0,1] with a binary ink mask of the same shape."""

    width: int
    height: int
    pixels: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    text: str
    layout: Layout
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("canvas dimensions must be positive")
        if self.pixels.shape != (self.height, self.width):
            raise ShapeMismatch(
                f"pixels shape {self.pixels.shape} != (height, width) ({self.height}, {self.width})"
            )
        if self.mask.shape != self.pixels.shape:
            raise ShapeMismatch("mask shape differs from pixels shape")
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ConfigError("pixel intensities must lie in [0,1]")
        # every masked cell must carry at least threshold ink
        if np.any(self.pixels[self.mask] < INK_THRESHOLD):
            raise ConfigError("mask covers cells below the ink threshold")
        if self.text and not self.mask.any():
            raise ConfigError("nonempty text produced an empty mask")


def _scaled(bitmap: np.ndarray, scale: int) -> np.ndarray:
    if scale == 1:
        return bitmap
    return np.repeat(np.repeat(bitmap, scale, axis=0), scale, axis=1)


def rasterize_text(
    text: str,
    font: BitmapFont | None = None,
    layout: Layout = Layout.HORIZONTAL,
    width: int = 128,
    height: int = 128,
    scale: int = 1,
    patch: int = 8,
) -> GlyphImage:
    """Render `text` centered on a width x height canvas.

    Successive glyphs advance by their own scaled width: rightward for
    Horizontal, downward by the scaled cell height for Vertical, and equally
    right and down for Diagonal. Unknown codepoints render as the fallback box
    and are recorded in the result's warning list, never raised.
    """
    if not text:
        raise ConfigError("text must be nonempty")
    if scale < 1:
        raise ConfigError("scale must be >= 1")
    if patch < 1 or width % patch or height % patch:
        raise ConfigError(f"canvas {width}x{height} must be a positive multiple of patch {patch}")
    if font is None:
        font = builtin_font()

    warnings: list[str] = []
    glyphs: list[np.ndarray] = []
    for ch in text:
        bitmap, known = font.glyph(ch)
        if not known:
            warnings.append(f"codepoint U+{ord(ch):04X} not in font, fallback glyph used")
        glyphs.append(_scaled(bitmap, scale))

    cell_h = font.glyph_height * scale
    advances = [g.shape[1] for g in glyphs]

    # glyph origin offsets inside the run's bounding box
    if layout is Layout.HORIZONTAL:
        xs = np.concatenate([[0], np.cumsum(advances[:-1])]).astype(int)
        ys = np.zeros(len(glyphs), dtype=int)
    elif layout is Layout.VERTICAL:
        xs = np.zeros(len(glyphs), dtype=int)
        ys = np.arange(len(glyphs)) * cell_h
    elif layout is Layout.DIAGONAL:
        xs = np.concatenate([[0], np.cumsum(advances[:-1])]).astype(int)
        ys = xs.copy()
    else:
        raise ConfigError(f"unknown layout {layout!r}")

    run_w = int(max(x + g.shape[1] for x, g in zip(xs, glyphs)))
    run_h = int(max(y + g.shape[0] for y, g in zip(ys, glyphs)))
    if run_w > width or run_h > height:
        raise TextOverflow(
            f"rendered run {run_w}x{run_h} exceeds canvas {width}x{height}"
        )

    ox = (width - run_w) // 2
    oy = (height - run_h) // 2
    canvas = np.zeros((height, width), dtype=bool)
    for g, x, y in zip(glyphs, xs, ys):
        gh, gw = g.shape
        canvas[oy + y : oy + y + gh, ox + x : ox + x + gw] |= g

    return GlyphImage(
        width=width,
        height=height,
        pixels=canvas.astype(np.float64),
        mask=canvas.copy(),
        text=text,
        layout=layout,
        warnings=tuple(warnings),
    )


def load_glyph_bitmap(path, patch: int = 8) -> GlyphImage:
    """Load a PBM/PGM file as a glyph image, padded up to a patch multiple.

    Grayscale is normalized to [0,1]; the mask is intensity >= 0.5. Padding is
    background (0) on the bottom and right so pixel (0,0) stays top-left.
    """
    if patch < 1:
        raise ConfigError("patch must be >= 1")
    arr = read_netpbm(path)
    h, w = arr.shape
    pad_h = (-h) % patch
    pad_w = (-w) % patch
    if pad_h or pad_w:
        arr = np.pad(arr, ((0, pad_h), (0, pad_w)), mode="constant")
    return GlyphImage(
        width=arr.shape[1],
        height=arr.shape[0],
        pixels=arr,
        mask=arr >= INK_THRESHOLD,
        text="",
        layout=Layout.HORIZONTAL,
    )


def glyph_mask_patch_counts(g: GlyphImage, patch: int) -> np.ndarray:
    """Integer count of set mask cells per patch, row-major over the patch grid."""
    if patch < 1:
        raise ConfigError("patch must be >= 1")
    if g.height % patch or g.width % patch:
        raise ShapeMismatch(f"image {g.width}x{g.height} not divisible by patch {patch}")
    gh = g.height // patch
    gw = g.width // patch
    blocks = g.mask.astype(np.int64).reshape(gh, patch, gw, patch)
    return blocks.sum(axis=(1, 3)).reshape(gh * gw)


def glyph_mask_patches(g: GlyphImage, patch: int) -> np.ndarray:
    """Fraction of mask cells set per patch, in [0,1], row-major."""
    counts = glyph_mask_patch_counts(g, patch)
    return counts.astype(np.float64) / float(patch * patch)
