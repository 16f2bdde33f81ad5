"""Builtin fixed-cell 8x8 bitmap font for printable ASCII.

Glyphs are authored as 8 rows of 8 characters, ``#`` for ink. Every glyph
occupies one 8x8 cell; the advance equals the cell width. Codepoints outside
the table render as the fallback box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_FALLBACK = (
    "#######.",
    "#.....#.",
    "#.....#.",
    "#.....#.",
    "#.....#.",
    "#.....#.",
    "#######.",
    "........",
)

_GLYPHS: dict[str, tuple[str, ...]] = {
    " ": (
        "........",
        "........",
        "........",
        "........",
        "........",
        "........",
        "........",
        "........",
    ),
    "!": (
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "........",
        "...#....",
        "........",
    ),
    '"': (
        ".#..#...",
        ".#..#...",
        "........",
        "........",
        "........",
        "........",
        "........",
        "........",
    ),
    "#": (
        "..#.#...",
        "..#.#...",
        "#######.",
        "..#.#...",
        "#######.",
        "..#.#...",
        "..#.#...",
        "........",
    ),
    "$": (
        "...#....",
        "..####..",
        ".#.#....",
        "..###...",
        "...#.#..",
        ".####...",
        "...#....",
        "........",
    ),
    "%": (
        "##....#.",
        "##...#..",
        "....#...",
        "...#....",
        "..#.....",
        ".#...##.",
        "#....##.",
        "........",
    ),
    "&": (
        "..##....",
        ".#..#...",
        "..##....",
        ".###..#.",
        "#...##..",
        "#....#..",
        ".####.#.",
        "........",
    ),
    "'": (
        "...#....",
        "...#....",
        "........",
        "........",
        "........",
        "........",
        "........",
        "........",
    ),
    "(": (
        "....#...",
        "...#....",
        "..#.....",
        "..#.....",
        "..#.....",
        "...#....",
        "....#...",
        "........",
    ),
    ")": (
        "..#.....",
        "...#....",
        "....#...",
        "....#...",
        "....#...",
        "...#....",
        "..#.....",
        "........",
    ),
    "*": (
        "........",
        ".#.#.#..",
        "..###...",
        ".#####..",
        "..###...",
        ".#.#.#..",
        "........",
        "........",
    ),
    "+": (
        "........",
        "...#....",
        "...#....",
        ".#####..",
        "...#....",
        "...#....",
        "........",
        "........",
    ),
    ",": (
        "........",
        "........",
        "........",
        "........",
        "........",
        "..##....",
        "...#....",
        "..#.....",
    ),
    "-": (
        "........",
        "........",
        "........",
        ".#####..",
        "........",
        "........",
        "........",
        "........",
    ),
    ".": (
        "........",
        "........",
        "........",
        "........",
        "........",
        "..##....",
        "..##....",
        "........",
    ),
    "/": (
        "......#.",
        ".....#..",
        "....#...",
        "...#....",
        "..#.....",
        ".#......",
        "#.......",
        "........",
    ),
    "0": (
        ".#####..",
        "#....##.",
        "#...#.#.",
        "#..#..#.",
        "#.#...#.",
        "##....#.",
        ".#####..",
        "........",
    ),
    "1": (
        "...#....",
        "..##....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        ".#####..",
        "........",
    ),
    "2": (
        ".#####..",
        "#.....#.",
        "......#.",
        "....##..",
        "..##....",
        ".#......",
        "#######.",
        "........",
    ),
    "3": (
        ".#####..",
        "#.....#.",
        "......#.",
        "...###..",
        "......#.",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "4": (
        "....##..",
        "...#.#..",
        "..#..#..",
        ".#...#..",
        "#######.",
        ".....#..",
        ".....#..",
        "........",
    ),
    "5": (
        "#######.",
        "#.......",
        "######..",
        "......#.",
        "......#.",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "6": (
        ".#####..",
        "#.......",
        "#.......",
        "######..",
        "#.....#.",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "7": (
        "#######.",
        ".....#..",
        "....#...",
        "...#....",
        "..#.....",
        "..#.....",
        "..#.....",
        "........",
    ),
    "8": (
        ".#####..",
        "#.....#.",
        "#.....#.",
        ".#####..",
        "#.....#.",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "9": (
        ".#####..",
        "#.....#.",
        "#.....#.",
        ".######.",
        "......#.",
        "......#.",
        ".#####..",
        "........",
    ),
    ":": (
        "........",
        "..##....",
        "..##....",
        "........",
        "..##....",
        "..##....",
        "........",
        "........",
    ),
    ";": (
        "........",
        "..##....",
        "..##....",
        "........",
        "..##....",
        "...#....",
        "..#.....",
        "........",
    ),
    "<": (
        "....#...",
        "...#....",
        "..#.....",
        ".#......",
        "..#.....",
        "...#....",
        "....#...",
        "........",
    ),
    "=": (
        "........",
        "........",
        ".#####..",
        "........",
        ".#####..",
        "........",
        "........",
        "........",
    ),
    ">": (
        ".#......",
        "..#.....",
        "...#....",
        "....#...",
        "...#....",
        "..#.....",
        ".#......",
        "........",
    ),
    "?": (
        ".#####..",
        "#.....#.",
        "......#.",
        "....##..",
        "...#....",
        "........",
        "...#....",
        "........",
    ),
    "@": (
        ".#####..",
        "#.....#.",
        "#.###.#.",
        "#.#.#.#.",
        "#.####..",
        "#.......",
        ".#####..",
        "........",
    ),
    "A": (
        "..###...",
        ".#...#..",
        "#.....#.",
        "#######.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "........",
    ),
    "B": (
        "######..",
        "#.....#.",
        "#.....#.",
        "######..",
        "#.....#.",
        "#.....#.",
        "######..",
        "........",
    ),
    "C": (
        ".#####..",
        "#.....#.",
        "#.......",
        "#.......",
        "#.......",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "D": (
        "######..",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "######..",
        "........",
    ),
    "E": (
        "#######.",
        "#.......",
        "#.......",
        "#####...",
        "#.......",
        "#.......",
        "#######.",
        "........",
    ),
    "F": (
        "#######.",
        "#.......",
        "#.......",
        "#####...",
        "#.......",
        "#.......",
        "#.......",
        "........",
    ),
    "G": (
        ".#####..",
        "#.....#.",
        "#.......",
        "#..####.",
        "#.....#.",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "H": (
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#######.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "........",
    ),
    "I": (
        ".#####..",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        ".#####..",
        "........",
    ),
    "J": (
        "..#####.",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "#...#...",
        ".###....",
        "........",
    ),
    "K": (
        "#....#..",
        "#...#...",
        "#..#....",
        "###.....",
        "#..#....",
        "#...#...",
        "#....#..",
        "........",
    ),
    "L": (
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#.......",
        "#######.",
        "........",
    ),
    "M": (
        "#.....#.",
        "##...##.",
        "#.#.#.#.",
        "#..#..#.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "........",
    ),
    "N": (
        "#.....#.",
        "##....#.",
        "#.#...#.",
        "#..#..#.",
        "#...#.#.",
        "#....##.",
        "#.....#.",
        "........",
    ),
    "O": (
        ".#####..",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "P": (
        "######..",
        "#.....#.",
        "#.....#.",
        "######..",
        "#.......",
        "#.......",
        "#.......",
        "........",
    ),
    "Q": (
        ".#####..",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#...#.#.",
        "#....#..",
        ".####.#.",
        "........",
    ),
    "R": (
        "######..",
        "#.....#.",
        "#.....#.",
        "######..",
        "#...#...",
        "#....#..",
        "#.....#.",
        "........",
    ),
    "S": (
        ".#####..",
        "#.....#.",
        "#.......",
        ".#####..",
        "......#.",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "T": (
        "#######.",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "........",
    ),
    "U": (
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#.....#.",
        ".#####..",
        "........",
    ),
    "V": (
        "#.....#.",
        "#.....#.",
        "#.....#.",
        ".#...#..",
        ".#...#..",
        "..#.#...",
        "...#....",
        "........",
    ),
    "W": (
        "#.....#.",
        "#.....#.",
        "#.....#.",
        "#..#..#.",
        "#.#.#.#.",
        "##...##.",
        "#.....#.",
        "........",
    ),
    "X": (
        "#.....#.",
        ".#...#..",
        "..#.#...",
        "...#....",
        "..#.#...",
        ".#...#..",
        "#.....#.",
        "........",
    ),
    "Y": (
        "#.....#.",
        ".#...#..",
        "..#.#...",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "........",
    ),
    "Z": (
        "#######.",
        ".....#..",
        "....#...",
        "...#....",
        "..#.....",
        ".#......",
        "#######.",
        "........",
    ),
    "[": (
        "..###...",
        "..#.....",
        "..#.....",
        "..#.....",
        "..#.....",
        "..#.....",
        "..###...",
        "........",
    ),
    "\\": (
        "#.......",
        ".#......",
        "..#.....",
        "...#....",
        "....#...",
        ".....#..",
        "......#.",
        "........",
    ),
    "]": (
        "..###...",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "....#...",
        "..###...",
        "........",
    ),
    "^": (
        "...#....",
        "..#.#...",
        ".#...#..",
        "........",
        "........",
        "........",
        "........",
        "........",
    ),
    "_": (
        "........",
        "........",
        "........",
        "........",
        "........",
        "........",
        "........",
        "#######.",
    ),
    "`": (
        "..#.....",
        "...#....",
        "........",
        "........",
        "........",
        "........",
        "........",
        "........",
    ),
    "a": (
        "........",
        "........",
        ".####...",
        ".....#..",
        ".#####..",
        "#....#..",
        ".####.#.",
        "........",
    ),
    "b": (
        "#.......",
        "#.......",
        "#####...",
        "#....#..",
        "#....#..",
        "#....#..",
        "#####...",
        "........",
    ),
    "c": (
        "........",
        "........",
        ".####...",
        "#....#..",
        "#.......",
        "#....#..",
        ".####...",
        "........",
    ),
    "d": (
        ".....#..",
        ".....#..",
        ".#####..",
        "#....#..",
        "#....#..",
        "#....#..",
        ".#####..",
        "........",
    ),
    "e": (
        "........",
        "........",
        ".####...",
        "#....#..",
        "######..",
        "#.......",
        ".####...",
        "........",
    ),
    "f": (
        "..###...",
        ".#......",
        ".#......",
        "####....",
        ".#......",
        ".#......",
        ".#......",
        "........",
    ),
    "g": (
        "........",
        ".#####..",
        "#....#..",
        "#....#..",
        ".#####..",
        ".....#..",
        ".####...",
        "........",
    ),
    "h": (
        "#.......",
        "#.......",
        "#####...",
        "#....#..",
        "#....#..",
        "#....#..",
        "#....#..",
        "........",
    ),
    "i": (
        "..#.....",
        "........",
        ".##.....",
        "..#.....",
        "..#.....",
        "..#.....",
        ".###....",
        "........",
    ),
    "j": (
        "....#...",
        "........",
        "...##...",
        "....#...",
        "....#...",
        "#...#...",
        ".###....",
        "........",
    ),
    "k": (
        "#.......",
        "#.......",
        "#...#...",
        "#..#....",
        "###.....",
        "#..#....",
        "#...#...",
        "........",
    ),
    "l": (
        ".##.....",
        "..#.....",
        "..#.....",
        "..#.....",
        "..#.....",
        "..#.....",
        ".###....",
        "........",
    ),
    "m": (
        "........",
        "........",
        "##.#....",
        "#.#.#...",
        "#.#.#...",
        "#.#.#...",
        "#.#.#...",
        "........",
    ),
    "n": (
        "........",
        "........",
        "#.##....",
        "##..#...",
        "#...#...",
        "#...#...",
        "#...#...",
        "........",
    ),
    "o": (
        "........",
        "........",
        ".####...",
        "#....#..",
        "#....#..",
        "#....#..",
        ".####...",
        "........",
    ),
    "p": (
        "........",
        "#####...",
        "#....#..",
        "#....#..",
        "#####...",
        "#.......",
        "#.......",
        "........",
    ),
    "q": (
        "........",
        ".#####..",
        "#....#..",
        "#....#..",
        ".#####..",
        ".....#..",
        ".....#..",
        "........",
    ),
    "r": (
        "........",
        "........",
        "#.###...",
        "##......",
        "#.......",
        "#.......",
        "#.......",
        "........",
    ),
    "s": (
        "........",
        "........",
        ".#####..",
        "#.......",
        ".####...",
        ".....#..",
        "#####...",
        "........",
    ),
    "t": (
        "..#.....",
        "..#.....",
        "#####...",
        "..#.....",
        "..#.....",
        "..#..#..",
        "...##...",
        "........",
    ),
    "u": (
        "........",
        "........",
        "#...#...",
        "#...#...",
        "#...#...",
        "#..##...",
        ".##.#...",
        "........",
    ),
    "v": (
        "........",
        "........",
        "#.....#.",
        "#.....#.",
        ".#...#..",
        "..#.#...",
        "...#....",
        "........",
    ),
    "w": (
        "........",
        "........",
        "#.....#.",
        "#.....#.",
        "#..#..#.",
        "#.#.#.#.",
        ".#...#..",
        "........",
    ),
    "x": (
        "........",
        "........",
        "#...#...",
        ".#.#....",
        "..#.....",
        ".#.#....",
        "#...#...",
        "........",
    ),
    "y": (
        "........",
        "#....#..",
        "#....#..",
        ".#####..",
        ".....#..",
        "#....#..",
        ".####...",
        "........",
    ),
    "z": (
        "........",
        "........",
        "#####...",
        "...#....",
        "..#.....",
        ".#......",
        "#####...",
        "........",
    ),
    "{": (
        "....##..",
        "...#....",
        "...#....",
        "..#.....",
        "...#....",
        "...#....",
        "....##..",
        "........",
    ),
    "|": (
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "...#....",
        "........",
    ),
    "}": (
        "..##....",
        "....#...",
        "....#...",
        ".....#..",
        "....#...",
        "....#...",
        "..##....",
        "........",
    ),
    "~": (
        "........",
        ".##...#.",
        "#..#..#.",
        "#...##..",
        "........",
        "........",
        "........",
        "........",
    ),
}


def _rows_to_bitmap(rows: tuple[str, ...]) -> np.ndarray:
    if len(rows) != 8 or any(len(r) != 8 for r in rows):
        raise ValueError("glyph rows must form an 8x8 cell")
    bitmap = np.array([[c == "#" for c in row] for row in rows], dtype=bool)
    bitmap.setflags(write=False)
    return bitmap


@dataclass(frozen=True)
class BitmapFont:
    """Fixed-height bitmap font: one binary grid per codepoint plus a fallback."""

    glyph_height: int
    bitmaps: dict[str, np.ndarray] = field(repr=False)
    fallback: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.fallback.shape[0] != self.glyph_height:
            raise ValueError("fallback height differs from font height")
        for ch, bm in self.bitmaps.items():
            if bm.shape[0] != self.glyph_height:
                raise ValueError(f"glyph {ch!r} height differs from font height")

    def glyph(self, ch: str) -> tuple[np.ndarray, bool]:
        """Return (bitmap, known) for one character; unknown gives the fallback."""
        bm = self.bitmaps.get(ch)
        if bm is None:
            return self.fallback, False
        return bm, True


@lru_cache(maxsize=1)
def builtin_font() -> BitmapFont:
    """The embedded 8x8 ASCII font (codepoints 32..126)."""
    bitmaps = {ch: _rows_to_bitmap(rows) for ch, rows in _GLYPHS.items()}
    return BitmapFont(glyph_height=8, bitmaps=bitmaps, fallback=_rows_to_bitmap(_FALLBACK))
