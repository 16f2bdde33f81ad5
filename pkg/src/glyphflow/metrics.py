"""Text-fidelity and structure metrics: exact match, character F1, on-mask
attention coverage, and sweep-grid aggregation.

Character F1 is bag-of-codepoints: the multiset intersection of the two
strings sets precision against the prediction and recall against the target.
No OCR happens here; predicted strings are caller-supplied.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateCell, ShapeMismatch, ZeroRowMass

MASK_THRESHOLD = 0.5


@dataclass(frozen=True)
class CharF1Result:
    precision: float
    recall: float
    f1: float


def exact_match(predicted: str, target: str) -> bool:
    """Codepoint-exact equality after trimming surrounding whitespace."""
    return predicted.strip() == target.strip()


def char_f1(predicted: str, target: str) -> CharF1Result:
    """Multiset codepoint overlap after trimming surrounding whitespace.

    Shares exact_match's trim so an exact match always scores F1 = 1.
    Both empty scores 1; empty vs nonempty 0.
    """
    predicted = predicted.strip()
    target = target.strip()
    if not predicted and not target:
        return CharF1Result(1.0, 1.0, 1.0)
    if not predicted or not target:
        return CharF1Result(0.0, 0.0, 0.0)
    overlap = Counter(predicted) & Counter(target)
    inter = sum(overlap.values())
    precision = inter / len(predicted)
    recall = inter / len(target)
    if precision + recall == 0.0:
        return CharF1Result(0.0, 0.0, 0.0)
    f1 = 2.0 * precision * recall / (precision + recall)
    return CharF1Result(precision, recall, f1)


def mask_coverage(
    rows: np.ndarray, mask_frac: np.ndarray, threshold: float = MASK_THRESHOLD
) -> float:
    """Mean on-mask attention fraction over the given I2I rows.

    A patch is on-mask when its mask fraction is >= threshold; each row is
    normalized by its own total mass. Complements attention_shift: the two
    sum to 1 for identical inputs.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None]
    mask_frac = np.asarray(mask_frac, dtype=np.float64)
    if rows.ndim != 2 or mask_frac.ndim != 1 or rows.shape[1] != mask_frac.shape[0]:
        raise ShapeMismatch(
            f"rows {rows.shape} incompatible with mask fractions {mask_frac.shape}"
        )
    if rows.shape[0] == 0:
        raise ShapeMismatch("at least one row required")
    on = mask_frac >= threshold
    denom = rows.sum(axis=1)
    if np.any(denom <= 0.0):
        raise ZeroRowMass("row carries no attention mass")
    return float(np.mean(rows[:, on].sum(axis=1) / denom))


@dataclass(frozen=True)
class SweepCell:
    ratio: float
    step: int
    metric: str
    value: float
    manifest_ref: str | None = None


def sweep_aggregate(
    cells: list[SweepCell],
    ratios: tuple[float, ...] | None = None,
    steps: tuple[int, ...] | None = None,
) -> dict[str, dict[tuple[float, int], float | None]]:
    """Arrange cells into complete (ratio x step) grids, one per metric.

    Grid axes come from the arguments when given, otherwise from the cells.
    Missing cells map to None; a repeated (ratio, step, metric) raises.
    """
    seen: set[tuple[float, int, str]] = set()
    for c in cells:
        key = (c.ratio, c.step, c.metric)
        if key in seen:
            raise DuplicateCell(f"duplicate sweep cell {key}")
        seen.add(key)

    grid_ratios = tuple(sorted(ratios if ratios is not None else {c.ratio for c in cells}))
    grid_steps = tuple(sorted(steps if steps is not None else {c.step for c in cells}))
    metrics = sorted({c.metric for c in cells})

    values = {(c.ratio, c.step, c.metric): c.value for c in cells}
    tables: dict[str, dict[tuple[float, int], float | None]] = {}
    for metric in metrics:
        table: dict[tuple[float, int], float | None] = {}
        for ratio in grid_ratios:
            for step in grid_steps:
                table[(ratio, step)] = values.get((ratio, step, metric))
        tables[metric] = table
    return tables


def render_sweep_csv(table: dict[tuple[float, int], float | None], metric: str) -> str:
    """CSV with header ratio,step,<metric>; ratios then steps ascending; NA for holes."""
    lines = [f"ratio,step,{metric}"]
    for (ratio, step) in sorted(table):
        value = table[(ratio, step)]
        cell = "NA" if value is None else repr(float(value))
        lines.append(f"{ratio!r},{step},{cell}")
    return "\n".join(lines) + "\n"
