"""Binary-mask and bounding-box algebra.

Masks travel as run-length encodings over a row-major scan: alternating
run lengths, the first run counting background pixels. Only the leading
run may be zero. Everything here is a pure function on immutable values,
so concurrent callers are safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np


class MaskError(ValueError):
    """Malformed mask or incompatible mask dimensions."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in image space (origin top-left), corners (x1,y1) <= (x2,y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"inverted bbox ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask; ``runs`` alternate background/foreground."""

    height: int
    width: int
    runs: Tuple[int, ...]

    def check(self) -> None:
        """Raise MaskError unless this is a well-formed encoding."""
        if self.height <= 0 or self.width <= 0:
            raise MaskError(f"non-positive mask dimensions {self.height}x{self.width}")
        if any(r < 0 for r in self.runs):
            raise MaskError("negative run length")
        if any(r == 0 for r in self.runs[1:]):
            raise MaskError("zero-length interior run")
        total = sum(self.runs)
        if total != self.height * self.width:
            raise MaskError(
                f"run sum {total} does not cover {self.height}x{self.width} grid"
            )

    @property
    def area(self) -> int:
        """Foreground pixel count (runs at odd positions)."""
        return sum(self.runs[1::2])

    def to_wire(self) -> Dict[str, object]:
        return {"h": self.height, "w": self.width, "runs": list(self.runs)}

    @classmethod
    def from_wire(cls, obj: Dict[str, object]) -> "RleMask":
        try:
            height = obj["h"]
            width = obj["w"]
            runs = obj["runs"]
        except (KeyError, TypeError) as exc:
            raise MaskError(f"mask object missing field: {exc}") from exc
        if not isinstance(height, int) or not isinstance(width, int):
            raise MaskError("mask dimensions must be integers")
        if not isinstance(runs, list) or not all(isinstance(r, int) for r in runs):
            raise MaskError("mask runs must be a list of integers")
        mask = cls(height=height, width=width, runs=tuple(runs))
        mask.check()
        return mask


@dataclass(frozen=True)
class MaskStats:
    """Foreground area and centroid; ``centroid`` is None exactly when area is 0."""

    area: int
    centroid: Optional[Tuple[float, float]]

    @property
    def is_empty(self) -> bool:
        return self.area == 0


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode to a dense boolean grid of shape (height, width)."""
    mask.check()
    values = (np.arange(len(mask.runs)) % 2).astype(bool)
    flat = np.repeat(values, mask.runs)
    return flat.reshape(mask.height, mask.width)


def rle_encode(dense: np.ndarray) -> RleMask:
    """Encode a dense binary grid (row-major scan, leading background run)."""
    grid = np.asarray(dense)
    if grid.ndim != 2 or grid.shape[0] == 0 or grid.shape[1] == 0:
        raise MaskError(f"expected a non-empty 2-d grid, got shape {grid.shape}")
    flat = grid.astype(bool).ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(height=grid.shape[0], width=grid.shape[1], runs=tuple(int(r) for r in runs))


def mask_stats(mask: RleMask) -> MaskStats:
    """Area and centroid streamed over the runs; no dense decode.

    Centroid uses pixel-center coordinates: pixel (row, col) contributes
    (col, row) as (x, y).
    """
    area = 0
    sum_x = 0
    sum_y = 0
    pos = 0
    foreground = False
    for run in mask.runs:
        if foreground and run:
            idx = np.arange(pos, pos + run, dtype=np.int64)
            sum_x += int((idx % mask.width).sum())
            sum_y += int((idx // mask.width).sum())
            area += run
        pos += run
        foreground = not foreground
    if area == 0:
        return MaskStats(area=0, centroid=None)
    return MaskStats(area=area, centroid=(sum_x / area, sum_y / area))


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; two zero-area boxes give 0."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(0.0, iw) * max(0.0, ih)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def bbox_center(b: BBox) -> Tuple[float, float]:
    return ((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0)


def _value_runs(mask: RleMask) -> List[Tuple[bool, int]]:
    out: List[Tuple[bool, int]] = []
    value = False
    for run in mask.runs:
        if run:
            out.append((value, run))
        value = not value
    return out


def _overlap_counts(a: RleMask, b: RleMask) -> Tuple[int, int]:
    """(intersection, union) pixel counts via a joint walk over both run lists."""
    if (a.height, a.width) != (b.height, b.width):
        raise MaskError(
            f"mask dimensions differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    runs_a = _value_runs(a)
    runs_b = _value_runs(b)
    ia = ib = 0
    consumed_a = consumed_b = 0
    inter = union = 0
    while ia < len(runs_a) and ib < len(runs_b):
        va, na = runs_a[ia]
        vb, nb = runs_b[ib]
        step = min(na - consumed_a, nb - consumed_b)
        if va and vb:
            inter += step
        if va or vb:
            union += step
        consumed_a += step
        consumed_b += step
        if consumed_a == na:
            ia += 1
            consumed_a = 0
        if consumed_b == nb:
            ib += 1
            consumed_b = 0
    return inter, union


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Mask IoU; two empty masks agree perfectly and give 1.0."""
    inter, union = _overlap_counts(a, b)
    if union == 0:
        return 1.0
    return inter / union


def mask_xor_union(a: RleMask, b: RleMask) -> Tuple[int, int]:
    """(symmetric-difference, union) pixel counts, exact integer arithmetic."""
    inter, union = _overlap_counts(a, b)
    return union - inter, union
