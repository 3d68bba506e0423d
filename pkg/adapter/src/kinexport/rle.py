"""Run-length encoding of binary masks for the interchange wire format.

Row-major scan, alternating run lengths, first run counting background
pixels (zero when the scan starts on foreground).
"""

from __future__ import annotations

from typing import Dict, List

import numpy as np


def encode_mask(mask: np.ndarray) -> Dict[str, object]:
    """Encode a 2-d boolean array as ``{"h":.., "w":.., "runs":[..]}``."""
    grid = np.asarray(mask)
    if grid.ndim != 2 or grid.shape[0] == 0 or grid.shape[1] == 0:
        raise ValueError(f"expected a non-empty 2-d mask, got shape {grid.shape}")
    flat = grid.astype(bool).ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    runs: List[int] = [int(r) for r in np.diff(edges)]
    if flat[0]:
        runs.insert(0, 0)
    return {"h": int(grid.shape[0]), "w": int(grid.shape[1]), "runs": runs}
