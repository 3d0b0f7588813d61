"""Temporal stabilisation of the root channels and binary mask cleanup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .mask_io import LATERAL_ROOT, MAIN_ROOT, LabelMask

DEFAULT_ALPHA_15MIN = 0.7
EIGHT = np.ones((3, 3), dtype=bool)


def default_alpha(interval_hours: float) -> float:
    """Weight giving the same memory half-life as 0.7 at a 15 minute cadence."""
    return DEFAULT_ALPHA_15MIN ** (interval_hours / 0.25)


@dataclass(frozen=True)
class AccumulatorState:
    alpha: float
    accum_main: np.ndarray | None = None
    accum_lateral: np.ndarray | None = None
    frame_count: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")


def accumulate(state: AccumulatorState, mask: LabelMask) -> AccumulatorState:
    """Fold one frame into the trailing sums ``a_t = s_t + alpha * a_{t-1}`` for classes 1 and 2."""
    labels = mask.labels
    s_main = (labels == MAIN_ROOT).astype(np.float64)
    s_lat = (labels == LATERAL_ROOT).astype(np.float64)
    if state.accum_main is None:
        return AccumulatorState(state.alpha, s_main, s_lat, 1)
    if state.accum_main.shape != labels.shape:
        raise ValueError(
            f"mask shape {labels.shape} does not match accumulator {state.accum_main.shape}"
        )
    a = state.alpha
    return AccumulatorState(
        a,
        s_main + a * state.accum_main,
        s_lat + a * state.accum_lateral,
        state.frame_count + 1,
    )


def fuse(state: AccumulatorState, mask: LabelMask, threshold: float = 1.0) -> LabelMask:
    """Assert root classes wherever their accumulator reaches ``threshold``.

    Only background and root pixels can change; where both root channels
    qualify the larger accumulator wins (main on ties).
    """
    labels = mask.labels
    if state.accum_main is None:
        return mask
    main_on = state.accum_main >= threshold
    lat_on = state.accum_lateral >= threshold
    editable = labels <= LATERAL_ROOT
    out = labels.copy()
    main_wins = main_on & (~lat_on | (state.accum_main >= state.accum_lateral))
    out[editable & main_wins] = MAIN_ROOT
    out[editable & lat_on & ~main_wins] = LATERAL_ROOT
    return LabelMask(out)


def clean_binary(mask: np.ndarray, min_component_px: int) -> np.ndarray:
    """3x3 closing, then drop 8-connected components smaller than ``min_component_px``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return mask.copy()
    padded = np.pad(mask, 1)
    closed = ndimage.binary_closing(padded, structure=EIGHT)[1:-1, 1:-1]
    labels, n = ndimage.label(closed, structure=EIGHT)
    if n == 0:
        return closed
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_component_px
    keep[0] = False
    return keep[labels]
