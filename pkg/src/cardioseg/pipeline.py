"""End-to-end segmentation control flow.

The initialization network segments the middle slice; the propagation
network then extends the segmentation 4 slices at a time toward the base
(upward) and the apex (downward). Near a bound the last window is
re-anchored so its final lookahead slice lands exactly on the bound, and
only still-unmasked slices are written, so every slice in
[0, base_index] receives exactly one prediction.
"""

from dataclasses import dataclass

import numpy as np

from .networks import PropagationInput

WINDOW = 4  # slices predicted per propagation step


@dataclass
class PropagationState:
    """Bookkeeping for one propagation direction."""

    frontier: int
    direction: str                # "up" | "down"
    masks: dict                   # slice index -> probability mask
    bounds: tuple                 # (apex_limit, base_index)


@dataclass
class SegmentationResult:
    probability: np.ndarray       # (base_index + 1, h, w)
    binary: np.ndarray            # same shape, uint8
    init_index: int
    slices_segmented: range


def binarize(prob_mask, threshold=0.5):
    """Probability >= threshold -> 1, else 0."""
    return (np.asarray(prob_mask) >= threshold).astype(np.uint8)


def select_init_slice(v):
    """Middle of the below-base stack: floor((0 + base_index) / 2)."""
    return v.base_index // 2


def propagate(volume_data, init_mask, init_index, predictor, direction,
              bounds, stride=WINDOW):
    """Propagate slice masks from init_index to the directional bound.

    `predictor` maps a PropagationInput to a (4, h, w) stack of
    probability masks for the next 4 slices in propagation order. Returns
    {slice index: probability mask} for every newly segmented slice.
    """
    apex_limit, base_index = bounds
    nz = volume_data.shape[0]
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    if not (apex_limit <= init_index <= base_index) or base_index >= nz:
        raise ValueError(
            f"init_index {init_index} with bounds {bounds} invalid for {nz} slices"
        )
    if stride not in (1, WINDOW):
        raise ValueError(f"stride must be 1 or {WINDOW}, got {stride}")
    d = 1 if direction == "up" else -1
    bound = base_index if direction == "up" else apex_limit
    state = PropagationState(
        frontier=init_index,
        direction=direction,
        masks={init_index: np.asarray(init_mask, dtype=np.float64)},
        bounds=(apex_limit, base_index),
    )
    pending = set(range(init_index + d, bound + d, d))
    produced = {}
    while pending:
        z = state.frontier
        if (bound - z) * d < WINDOW:
            # fewer than 4 slices left: re-anchor so the window ends on the
            # bound (falls back to the current frontier on tiny volumes
            # where that anchor has no mask yet)
            candidate = bound - WINDOW * d
            if candidate in state.masks:
                z = candidate
        anchor_mask = binarize(state.masks[z]).astype(np.float64)
        look = [min(max(z + k * d, 0), nz - 1) for k in range(1, WINDOW + 1)]
        pinput = PropagationInput(
            anchor_slice=volume_data[z][None],
            anchor_mask=anchor_mask[None],
            lookahead_slices=volume_data[look],
        )
        preds = np.asarray(predictor(pinput))
        for k in range(WINDOW):
            idx = z + (k + 1) * d
            if idx in pending:
                mask = preds[k].astype(np.float64)
                produced[idx] = mask
                state.masks[idx] = mask
                pending.discard(idx)
        state.frontier = z + stride * d
    return produced


def segment_volume(v, init_predictor, prop_predictor, stride=WINDOW):
    """Segment a preprocessed volume into a 3D myocardium mask.

    `init_predictor`: slice (h, w) -> probability mask (h, w).
    `prop_predictor`: PropagationInput -> (4, h, w) probability masks.
    """
    h, w = v.data.shape[1], v.data.shape[2]
    init_index = select_init_slice(v)
    init_prob = np.asarray(init_predictor(v.data[init_index]), dtype=np.float64)
    init_mask = binarize(init_prob)
    bounds = (0, v.base_index)
    up = propagate(v.data, init_mask, init_index, prop_predictor, "up",
                   bounds, stride)
    down = propagate(v.data, init_mask, init_index, prop_predictor, "down",
                     bounds, stride)
    probability = np.zeros((v.base_index + 1, h, w))
    probability[init_index] = init_prob
    for idx, m in (*up.items(), *down.items()):
        probability[idx] = m
    return SegmentationResult(
        probability=probability,
        binary=binarize(probability),
        init_index=init_index,
        slices_segmented=range(0, v.base_index + 1),
    )
