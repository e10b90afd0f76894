"""CBCT segmentation evaluation, post-processing and planning toolkit.

Volumes are numpy arrays of shape (nx, ny, nz); Fortran order avoids a copy.
"""

import json

from ._core import (
    IoError,
    ValidationError,
    average_argmax,
    connected_components,
    decode_border_core,
    dice,
    edt_sq,
    encode_border_core,
    evaluate_case,
    hd95,
    majority_vote,
    mean_ranks,
    normalize_ct,
    read_label_volume,
    read_scalar_volume,
    toothfairy2_labels,
    write_label_volume,
)
from ._core import apply_cutoffs as _apply_cutoffs
from ._core import optimize_cutoffs as _optimize_cutoffs
from ._core import plan as _plan


def optimize_cutoffs(cases, labels, **kwargs):
    """Cutoff table for (pred, gt) pairs, as a dict."""
    return json.loads(_optimize_cutoffs(cases, labels, **kwargs))


def apply_cutoffs(pred, cutoffs):
    """Removes small components; `cutoffs` is a table dict or its JSON text."""
    if not isinstance(cutoffs, str):
        cutoffs = json.dumps(cutoffs)
    return _apply_cutoffs(pred, cutoffs)


def plan(patch=None, preset="baseline", **kwargs):
    """Network plan as a dict."""
    return json.loads(_plan(patch, preset, **kwargs))


__all__ = [
    "IoError",
    "ValidationError",
    "apply_cutoffs",
    "average_argmax",
    "connected_components",
    "decode_border_core",
    "dice",
    "edt_sq",
    "encode_border_core",
    "evaluate_case",
    "hd95",
    "majority_vote",
    "mean_ranks",
    "normalize_ct",
    "optimize_cutoffs",
    "plan",
    "read_label_volume",
    "read_scalar_volume",
    "toothfairy2_labels",
    "write_label_volume",
]
