"""Input stream derivations: bones, motion, and logit ensembling.

These operate on plain numpy arrays shaped (..., C, T, N) so they slot in
before tensors enter the model.  Bone vectors point from the source joint
to the target joint of each layout bone pair; the center joint keeps a
zero bone.  Motion is the forward temporal difference with a zero final
frame.  Multi-stream fusion is an elementwise sum of logits.
"""

from __future__ import annotations

import numpy as np

MODALITIES = ("joint", "bone", "joint_motion", "bone_motion")


def derive_bone(coords, layout):
    """Bone vectors per layout bone pair; (..., C, T, N) in and out."""
    coords = np.asarray(coords)
    if coords.shape[-1] != layout.n_joints:
        raise ValueError(
            f"last axis {coords.shape[-1]} does not match layout with "
            f"{layout.n_joints} joints"
        )
    bones = np.zeros_like(coords)
    for source, target in layout.bone_pairs:
        bones[..., target] = coords[..., target] - coords[..., source]
    return bones


def derive_motion(coords):
    """Forward frame difference along the time axis (axis -2); last frame zero."""
    coords = np.asarray(coords)
    motion = np.zeros_like(coords)
    motion[..., :-1, :] = coords[..., 1:, :] - coords[..., :-1, :]
    return motion


def apply_modality(coords, modality, layout):
    if modality == "joint":
        return np.asarray(coords)
    if modality == "bone":
        return derive_bone(coords, layout)
    if modality == "joint_motion":
        return derive_motion(coords)
    if modality == "bone_motion":
        return derive_motion(derive_bone(coords, layout))
    raise ValueError(f"unknown modality {modality!r}, expected one of {MODALITIES}")


def ensemble_logits(logit_arrays):
    """Sum per-stream logits; all arrays must share one shape."""
    arrays = [np.asarray(a) for a in logit_arrays]
    if not arrays:
        raise ValueError("ensemble needs at least one logit array")
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ValueError(f"logit shapes differ: {shape} vs {a.shape}")
    total = np.zeros(shape, dtype=np.float64)
    for a in arrays:
        total += a
    return total
