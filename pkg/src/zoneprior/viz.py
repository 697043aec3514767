"""Axial slice overlays: TZ in red, PZ in green at 50% opacity."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .volgrid import PZ, TZ, LabelVolume, Volume

_COLORS = {TZ: (255, 0, 0), PZ: (0, 255, 0)}
_OPACITY = 0.5


def _slice_to_gray(image: Volume, k: int) -> np.ndarray:
    sl = image.data[:, :, k].astype(np.float64)
    lo, hi = sl.min(), sl.max()
    if hi > lo:
        sl = (sl - lo) / (hi - lo)
    else:
        sl = np.zeros_like(sl)
    return (sl * 255).astype(np.uint8)


def overlay_array(image: Volume, labels: LabelVolume, k: int) -> np.ndarray:
    """(ny, nx, 3) RGB slice with zone overlays."""
    if not 0 <= k < image.shape[2]:
        raise IndexError(f"slice {k} out of range for {image.shape[2]} slices")
    if image.shape != labels.shape:
        raise ValueError("image and label grids differ")
    gray = _slice_to_gray(image, k)
    rgb = np.repeat(gray[:, :, None], 3, axis=2).astype(np.float64)
    lab = labels.labels[:, :, k]
    for value, color in _COLORS.items():
        mask = lab == value
        rgb[mask] = (1 - _OPACITY) * rgb[mask] + _OPACITY * np.array(color)
    # transpose so x runs left-right in the PNG
    return rgb.transpose(1, 0, 2).astype(np.uint8)


def render_overlay(image: Volume, labels: LabelVolume, k: int, out_path) -> None:
    """Write one overlaid axial slice as a PNG."""
    Image.fromarray(overlay_array(image, labels, k)).save(out_path)


def render_triptych(
    image: Volume, label_sets: list[LabelVolume], k: int, out_path
) -> None:
    """Side-by-side overlays of the same slice, e.g. (gt, baseline, constrained)."""
    panels = [overlay_array(image, lab, k) for lab in label_sets]
    gap = np.full((panels[0].shape[0], 4, 3), 255, dtype=np.uint8)
    joined = panels[0]
    for p in panels[1:]:
        joined = np.concatenate([joined, gap, p], axis=1)
    Image.fromarray(joined).save(out_path)
