"""Crop, anisotropic rescale, and intensity normalization.

Original volumes (384 or 640 in-plane at 0.5 mm, 19-27 slices at
3.6 mm) are center-cropped to a 108 mm in-plane window, downsampled to
36x36 at 3 mm, and center-cropped/padded to 18 slices; z spacing is
kept at 3.6 mm so the z axis is never interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .volgrid import (
    Case,
    LabelVolume,
    Manifest,
    ValidationError,
    Volume,
    load_case,
    load_manifest,
    save_manifest,
    write_volume,
)


class SizeError(ValueError):
    """Input volume smaller than the crop window."""


@dataclass(frozen=True)
class PreprocessSpec:
    in_plane_extent_mm: float = 108.0  # 36 voxels * 3 mm
    target_shape: tuple[int, int, int] = (36, 36, 18)
    target_spacing: tuple[float, float, float] = (3.0, 3.0, 3.6)
    crop_center: tuple[int, int] | None = None  # in-plane voxels; None = volume center
    normalize: bool = True


def _grid(v: Volume | LabelVolume) -> np.ndarray:
    return v.data if isinstance(v, Volume) else v.labels


def _rebuild(v, data, spacing=None):
    spacing = spacing if spacing is not None else v.spacing
    if isinstance(v, Volume):
        return Volume(data, spacing, v.origin)
    return LabelVolume(data, spacing, v.origin)


def crop_center(v: Volume | LabelVolume, spec: PreprocessSpec):
    """In-plane crop to the physical window; z center-crop or pad to target."""
    data = _grid(v)
    nx, ny, nz = data.shape
    sx, sy, _ = v.spacing
    wx = int(round(spec.in_plane_extent_mm / sx))
    wy = int(round(spec.in_plane_extent_mm / sy))
    if nx < wx or ny < wy:
        raise SizeError(
            f"in-plane shape ({nx},{ny}) smaller than crop window ({wx},{wy})"
        )
    cx, cy = spec.crop_center if spec.crop_center is not None else (nx // 2, ny // 2)
    x0 = min(max(cx - wx // 2, 0), nx - wx)
    y0 = min(max(cy - wy // 2, 0), ny - wy)
    out = data[x0:x0 + wx, y0:y0 + wy, :]

    tz = spec.target_shape[2]
    if nz >= tz:
        z0 = (nz - tz) // 2
        out = out[:, :, z0:z0 + tz]
    else:
        before = (tz - nz) // 2
        after = tz - nz - before
        out = np.pad(out, ((0, 0), (0, 0), (before, after)))  # background pad
    return _rebuild(v, out.copy())


def resample(v: Volume | LabelVolume, target_shape, target_spacing):
    """Resample to the target grid; trilinear for images, nearest for labels.

    Axes where the source and target grids already coincide are left
    untouched (bit-exact).
    """
    if any(n <= 0 for n in target_shape):
        raise ValidationError(f"non-positive target shape {target_shape}")
    data = _grid(v)
    same = [
        data.shape[a] == target_shape[a] and np.isclose(v.spacing[a], target_spacing[a])
        for a in range(3)
    ]
    if all(same):
        return _rebuild(v, data.copy(), tuple(target_spacing))

    # voxel-center alignment: target index i maps to source coordinate
    # (i + 0.5) * (target_spacing / source_spacing) - 0.5
    axes = []
    for a in range(3):
        if same[a]:
            axes.append(np.arange(target_shape[a], dtype=np.float64))
        else:
            scale = target_spacing[a] / v.spacing[a]
            axes.append((np.arange(target_shape[a]) + 0.5) * scale - 0.5)
    coords = np.meshgrid(*axes, indexing="ij")
    order = 1 if isinstance(v, Volume) else 0
    out = ndimage.map_coordinates(data, coords, order=order, mode="nearest")
    return _rebuild(v, out.astype(data.dtype, copy=False), tuple(target_spacing))


def normalize_intensity(v: Volume) -> Volume:
    """Per-volume z-score; constant volumes map to all zeros."""
    data = v.data.astype(np.float64)
    std = data.std()
    if std == 0:
        return v.with_data(np.zeros_like(v.data))
    out = (data - data.mean()) / std
    return v.with_data(out.astype(np.float32))


def preprocess_case(
    image: Volume, labels: LabelVolume, spec: PreprocessSpec = PreprocessSpec()
) -> tuple[Volume, LabelVolume]:
    """Full pipeline: crop -> resample -> normalize (image only)."""
    if image.shape != labels.shape:
        raise ValidationError(
            f"image shape {image.shape} != label shape {labels.shape}"
        )
    image = crop_center(image, spec)
    labels = crop_center(labels, spec)
    image = resample(image, spec.target_shape, spec.target_spacing)
    labels = resample(labels, spec.target_shape, spec.target_spacing)
    if spec.normalize:
        image = normalize_intensity(image)
    return image, labels


def preprocess_dataset(manifest_path, out_dir, spec: PreprocessSpec = PreprocessSpec()):
    """Preprocess every case in a manifest; writes pairs + a new manifest."""
    manifest = load_manifest(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = []
    for c in manifest.cases:
        image, labels = load_case(manifest_path, c)
        image, labels = preprocess_case(image, labels, spec)
        image_path = f"{c.id}_image.nii"
        label_path = f"{c.id}_labels.nii"
        write_volume(image, out / image_path)
        write_volume(labels, out / label_path)
        cases.append(Case(c.id, image_path, label_path))
    new_manifest = out / "manifest.json"
    save_manifest(Manifest(cases), new_manifest)
    return new_manifest
