"""Randomized spatial augmentation for training samples.

Five transforms: small translations, left-right flips, isotropic
expansions, in-plane rotations, and elastic deformations. They are
composed into a single resampling pass so interpolation blur is not
compounded, and every sample draw is seeded by (seed, epoch, index) so
results do not depend on worker scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volgrid import LabelVolume, ValidationError, Volume


@dataclass(frozen=True)
class AugmentSpec:
    grid_shape: tuple[int, int, int] = (36, 36, 18)
    translation: tuple[float, float, float] = (3.0, 3.0, 1.0)  # +/- voxels
    flip_prob: float = 0.5  # left-right (x) axis only
    scale_range: tuple[float, float] = (1.0, 1.15)
    rotation_deg: float = 10.0  # about z
    elastic_alpha: float = 2.0  # max displacement, voxels
    elastic_sigma: float = 4.0  # smoothing, voxels
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must be in [0, 1]")
        if self.scale_range[0] > self.scale_range[1]:
            raise ValueError("empty scale range")
        if self.elastic_alpha < 0 or self.elastic_sigma <= 0:
            raise ValueError("elastic_alpha >= 0 and elastic_sigma > 0 required")


@dataclass(frozen=True)
class TransformParams:
    translation: tuple[float, float, float]
    flip: bool
    scale: float
    rotation_deg: float
    elastic: np.ndarray  # (3, nx, ny, nz) displacement field, pre-smoothed

    @classmethod
    def identity(cls, shape) -> "TransformParams":
        return cls((0.0, 0.0, 0.0), False, 1.0, 0.0, np.zeros((3,) + tuple(shape)))


def elastic_field(shape, alpha: float, sigma: float, seed) -> np.ndarray:
    """Smoothed random displacement field with max magnitude <= alpha."""
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-1.0, 1.0, size=(3,) + tuple(shape))
    field = np.stack([ndimage.gaussian_filter(n, sigma) for n in noise])
    norms = np.sqrt((field ** 2).sum(axis=0))
    peak = norms.max()
    if peak > 0:
        field *= alpha / peak
    else:
        field[:] = 0.0
    return field


def sample_transform(spec: AugmentSpec, epoch: int, index: int) -> TransformParams:
    """Draw transform parameters for one training sample.

    Deterministic given (spec, epoch, index) and independent of the
    order in which samples are drawn.
    """
    ss = np.random.SeedSequence([int(spec.seed), int(epoch), int(index)])
    rng = np.random.default_rng(ss)
    translation = tuple(rng.uniform(-t, t) if t > 0 else 0.0 for t in spec.translation)
    flip = bool(rng.random() < spec.flip_prob)
    scale = float(rng.uniform(*spec.scale_range))
    rot = float(rng.uniform(-spec.rotation_deg, spec.rotation_deg)) \
        if spec.rotation_deg > 0 else 0.0
    if spec.elastic_alpha > 0:
        field = elastic_field(
            spec.grid_shape, spec.elastic_alpha, spec.elastic_sigma, ss.spawn(1)[0]
        )
    else:
        field = np.zeros((3,) + tuple(spec.grid_shape))
    return TransformParams(translation, flip, scale, rot, field)


def _sample_coords(shape, t: TransformParams) -> np.ndarray:
    """Source coordinates for each output voxel under the composite map."""
    nx, ny, nz = shape
    gx, gy, gz = np.meshgrid(
        np.arange(nx, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nz, dtype=np.float64),
        indexing="ij",
    )
    if t.flip:
        gx = (nx - 1) - gx
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    if t.rotation_deg != 0.0:
        # inverse rotation about the z axis, in-plane center
        th = -np.deg2rad(t.rotation_deg)
        dx, dy = gx - cx, gy - cy
        gx = cx + np.cos(th) * dx - np.sin(th) * dy
        gy = cy + np.sin(th) * dx + np.cos(th) * dy
    if t.scale != 1.0:
        cz = (nz - 1) / 2.0
        gx = cx + (gx - cx) / t.scale
        gy = cy + (gy - cy) / t.scale
        gz = cz + (gz - cz) / t.scale
    tx, ty, tz = t.translation
    if (tx, ty, tz) != (0.0, 0.0, 0.0):
        gx, gy, gz = gx - tx, gy - ty, gz - tz
    if t.elastic.any():
        gx = gx + t.elastic[0]
        gy = gy + t.elastic[1]
        gz = gz + t.elastic[2]
    return np.stack([gx, gy, gz])


def apply_transform(
    image: Volume, labels: LabelVolume, t: TransformParams
) -> tuple[Volume, LabelVolume]:
    """Apply one composite transform identically to image and labels.

    Single resampling pass: trilinear for the image, nearest for
    labels; out-of-bounds voxels become background/zero.
    """
    if image.shape != labels.shape:
        raise ValidationError(
            f"image shape {image.shape} != label shape {labels.shape}"
        )
    if t.elastic.shape[1:] != image.shape:
        raise ValidationError(
            f"elastic field shape {t.elastic.shape[1:]} != grid {image.shape}"
        )
    coords = _sample_coords(image.shape, t)
    out_image = ndimage.map_coordinates(
        image.data.astype(np.float64), coords, order=1, mode="constant", cval=0.0
    ).astype(np.float32)
    out_labels = ndimage.map_coordinates(
        labels.labels, coords, order=0, mode="constant", cval=0
    )
    return image.with_data(out_image), labels.with_labels(out_labels)
