"""Procedural prostate-like phantoms: image + two-zone labels.

The transition zone (TZ) is a central ellipsoid; the peripheral zone
(PZ) is a posterior crescent cut from a larger co-centered ellipsoid.
Intensities are per-region means plus Gaussian noise, so the zones are
learnable at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .volgrid import (
    BACKGROUND,
    PZ,
    TZ,
    Case,
    LabelVolume,
    Manifest,
    Volume,
    save_manifest,
    write_volume,
)


class GenerationError(Exception):
    """Raised when a requested zone does not fit the grid."""


@dataclass(frozen=True)
class PhantomSpec:
    # defaults match the original acquisition geometry so the
    # crop/rescale stage is exercised on realistic inputs
    shape: tuple[int, int, int] = (384, 384, 24)
    spacing: tuple[float, float, float] = (0.5, 0.5, 3.6)
    # TZ semi-axes (mm): (x, y, z) ranges
    tz_semi_axes_mm: tuple[tuple[float, float], ...] = (
        (14.0, 22.0), (12.0, 20.0), (10.0, 16.0)
    )
    # PZ shell thickness (mm) added to the TZ semi-axes
    pz_shell_mm: tuple[float, float] = (6.0, 12.0)
    intensity_means: tuple[float, float, float] = (120.0, 200.0, 50.0)  # bg, TZ, PZ
    intensity_stds: tuple[float, float, float] = (8.0, 8.0, 8.0)
    noise_std: float = 8.0
    seed: int = 0

    def __post_init__(self):
        for lo, hi in self.tz_semi_axes_mm:
            if lo > hi or lo <= 0:
                raise ValueError(f"bad TZ semi-axis range ({lo}, {hi})")
        lo, hi = self.pz_shell_mm
        if lo > hi or lo <= 0:
            raise ValueError(f"bad PZ shell range ({lo}, {hi})")


def case_seed(spec_seed: int, index: int) -> int:
    """Per-case seed derived by hashing (top-level seed, case index)."""
    ss = np.random.SeedSequence([int(spec_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def generate_phantom(spec: PhantomSpec, seed: int) -> tuple[Volume, LabelVolume]:
    """One deterministic phantom case from (spec, seed)."""
    rng = np.random.default_rng(seed)
    nx, ny, nz = spec.shape
    sx, sy, sz = spec.spacing

    semi = np.array([rng.uniform(lo, hi) for lo, hi in spec.tz_semi_axes_mm])
    shell = rng.uniform(*spec.pz_shell_mm)
    outer = semi + shell

    # physical coordinates (mm) about a jittered grid center
    center = np.array([nx * sx, ny * sy, nz * sz]) / 2.0
    center[:2] += rng.uniform(-4.0, 4.0, size=2)
    extent = np.array([nx * sx, ny * sy, nz * sz])
    if np.any(center - outer < 0) or np.any(center + outer > extent):
        raise GenerationError(
            f"outer ellipsoid semi-axes {outer} do not fit grid extent {extent}"
        )

    x = (np.arange(nx) + 0.5) * sx - center[0]
    y = (np.arange(ny) + 0.5) * sy - center[1]
    z = (np.arange(nz) + 0.5) * sz - center[2]
    xx = (x / semi[0]) ** 2
    yy = (y / semi[1]) ** 2
    zz = (z / semi[2]) ** 2
    tz_mask = xx[:, None, None] + yy[None, :, None] + zz[None, None, :] <= 1.0

    ox = (x / outer[0]) ** 2
    oy = (y / outer[1]) ** 2
    oz = (z / outer[2]) ** 2
    outer_mask = ox[:, None, None] + oy[None, :, None] + oz[None, None, :] <= 1.0
    # posterior half: +y side of the center plane
    posterior = (y > 0)[None, :, None]
    pz_mask = outer_mask & ~tz_mask & posterior

    labels = np.zeros(spec.shape, dtype=np.uint8)
    labels[tz_mask] = TZ
    labels[pz_mask] = PZ
    if not tz_mask.any() or not pz_mask.any():
        raise GenerationError("generated phantom is missing a zone")

    means = np.array(spec.intensity_means, dtype=np.float32)
    stds = np.array(spec.intensity_stds, dtype=np.float32)
    data = np.full(spec.shape, means[BACKGROUND], dtype=np.float32)
    data[tz_mask] = means[TZ]
    data[pz_mask] = means[PZ]
    texture = rng.normal(0.0, 1.0, size=spec.shape).astype(np.float32)
    data += texture * stds[labels]
    data += rng.normal(0.0, spec.noise_std, size=spec.shape).astype(np.float32)

    image = Volume(data, spec.spacing)
    return image, LabelVolume(labels, spec.spacing)


def generate_dataset(spec: PhantomSpec, count: int, out_dir) -> Path:
    """Write ``count`` phantom cases as NIfTI pairs plus a JSON manifest.

    Returns the manifest path. Regeneration with the same spec yields
    byte-identical cases regardless of generation order.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = []
    for i in range(count):
        cid = f"case_{i:03d}"
        image, labels = generate_phantom(spec, case_seed(spec.seed, i))
        image_path = f"{cid}_image.nii"
        label_path = f"{cid}_labels.nii"
        write_volume(image, out / image_path)
        write_volume(labels, out / label_path)
        cases.append(Case(cid, image_path, label_path))
    manifest_path = out / "manifest.json"
    save_manifest(Manifest(cases), manifest_path)
    return manifest_path
