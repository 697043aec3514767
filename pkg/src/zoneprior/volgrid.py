"""Core volumetric data types, label encodings, and NIfTI-1 file I/O.

Label convention: 0 = background, 1 = transition zone (TZ),
2 = peripheral zone (PZ). All arrays are indexed (x, y, z).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BACKGROUND = 0
TZ = 1
PZ = 2
NUM_CLASSES = 3

# NIfTI-1 datatype codes for the supported on-disk dtypes
_NIFTI_DTYPES = {
    2: np.dtype("<u1"),   # uint8
    4: np.dtype("<i2"),   # int16
    16: np.dtype("<f4"),  # float32
}
_DTYPE_CODES = {v: k for k, v in _NIFTI_DTYPES.items()}

_HEADER_SIZE = 348
_VOX_OFFSET = 352.0


class FormatError(Exception):
    """Raised when a file is not a readable NIfTI-1 volume."""


class ValidationError(ValueError):
    """Raised when data violates a type invariant."""


def _check_geometry(shape, spacing):
    if len(shape) != 3 or any(n < 1 for n in shape):
        raise ValidationError(f"bad volume shape {shape}")
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise ValidationError(f"spacing must be positive, got {spacing}")


@dataclass(frozen=True)
class Volume:
    """3D scalar image with axis-aligned physical spacing (mm)."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValidationError(f"expected 3D data, got {self.data.ndim}D")
        _check_geometry(self.data.shape, self.spacing)

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(data, self.spacing, self.origin)


@dataclass(frozen=True)
class LabelVolume:
    """Integer-labeled grid over {background, TZ, PZ}."""

    labels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.labels.ndim != 3:
            raise ValidationError(f"expected 3D labels, got {self.labels.ndim}D")
        _check_geometry(self.labels.shape, self.spacing)
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValidationError(f"labels must be integer, got {self.labels.dtype}")
        bad = np.setdiff1d(np.unique(self.labels), [BACKGROUND, TZ, PZ])
        if bad.size:
            raise ValidationError(f"labels outside {{0,1,2}}: {bad.tolist()}")

    @property
    def shape(self):
        return self.labels.shape

    def with_labels(self, labels: np.ndarray) -> "LabelVolume":
        return LabelVolume(labels, self.spacing, self.origin)


@dataclass(frozen=True)
class ProbVolume:
    """Per-voxel class probabilities, channels (background, TZ, PZ)."""

    probs: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        p = self.probs
        if p.ndim != 4 or p.shape[-1] != NUM_CLASSES:
            raise ValidationError(f"expected (nx,ny,nz,3) probs, got {p.shape}")
        _check_geometry(p.shape[:3], self.spacing)
        if p.min() < -1e-6 or p.max() > 1 + 1e-6:
            raise ValidationError("probabilities outside [0, 1]")
        sums = p.sum(axis=-1)
        if np.abs(sums - 1.0).max() > 1e-5:
            raise ValidationError("per-voxel channel sums deviate from 1")

    @property
    def shape(self):
        return self.probs.shape[:3]


@dataclass(frozen=True)
class MaskStack:
    """Two-channel zone masks, channels (TZ, PZ), values in [0, 1]."""

    masks: np.ndarray

    def __post_init__(self):
        m = self.masks
        if m.ndim != 4 or m.shape[-1] != 2:
            raise ValidationError(f"expected (nx,ny,nz,2) masks, got {m.shape}")
        if m.min() < -1e-6 or m.max() > 1 + 1e-6:
            raise ValidationError("mask values outside [0, 1]")

    @property
    def shape(self):
        return self.masks.shape[:3]


# ---------------------------------------------------------------------------
# label / probability conversions
# ---------------------------------------------------------------------------

def one_hot(l: LabelVolume) -> ProbVolume:
    """Expand labels to a one-hot probability volume."""
    probs = np.zeros(l.shape + (NUM_CLASSES,), dtype=np.float32)
    for c in range(NUM_CLASSES):
        probs[..., c] = (l.labels == c)
    return ProbVolume(probs, l.spacing, l.origin)


def argmax_labels(p: ProbVolume) -> LabelVolume:
    """Hard labels from probabilities; ties break toward the lowest class."""
    # np.argmax returns the first maximal index, which is the lowest class
    labels = np.argmax(p.probs, axis=-1).astype(np.uint8)
    return LabelVolume(labels, p.spacing, p.origin)


def to_mask_stack(x: LabelVolume | ProbVolume) -> MaskStack:
    """Zone mask stack with channels (TZ, PZ); background is implicit."""
    if isinstance(x, LabelVolume):
        masks = np.stack(
            [(x.labels == TZ), (x.labels == PZ)], axis=-1
        ).astype(np.float32)
    elif isinstance(x, ProbVolume):
        masks = np.ascontiguousarray(x.probs[..., 1:3], dtype=np.float32)
    else:
        raise ValidationError(f"cannot build mask stack from {type(x).__name__}")
    return MaskStack(masks)


# ---------------------------------------------------------------------------
# NIfTI-1 I/O (single-file .nii subset, little-endian)
# ---------------------------------------------------------------------------

def _build_header(shape, spacing, origin, dtype_code: int) -> bytes:
    hdr = bytearray(_HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, _HEADER_SIZE)
    dims = (3,) + tuple(shape) + (1, 1, 1, 1)
    struct.pack_into("<8h", hdr, 40, *dims)
    struct.pack_into("<h", hdr, 70, dtype_code)
    struct.pack_into("<h", hdr, 72, _NIFTI_DTYPES[dtype_code].itemsize * 8)
    pixdim = (1.0,) + tuple(float(s) for s in spacing) + (0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<f", hdr, 108, _VOX_OFFSET)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<h", hdr, 252, 1)  # qform_code: scanner anat
    struct.pack_into("<h", hdr, 254, 0)  # sform_code: none
    struct.pack_into("<3f", hdr, 256, 0.0, 0.0, 0.0)  # identity quaternion
    struct.pack_into("<3f", hdr, 268, *(float(o) for o in origin))
    hdr[344:348] = b"n+1\0"
    return bytes(hdr)


def write_volume(v: Volume | LabelVolume, path) -> None:
    """Write a volume as a single-file little-endian NIfTI-1 image.

    Volumes are stored as float32, label volumes as uint8. Data is
    preserved bit-exactly for the supported dtypes.
    """
    if isinstance(v, LabelVolume):
        data = v.labels.astype("<u1", copy=False)
    elif isinstance(v, Volume):
        if not np.all(np.isfinite(v.data)):
            raise ValidationError("volume intensities contain NaN/Inf")
        data = v.data.astype("<f4", copy=False)
    else:
        raise ValidationError(f"cannot write {type(v).__name__}")
    header = _build_header(data.shape, v.spacing, v.origin, _DTYPE_CODES[data.dtype])
    with open(path, "wb") as f:
        f.write(header)
        f.write(b"\0\0\0\0")  # no header extensions
        f.write(data.tobytes(order="F"))


def read_volume(path, as_labels: bool = False) -> Volume | LabelVolume:
    """Read a single-file NIfTI-1 volume.

    With ``as_labels=True`` the file must hold integer data with values
    in {0, 1, 2} and is returned as a :class:`LabelVolume`.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than a NIfTI-1 header")
    if struct.unpack_from("<i", raw, 0)[0] != _HEADER_SIZE:
        raise FormatError(f"{path}: bad sizeof_hdr, not little-endian NIfTI-1")
    if raw[344:347] != b"n+1":
        raise FormatError(f"{path}: missing 'n+1' magic")
    dims = struct.unpack_from("<8h", raw, 40)
    if dims[0] != 3:
        raise FormatError(f"{path}: expected 3D image, got dim[0]={dims[0]}")
    shape = tuple(dims[1:4])
    dtype_code = struct.unpack_from("<h", raw, 70)[0]
    if dtype_code not in _NIFTI_DTYPES:
        raise FormatError(f"{path}: unsupported datatype code {dtype_code}")
    dtype = _NIFTI_DTYPES[dtype_code]
    pixdim = struct.unpack_from("<8f", raw, 76)
    spacing = tuple(float(s) for s in pixdim[1:4])
    origin = tuple(float(o) for o in struct.unpack_from("<3f", raw, 268))
    vox_offset = int(struct.unpack_from("<f", raw, 108)[0])
    count = int(np.prod(shape))
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=vox_offset)
    data = data.reshape(shape, order="F").copy()

    if as_labels:
        if not np.issubdtype(dtype, np.integer):
            raise ValidationError(f"{path}: labels requested from non-integer file")
        return LabelVolume(data, spacing, origin)
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: intensities contain NaN/Inf")
    return Volume(data.astype(np.float32, copy=False), spacing, origin)


# ---------------------------------------------------------------------------
# dataset manifest
# ---------------------------------------------------------------------------

@dataclass
class Case:
    id: str
    image_path: str
    label_path: str


@dataclass
class Manifest:
    cases: list[Case] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [c.id for c in self.cases]

    def case(self, case_id: str) -> Case:
        for c in self.cases:
            if c.id == case_id:
                return c
        raise KeyError(case_id)


def save_manifest(manifest: Manifest, path) -> None:
    payload = {
        "cases": [
            {"id": c.id, "image_path": c.image_path, "label_path": c.label_path}
            for c in manifest.cases
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_manifest(path) -> Manifest:
    payload = json.loads(Path(path).read_text())
    cases = [Case(c["id"], c["image_path"], c["label_path"]) for c in payload["cases"]]
    if not cases:
        raise ValidationError(f"{path}: manifest lists no cases")
    return Manifest(cases)


def load_case(manifest_path, case: Case) -> tuple[Volume, LabelVolume]:
    """Load a case resolving relative paths against the manifest location."""
    base = Path(manifest_path).parent
    image = read_volume(base / case.image_path)
    labels = read_volume(base / case.label_path, as_labels=True)
    return image, labels
