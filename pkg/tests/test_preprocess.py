import numpy as np
import pytest

from zoneprior.phantom import generate_phantom
from zoneprior.preprocess import (
    PreprocessSpec,
    SizeError,
    crop_center,
    normalize_intensity,
    preprocess_case,
    resample,
)
from zoneprior.volgrid import LabelVolume, Volume


def _vol(shape, spacing=(0.5, 0.5, 3.6), seed=0):
    rng = np.random.default_rng(seed)
    return Volume(rng.normal(size=shape).astype(np.float32), spacing)


def test_crop_standard_geometry():
    out = crop_center(_vol((384, 384, 24)), PreprocessSpec())
    assert out.shape == (216, 216, 18)


def test_crop_large_geometry():
    out = crop_center(_vol((640, 640, 19)), PreprocessSpec())
    assert out.shape == (216, 216, 18)


def test_crop_identity():
    v = _vol((216, 216, 18))
    out = crop_center(v, PreprocessSpec())
    assert np.array_equal(out.data, v.data)


def test_crop_pads_short_z():
    labels = np.ones((216, 216, 10), dtype=np.uint8)
    out = crop_center(LabelVolume(labels, (0.5, 0.5, 3.6)), PreprocessSpec())
    assert out.shape == (216, 216, 18)
    assert out.labels[:, :, 0].max() == 0  # background padding
    assert out.labels[:, :, 5].min() == 1


def test_crop_too_small():
    with pytest.raises(SizeError):
        crop_center(_vol((100, 100, 18)), PreprocessSpec())


def test_resample_table_geometry():
    out = resample(_vol((216, 216, 18)), (36, 36, 18), (3.0, 3.0, 3.6))
    assert out.shape == (36, 36, 18)
    assert out.spacing == (3.0, 3.0, 3.6)


def test_resample_identity_bit_exact():
    v = _vol((36, 36, 18), spacing=(3.0, 3.0, 3.6))
    out = resample(v, (36, 36, 18), (3.0, 3.0, 3.6))
    assert np.array_equal(out.data, v.data)


def test_resample_constant_stays_constant():
    v = Volume(np.full((216, 216, 18), 4.25, dtype=np.float32), (0.5, 0.5, 3.6))
    out = resample(v, (36, 36, 18), (3.0, 3.0, 3.6))
    assert np.allclose(out.data, 4.25, rtol=1e-6)


def test_resample_labels_no_new_values():
    rng = np.random.default_rng(4)
    labels = (rng.random((216, 216, 18)) < 0.3).astype(np.uint8) * 2
    l = LabelVolume(labels, (0.5, 0.5, 3.6))
    out = resample(l, (36, 36, 18), (3.0, 3.0, 3.6))
    assert set(np.unique(out.labels)) <= set(np.unique(labels)) | {0}
    assert out.labels.dtype == labels.dtype


def test_resample_rejects_bad_shape():
    with pytest.raises(ValueError):
        resample(_vol((36, 36, 18)), (0, 36, 18), (3.0, 3.0, 3.6))


def test_normalize_zscore():
    out = normalize_intensity(_vol((20, 20, 10), seed=5))
    assert abs(out.data.mean()) < 1e-5
    assert abs(out.data.std() - 1.0) < 1e-5


def test_normalize_constant_to_zero():
    out = normalize_intensity(Volume(np.full((5, 5, 5), 7.0, dtype=np.float32)))
    assert not out.data.any()


def test_normalize_affine_invariance():
    v = _vol((12, 12, 6), seed=6)
    shifted = v.with_data(2.5 * v.data + 17.0)
    assert np.allclose(normalize_intensity(v).data,
                       normalize_intensity(shifted).data, atol=1e-5)


def test_preprocess_case_shapes(small_spec):
    img, lab = generate_phantom(small_spec, 3)
    out_img, out_lab = preprocess_case(img, lab)
    assert out_img.shape == (36, 36, 18)
    assert out_lab.shape == (36, 36, 18)
    assert out_img.spacing == (3.0, 3.0, 3.6)
    assert set(np.unique(out_lab.labels)) <= set(np.unique(lab.labels)) | {0}


def test_preprocess_fixed_point(small_spec):
    img, lab = generate_phantom(small_spec, 4)
    out_img, out_lab = preprocess_case(img, lab)
    again_img, again_lab = preprocess_case(out_img, out_lab)
    assert np.allclose(again_img.data, out_img.data, atol=1e-5)
    assert np.array_equal(again_lab.labels, out_lab.labels)


def test_preprocess_shape_mismatch():
    img = _vol((240, 240, 20))
    lab = LabelVolume(np.zeros((239, 240, 20), dtype=np.uint8), (0.5, 0.5, 3.6))
    with pytest.raises(ValueError):
        preprocess_case(img, lab)
