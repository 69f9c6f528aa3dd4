from collections import Counter

import numpy as np
import pytest
from PIL import Image

import oracles
from shadowguard.data import (
    DatasetError,
    Sample,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    resize_bilinear,
    shape_polygon,
    write_dataset,
    write_png,
)

HEADER = "id,relative_path,label,mask_path,split\n"


def write_manifest(root, text):
    (root / "manifest.csv").write_text(text)


def test_sample_validation():
    img = np.zeros((4, 4, 3), np.uint8)
    with pytest.raises(ValueError):
        Sample(img, -1, np.ones((4, 4), bool), "a")
    with pytest.raises(ValueError):
        Sample(img, 0, np.ones((4, 5), bool), "a")


def test_empty_manifest(tmp_path):
    write_manifest(tmp_path, HEADER)
    assert load_dataset(tmp_path) == ([], [])


def test_single_row(tmp_path):
    write_png(tmp_path / "a.png", np.full((32, 32, 3), 90, np.uint8))
    write_manifest(tmp_path, HEADER + "sign-a,a.png,5,,test\n")
    train, test = load_dataset(tmp_path)
    assert train == [] and len(test) == 1
    s = test[0]
    assert s.label == 5 and s.id == "sign-a" and s.mask.all() and s.image.shape == (32, 32, 3)


def test_resize_from_64_matches_bilinear_oracle(tmp_path, rng):
    src = rng.integers(0, 256, (64, 64, 3)).astype(np.uint8)
    write_png(tmp_path / "big.png", src)
    write_manifest(tmp_path, HEADER + "b,big.png,0,,train\n")
    s = load_dataset(tmp_path)[0][0]
    assert s.image.shape == (32, 32, 3)
    ref = np.array(oracles.bilinear(src.astype(float).tolist(), 32, 32))
    np.testing.assert_allclose(resize_bilinear(src, 32, 32), ref, atol=1e-9)
    np.testing.assert_array_equal(s.image, np.floor(ref + 0.5).astype(np.uint8))


def test_resize_odd_factor_matches_oracle(rng):
    src = rng.random((7, 5, 3)) * 255
    np.testing.assert_allclose(resize_bilinear(src, 11, 3), oracles.bilinear(src.tolist(), 11, 3), atol=1e-9)


def test_mask_sidecar_loaded(tmp_path):
    write_png(tmp_path / "a.png", np.zeros((32, 32, 3), np.uint8))
    m = np.zeros((32, 32), np.uint8)
    m[4:10, 4:10] = 255
    write_png(tmp_path / "a_mask.png", m)
    write_manifest(tmp_path, HEADER + "a,a.png,1,a_mask.png,train\n")
    s = load_dataset(tmp_path)[0][0]
    assert s.mask.sum() == 36


def test_ppm_images_supported(tmp_path):
    Image.fromarray(np.full((32, 32, 3), 40, np.uint8)).save(tmp_path / "a.ppm")
    write_manifest(tmp_path, "id,relative_path,label,split\na,a.ppm,0,train\n")
    assert load_dataset(tmp_path)[0][0].image[0, 0, 0] == 40


@pytest.mark.parametrize("row,needle", [
    ("a,missing.png,0,,train", "row 2"),
    ("a,a.png,x,,train", "row 2"),
    ("a,a.png,0,,validation", "row 2"),
    ("a,a.png,-3,,train", "row 2"),
    ("a,a.png,0,nomask.png,train", "row 2"),
])
def test_bad_rows_are_named(tmp_path, row, needle):
    write_png(tmp_path / "a.png", np.zeros((32, 32, 3), np.uint8))
    write_manifest(tmp_path, HEADER + row + "\n")
    with pytest.raises(DatasetError, match=needle):
        load_dataset(tmp_path)


def test_unreadable_image_names_file(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"not an image")
    write_manifest(tmp_path, HEADER + "a,bad.png,0,,train\n")
    with pytest.raises(DatasetError, match="bad.png"):
        load_dataset(tmp_path)


def test_missing_columns(tmp_path):
    write_manifest(tmp_path, "id,label\n")
    with pytest.raises(DatasetError, match="missing columns"):
        load_dataset(tmp_path)


def test_synthetic_split_arithmetic():
    train, test = generate_synthetic(SyntheticSpec(class_count=2, samples_per_class=10))
    assert len(train) == 16 and len(test) == 4
    assert Counter(s.label for s in train) == {0: 8, 1: 8}
    assert Counter(s.label for s in test) == {0: 2, 1: 2}


def test_synthetic_default_size():
    train, test = generate_synthetic(SyntheticSpec())
    assert len(train) >= 400 and len(test) >= 100


def test_synthetic_is_deterministic():
    a = generate_synthetic(SyntheticSpec(class_count=3, samples_per_class=4, seed=9))
    b = generate_synthetic(SyntheticSpec(class_count=3, samples_per_class=4, seed=9))
    for x, y in zip(a[0] + a[1], b[0] + b[1]):
        assert x.image.tobytes() == y.image.tobytes() and x.id == y.id
        np.testing.assert_array_equal(x.mask, y.mask)


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(class_count=1)
    with pytest.raises(ValueError):
        SyntheticSpec(class_count=9)


def test_masks_match_containment_oracle():
    from shadowguard import data as d
    for shape in d.SHAPES:
        cx, cy, r = 16.3, 15.8, 12.4
        got = d.shape_mask(shape, cx, cy, r, 32)
        if shape == "circle":
            ref = [[(j + 0.5 - cx) ** 2 + (i + 0.5 - cy) ** 2 <= r * r for j in range(32)] for i in range(32)]
        else:
            ref = oracles.rasterize(shape_polygon(shape, cx, cy, r).to_list(), 32, 32)
        np.testing.assert_array_equal(got, np.array(ref))


def test_write_then_load_round_trip(tmp_path):
    train, test = generate_synthetic(SyntheticSpec(class_count=2, samples_per_class=5))
    write_dataset(tmp_path, train, test)
    tr2, te2 = load_dataset(tmp_path)
    assert [s.id for s in tr2] == [s.id for s in train]
    for a, b in zip(train + test, tr2 + te2):
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.mask, b.mask)
        assert a.label == b.label
