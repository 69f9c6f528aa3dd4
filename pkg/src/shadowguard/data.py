"""Datasets: manifest-driven ingestion and a synthetic road-sign generator."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .color import to_uint8
from .geometry import Polygon, rasterize

IMAGE_SIZE = 32
MANIFEST_FIELDS = ("id", "relative_path", "label", "mask_path", "split")


class DatasetError(ValueError):
    pass


@dataclass
class Sample:
    image: np.ndarray
    label: int
    mask: np.ndarray
    id: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3 or self.image.dtype != np.uint8:
            raise ValueError(f"sample {self.id}: image must be uint8 (H, W, 3)")
        if self.mask.shape != self.image.shape[:2]:
            raise ValueError(f"sample {self.id}: mask shape {self.mask.shape} != image")
        if self.label < 0:
            raise ValueError(f"sample {self.id}: negative label")


# ---------------------------------------------------------------------------
# resampling and image IO


def resize_bilinear(img, height: int, width: int) -> np.ndarray:
    """Bilinear resize with pixel-centre alignment and edge clamping.

    Returns float64; round with :func:`to_uint8` for 8-bit output.
    """
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape[:2]
    ys = np.clip((np.arange(height) + 0.5) * h / height - 0.5, 0, h - 1)
    xs = np.clip((np.arange(width) + 0.5) * w / width - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if src.ndim == 3:
        fy, fx = fy[..., None], fx[..., None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def resize_nearest(img, height: int, width: int) -> np.ndarray:
    src = np.asarray(img)
    h, w = src.shape[:2]
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(int), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(int), w - 1)
    return src[rows][:, cols]


def read_rgb(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc


def read_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L")) > 0
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read mask {path}: {exc}") from exc


def write_png(path, array) -> None:
    Image.fromarray(np.asarray(array)).save(path, format="PNG", optimize=False)


# ---------------------------------------------------------------------------
# manifest ingestion


def load_dataset(root, manifest="manifest.csv", size: int = IMAGE_SIZE):
    """Load ``(train, test)`` sample lists described by a manifest CSV.

    Columns: ``id, relative_path, label, split`` and optionally
    ``mask_path``. Paths are relative to ``root``. Images are resized to
    ``size x size``; missing masks default to all-true.
    """
    root = Path(root)
    manifest = root / manifest if not Path(manifest).is_absolute() else Path(manifest)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    splits = {"train": [], "test": []}
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "relative_path", "label", "split"} - set(reader.fieldnames or [])
        if missing:
            raise DatasetError(f"{manifest}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                sid = row["id"].strip()
                label = int(row["label"])
                split = row["split"].strip()
                rel = row["relative_path"].strip()
            except (AttributeError, TypeError, ValueError) as exc:
                raise DatasetError(f"{manifest}: malformed row {lineno}: {row}") from exc
            if not sid or not rel or split not in splits or label < 0:
                raise DatasetError(f"{manifest}: malformed row {lineno}: {row}")
            path = root / rel
            if not path.is_file():
                raise DatasetError(f"{manifest}: row {lineno} refers to missing file {path}")
            image = read_rgb(path)
            mask_rel = (row.get("mask_path") or "").strip()
            if mask_rel:
                mask_path = root / mask_rel
                if not mask_path.is_file():
                    raise DatasetError(f"{manifest}: row {lineno} refers to missing mask {mask_path}")
                mask = read_mask(mask_path)
                if mask.shape != image.shape[:2]:
                    raise DatasetError(f"{mask_path}: mask size differs from {path}")
            else:
                mask = np.ones(image.shape[:2], dtype=bool)
            if image.shape[:2] != (size, size):
                image = to_uint8(resize_bilinear(image, size, size))
                mask = resize_nearest(mask, size, size)
            splits[split].append(Sample(image, label, mask, sid))
    return splits["train"], splits["test"]


def write_dataset(root, train, test, manifest="manifest.csv") -> Path:
    """Write samples as PNG images plus mask sidecars and a manifest."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    path = root / manifest
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "relative_path", "label", "mask_path", "split"])
        for split, samples in (("train", train), ("test", test)):
            for s in samples:
                img_rel = f"images/{s.id}.png"
                mask_rel = f"masks/{s.id}.png"
                write_png(root / img_rel, s.image)
                write_png(root / mask_rel, s.mask.astype(np.uint8) * 255)
                writer.writerow([s.id, img_rel, s.label, mask_rel, split])
    return path


# ---------------------------------------------------------------------------
# synthetic signs

SHAPES = ("circle", "triangle", "octagon", "square")
GLYPHS = ("30", "80")

# 3x5 digit bitmaps
_DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "8": ("111", "101", "111", "101", "111"),
}

# base colours (ring, fill, glyph)
_PALETTE = {
    "circle": ((200, 30, 35), (235, 235, 230), (25, 25, 25)),
    "triangle": ((205, 35, 30), (240, 235, 225), (25, 25, 25)),
    "octagon": ((240, 240, 240), (190, 28, 30), (245, 245, 245)),
    "square": ((25, 25, 25), (240, 200, 40), (20, 20, 20)),
}


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int = 8
    samples_per_class: int = 63
    #: half-width of the uniform jitter applied to every palette colour
    color_jitter: float = 20.0
    background_range: tuple = (110, 230)
    noise_sigma: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.class_count <= len(SHAPES) * len(GLYPHS):
            raise ValueError(f"class_count must lie in [2, {len(SHAPES) * len(GLYPHS)}]")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")


def class_table():
    """``(shape, glyph)`` for each class id."""
    return [(shape, glyph) for shape in SHAPES for glyph in GLYPHS]


def shape_polygon(shape: str, cx: float, cy: float, r: float, n_circle: int = 0):
    """Vertices of a sign outline; ``None`` for the circle (tested analytically)."""
    if shape == "circle":
        return None
    if shape == "triangle":
        angles = np.radians([-90, 30, 150])
        # centroid-centred, slightly enlarged so the area matches the others
        r = r * 1.25
        return Polygon(np.stack([cx + r * np.cos(angles), cy + 0.25 * r + r * np.sin(angles)], 1))
    if shape == "octagon":
        angles = np.radians(22.5 + 45 * np.arange(8))
        return Polygon(np.stack([cx + r * np.cos(angles), cy + r * np.sin(angles)], 1))
    if shape == "square":
        h = r * 0.9
        return Polygon([(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)])
    raise ValueError(f"unknown shape {shape!r}")


def shape_mask(shape: str, cx: float, cy: float, r: float, size: int) -> np.ndarray:
    if shape == "circle":
        yy, xx = np.mgrid[0:size, 0:size] + 0.5
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return rasterize(shape_polygon(shape, cx, cy, r), size, size)


def glyph_mask(text: str, cx: float, cy: float, size: int, scale: int = 2) -> np.ndarray:
    cells = [np.array([[c == "1" for c in row] for row in _DIGITS[d]]) for d in text]
    gap = np.zeros((5, 1), dtype=bool)
    bitmap = cells[0]
    for cell in cells[1:]:
        bitmap = np.hstack([bitmap, gap, cell])
    bitmap = np.kron(bitmap, np.ones((scale, scale), dtype=bool))
    out = np.zeros((size, size), dtype=bool)
    gh, gw = bitmap.shape
    top = int(round(cy - gh / 2))
    left = int(round(cx - gw / 2))
    out[top:top + gh, left:left + gw] = bitmap
    return out


def render_sign(rng, shape: str, glyph: str, spec: SyntheticSpec, size: int = IMAGE_SIZE):
    """Render one sign; returns ``(image, mask)``."""
    cx = size / 2 + rng.uniform(-1.5, 1.5)
    cy = size / 2 + rng.uniform(-1.5, 1.5)
    r = rng.uniform(11.5, 13.5)
    ring, fill, ink = (
        np.clip(np.array(c, dtype=np.float64) + rng.uniform(-spec.color_jitter, spec.color_jitter, 3), 0, 255)
        for c in _PALETTE[shape]
    )
    lo, hi = spec.background_range
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = rng.uniform(lo, hi, 3)
    # soft vertical illumination gradient in the background
    img *= np.linspace(1 + 0.08 * rng.uniform(-1, 1), 1 - 0.08 * rng.uniform(-1, 1), size)[:, None, None]

    outer = shape_mask(shape, cx, cy, r, size)
    inner = shape_mask(shape, cx, cy, r * 0.78, size)
    gy = cy + (2.0 if shape == "triangle" else 0.0)
    text = glyph_mask(glyph, cx, gy, size) & inner
    img[outer] = ring
    img[inner] = fill
    img[text] = ink
    img += rng.normal(0.0, spec.noise_sigma, img.shape)
    return to_uint8(img), outer


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec(), size: int = IMAGE_SIZE):
    """Render a balanced dataset; returns ``(train, test)`` with an 80/20 split per class."""
    rng = np.random.default_rng(spec.seed)
    table = class_table()[: spec.class_count]
    train, test = [], []
    n_train = int(round(0.8 * spec.samples_per_class))
    for label, (shape, glyph) in enumerate(table):
        samples = []
        for j in range(spec.samples_per_class):
            image, mask = render_sign(rng, shape, glyph, spec, size)
            samples.append(Sample(image, label, mask, f"syn-{label:02d}-{j:04d}"))
        order = rng.permutation(len(samples))
        train += [samples[i] for i in order[:n_train]]
        test += [samples[i] for i in order[n_train:]]
    return train, test
