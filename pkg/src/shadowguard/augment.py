"""Training-time augmentation: random shadows, profile channel, affine jitter."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .color import check_rgb, to_uint8
from .geometry import Polygon, vertex_bounds
from .profiles import PROFILE_KINDS, profile_map
from .shadow import ShadowParams, apply_shadow

#: (adv, transform) per pass, in output order
PASS_FLAGS = ((False, False), (False, True), (True, False), (True, True))


@dataclass(frozen=True)
class AugmentConfig:
    #: "adathresh", "edges", or None for a plain 3-channel pipeline
    profile_kind: str | None = "adathresh"
    adv: bool = False
    transform: bool = False
    k_range: tuple = (0.2, 0.7)
    rotation_deg: float = 15.0
    shear: float = 0.1
    translation: float = 0.1
    vertices: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.profile_kind is not None and self.profile_kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.profile_kind!r}")
        lo, hi = self.k_range
        if not (0 < lo <= hi <= 1):
            raise ValueError(f"k_range must lie within (0, 1], got {self.k_range}")

    @property
    def channels(self) -> int:
        return 3 if self.profile_kind is None else 4


def random_polygon(rng, width: int, height: int, vertices: int = 3) -> Polygon:
    lo, hi = vertex_bounds(width, height)
    return Polygon(rng.uniform(lo, hi, size=(vertices, 2)))


def random_affine(rng, width, height, cfg: AugmentConfig):
    """Output->input (matrix, offset) pair for ``ndimage.affine_transform`` in (row, col)."""
    theta = np.radians(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    shear = rng.uniform(-cfg.shear, cfg.shear)
    ty = rng.uniform(-cfg.translation, cfg.translation) * height
    tx = rng.uniform(-cfg.translation, cfg.translation) * width
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    forward = rot @ np.array([[1.0, 0.0], [shear, 1.0]])
    inverse = np.linalg.inv(forward)
    centre = np.array([(height - 1) / 2, (width - 1) / 2])
    offset = centre - inverse @ (centre + np.array([ty, tx]))
    return inverse, offset


def warp(example: np.ndarray, matrix, offset) -> np.ndarray:
    """Bilinear warp of the RGB planes, nearest-neighbour for a 4th plane."""
    out = np.empty_like(example)
    for c in range(example.shape[2]):
        order = 0 if c == 3 else 1
        plane = ndimage.affine_transform(
            example[..., c].astype(np.float64), matrix, offset, order=order, mode="nearest"
        )
        out[..., c] = to_uint8(plane)
    return out


def make_example(img, mask, cfg: AugmentConfig, rng=None) -> np.ndarray:
    """Shadow (if ``adv``), append the profile, then warp (if ``transform``).

    Returns ``uint8`` ``(H, W, 4)``, or ``(H, W, 3)`` when ``profile_kind``
    is None. The profile is computed from the possibly shadowed image. A
    ``None`` mask lets the shadow fall anywhere.
    """
    img = check_rgb(img)
    h, w = img.shape[:2]
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if cfg.adv:
        if mask is None:
            mask = np.ones((h, w), dtype=bool)
        k = float(rng.uniform(*cfg.k_range))
        poly = random_polygon(rng, w, h, cfg.vertices)
        img = apply_shadow(img, ShadowParams(k, poly), mask)
    if cfg.profile_kind is None:
        example = img.copy()
    else:
        example = np.concatenate([img, profile_map(img, cfg.profile_kind)[..., None]], axis=2)
    if cfg.transform:
        example = warp(example, *random_affine(rng, w, h, cfg))
    return example


def sample_rng(seed: int, pass_index: int, sample_index: int):
    return np.random.default_rng([seed, pass_index, sample_index])


def quadruplicate(images, masks, labels, cfg: AugmentConfig, passes=PASS_FLAGS):
    """Run one pass over the data per ``(adv, transform)`` flag pair.

    Returns ``(examples, labels, pass_ids)``; output size is
    ``len(passes) * len(images)`` and labels repeat per pass.
    """
    if len(images) == 0:
        raise ValueError("empty dataset")
    labels = np.asarray(labels)
    out, out_labels, pass_ids = [], [], []
    for p, (adv, transform) in enumerate(passes):
        pass_cfg = replace(cfg, adv=adv, transform=transform)
        for i, (img, mask) in enumerate(zip(images, masks)):
            out.append(make_example(img, mask, pass_cfg, sample_rng(cfg.seed, p, i)))
            out_labels.append(labels[i])
            pass_ids.append(p)
    return np.stack(out), np.array(out_labels), np.array(pass_ids)


def passes_for(adv: bool, transform: bool):
    """Flag pairs enabled by the run flags; both off gives a single clean pass."""
    return tuple(f for f in PASS_FLAGS if (adv or not f[0]) and (transform or not f[1]))


def encode(examples) -> np.ndarray:
    """uint8 ``(N, H, W, C)`` -> float32 ``(N, C, H, W)`` in [0, 1]."""
    x = np.asarray(examples)
    if x.ndim == 3:
        x = x[None]
    return x.transpose(0, 3, 1, 2).astype(np.float32) / np.float32(255.0)


def inference_input(img, profile_kind: str | None) -> np.ndarray:
    """Clean preprocessing of a presented image: profile always recomputed."""
    return make_example(img, None, AugmentConfig(profile_kind=profile_kind))
