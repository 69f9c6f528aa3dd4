"""Binary profile maps: Gaussian adaptive thresholding and Canny edges.

Both return ``uint8`` maps holding only 0 and 255. Windowed operations
replicate the border pixels.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .color import check_rgb, to_gray

DEFAULT_WINDOW = 3
AUTO_CANNY_SIGMA = 0.33
#: gradient magnitudes are snapped to multiples of this before suppression, so
#: neighbours that tie mathematically also tie after float summation noise
MAGNITUDE_QUANTUM = 2.0**-20


def window_sigma(k: int) -> float:
    """Conventional fixed Gaussian sigma for a ``k x k`` window."""
    return 0.3 * ((k - 1) / 2 - 1) + 0.8


def _check_window(k):
    if int(k) != k or k < 3 or k % 2 == 0:
        raise ValueError(f"window size must be an odd integer >= 3, got {k}")


def gaussian_window(k: int, sigma: float) -> np.ndarray:
    """Normalised ``k x k`` Gaussian weights centred on the middle pixel."""
    _check_window(k)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    c = (k - 1) / 2
    i, j = np.mgrid[0:k, 0:k].astype(np.float64)
    g = np.exp((-((i - c) ** 2) - (j - c) ** 2) / (2 * sigma**2))
    return g / g.sum()


def _weight_groups(k: int, sigma: float):
    # taps grouped by squared radius, so equal weights are applied once per group
    c = k // 2
    weights = gaussian_window(k, sigma)
    radii = sorted({u * u + v * v for u in range(-c, c + 1) for v in range(-c, c + 1)})
    offsets, group_index, group_weights = [], [], []
    for g, r2 in enumerate(radii):
        taps = [(u, v) for u in range(-c, c + 1) for v in range(-c, c + 1) if u * u + v * v == r2]
        group_weights.append(weights[taps[0][0] + c, taps[0][1] + c])
        offsets.extend(taps)
        group_index.extend([g] * len(taps))
    return (
        np.array(group_weights, dtype=np.float64),
        np.array(offsets, dtype=np.int64),
        np.array(group_index, dtype=np.int64),
    )


def adaptive_threshold(img, window: int = DEFAULT_WINDOW, bias: float = 0.0) -> np.ndarray:
    """255 where a pixel exceeds its Gaussian-weighted local mean ``T``.

    ``bias`` is subtracted from ``T``. The comparison is evaluated as
    ``sum G * (s - x) > -bias`` so flat neighbourhoods never pass. Accepts
    integer or real-valued single-channel input.
    """
    _check_window(window)
    s = np.asarray(img, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"expected a 2-D gray image, got shape {s.shape}")
    margin = kernels.threshold_margin(s, *_weight_groups(window, window_sigma(window)))
    return np.where(margin > -bias, 255, 0).astype(np.uint8)


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


def sobel(img):
    """Horizontal and vertical Sobel responses (x along columns, y down rows)."""
    img = np.asarray(img, dtype=np.float64)
    return kernels.correlate_replicate(img, SOBEL_X), kernels.correlate_replicate(img, SOBEL_Y)


def quantize_direction(gx, gy) -> np.ndarray:
    """Map gradient angles to codes 0..3 for 0, 45, 90 and 135 degrees."""
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    code = np.zeros(angle.shape, dtype=np.int8)
    code[(angle >= 22.5) & (angle < 67.5)] = 1
    code[(angle >= 67.5) & (angle < 112.5)] = 2
    code[(angle >= 112.5) & (angle < 157.5)] = 3
    return code


def canny_edges(img, sigma_blur: float = 1.1, t_lo: float = 50.0, t_hi: float = 100.0) -> np.ndarray:
    if t_lo > t_hi:
        raise ValueError(f"t_lo ({t_lo}) must not exceed t_hi ({t_hi})")
    if t_lo < 0:
        raise ValueError("thresholds must be non-negative")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D gray image, got shape {img.shape}")
    blurred = kernels.correlate_replicate(img, gaussian_window(5, sigma_blur))
    gx, gy = sobel(blurred)
    mag = np.round(np.sqrt(gx * gx + gy * gy) / MAGNITUDE_QUANTUM) * MAGNITUDE_QUANTUM
    keep = kernels.nonmax_suppress(mag, quantize_direction(gx, gy))
    return kernels.hysteresis(mag, keep, float(t_lo), float(t_hi))


def auto_canny_thresholds(img, sigma: float = AUTO_CANNY_SIGMA) -> tuple[float, float]:
    """``(max(0, mu (1 - sigma)), min(255, mu (1 + sigma)))`` with mu the channel median.

    The median is taken over every channel value of every pixel; for an even
    count the lower middle element is used.
    """
    if not 0 <= sigma < 1:
        raise ValueError(f"sigma must lie in [0, 1), got {sigma}")
    values = np.sort(np.asarray(img).ravel())
    if values.size == 0:
        raise ValueError("empty image")
    mu = float(values[(values.size - 1) // 2])
    return max(0.0, mu * (1 - sigma)), min(255.0, mu * (1 + sigma))


PROFILE_KINDS = ("adathresh", "edges")


def profile_map(img, kind: str) -> np.ndarray:
    """Profile of an RGB image, computed on its grayscale version."""
    img = check_rgb(img)
    gray = to_gray(img)
    if kind == "adathresh":
        return adaptive_threshold(gray)
    if kind == "edges":
        t_lo, t_hi = auto_canny_thresholds(img)
        return canny_edges(gray, t_lo=t_lo, t_hi=t_hi)
    raise ValueError(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")
