"""Pure numpy implementations of the per-pixel kernels.

Every function here has a twin in ``_ckernels.pyx`` and both must produce
bit-identical output: floating point accumulations happen in the same order.
"""
import numpy as np
from scipy import ndimage


def correlate_replicate(img, kernel):
    """2-D correlation of ``img`` with an odd square ``kernel``, edge-replicated."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    k = kernel.shape[0]
    r = k // 2
    h, w = img.shape
    padded = np.pad(img, r, mode="edge")
    out = np.zeros((h, w), dtype=np.float64)
    for u in range(k):
        for v in range(k):
            out += kernel[u, v] * padded[u:u + h, v:v + w]
    return out


def threshold_margin(img, group_weights, offsets, group_index):
    """Signed margin ``sum_g w_g * sum_{taps in g} (s - x_tap)`` per pixel.

    Taps sharing a weight are summed first so that flat neighbourhoods give an
    exact zero margin.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w = img.shape
    r = int(np.abs(offsets).max()) if len(offsets) else 0
    padded = np.pad(img, r, mode="edge")
    out = np.zeros((h, w), dtype=np.float64)
    n_taps = len(offsets)
    t = 0
    for g in range(len(group_weights)):
        acc = np.zeros((h, w), dtype=np.float64)
        while t < n_taps and group_index[t] == g:
            du, dv = offsets[t]
            acc += img - padded[r + du:r + du + h, r + dv:r + dv + w]
            t += 1
        out += group_weights[g] * acc
    return out


# neighbour offsets (before, after) per quantized gradient direction
_NMS_OFFSETS = (
    ((0, -1), (0, 1)),    # 0 deg
    ((-1, -1), (1, 1)),   # 45 deg (image y axis points down)
    ((-1, 0), (1, 0)),    # 90 deg
    ((-1, 1), (1, -1)),   # 135 deg
)


def nonmax_suppress(mag, direction):
    """Keep pixels strictly above the 'before' neighbour and >= the 'after' one."""
    mag = np.ascontiguousarray(mag, dtype=np.float64)
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="edge")
    keep = np.zeros((h, w), dtype=bool)
    for code, ((bu, bv), (au, av)) in enumerate(_NMS_OFFSETS):
        before = padded[1 + bu:1 + bu + h, 1 + bv:1 + bv + w]
        after = padded[1 + au:1 + au + h, 1 + av:1 + av + w]
        sel = direction == code
        keep |= sel & (mag > before) & (mag >= after)
    return keep.astype(np.uint8)


def hysteresis(mag, keep, t_lo, t_hi):
    keep = np.asarray(keep, dtype=bool)
    candidates = keep & (mag >= t_lo)
    strong = keep & (mag > t_hi)
    labels, n = ndimage.label(candidates, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(mag.shape, dtype=np.uint8)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[labels[strong]] = True
    seeded[0] = False
    return np.where(seeded[labels], 255, 0).astype(np.uint8)


def rasterize_evenodd(vertices, width, height):
    """Even-odd membership of pixel centres ``(col + 0.5, row + 0.5)``."""
    v = np.ascontiguousarray(vertices, dtype=np.float64)
    px = np.arange(width, dtype=np.float64) + 0.5
    py = (np.arange(height, dtype=np.float64) + 0.5)[:, None]
    inside = np.zeros((height, width), dtype=bool)
    s = len(v)
    j = s - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(s):
            xi, yi = v[i]
            xj, yj = v[j]
            if yj < yi:
                # same arithmetic whichever way the edge is traversed
                xi, yi, xj, yj = xj, yj, xi, yi
            straddle = (yi > py) != (yj > py)
            if straddle.any():
                x_cross = (xj - xi) * (py - yi) / (yj - yi) + xi
                inside ^= straddle & (px < x_cross)
            j = i
    return inside
