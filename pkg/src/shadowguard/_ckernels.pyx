# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel kernels. Mirrors ``_pykernels`` operation for operation."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline Py_ssize_t _clip(Py_ssize_t i, Py_ssize_t n) nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


def correlate_replicate(img, kernel):
    cdef const double[:, ::1] src = np.ascontiguousarray(img, dtype=np.float64)
    cdef const double[:, ::1] ker = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], k = ker.shape[0]
    cdef Py_ssize_t r = k // 2
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, u, v
    cdef double acc
    with nogil:
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for u in range(k):
                    for v in range(k):
                        acc += ker[u, v] * src[_clip(i + u - r, h), _clip(j + v - r, w)]
                out[i, j] = acc
    return out_arr


def threshold_margin(img, group_weights, offsets, group_index):
    cdef const double[:, ::1] src = np.ascontiguousarray(img, dtype=np.float64)
    cdef const double[::1] gw = np.ascontiguousarray(group_weights, dtype=np.float64)
    cdef const long[:, ::1] off = np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, 2)
    cdef const long[::1] gidx = np.ascontiguousarray(group_index, dtype=np.int64)
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef Py_ssize_t n_groups = gw.shape[0], n_taps = off.shape[0]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, g, t
    cdef double total, acc, s
    with nogil:
        for i in range(h):
            for j in range(w):
                s = src[i, j]
                total = 0.0
                t = 0
                for g in range(n_groups):
                    acc = 0.0
                    while t < n_taps and gidx[t] == g:
                        acc += s - src[_clip(i + off[t, 0], h), _clip(j + off[t, 1], w)]
                        t += 1
                    total += gw[g] * acc
                out[i, j] = total
    return out_arr


def nonmax_suppress(mag, direction):
    cdef const double[:, ::1] m = np.ascontiguousarray(mag, dtype=np.float64)
    cdef const signed char[:, ::1] d = np.ascontiguousarray(direction, dtype=np.int8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    keep_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] keep = keep_arr
    cdef int bu[4]
    cdef int bv[4]
    bu[:] = [0, -1, -1, -1]
    bv[:] = [-1, -1, 0, 1]
    cdef Py_ssize_t i, j
    cdef int code
    cdef double c
    with nogil:
        for i in range(h):
            for j in range(w):
                code = d[i, j]
                if code < 0 or code > 3:
                    continue
                c = m[i, j]
                if (c > m[_clip(i + bu[code], h), _clip(j + bv[code], w)]
                        and c >= m[_clip(i - bu[code], h), _clip(j - bv[code], w)]):
                    keep[i, j] = 1
    return keep_arr


def hysteresis(mag, keep, double t_lo, double t_hi):
    cdef const double[:, ::1] m = np.ascontiguousarray(mag, dtype=np.float64)
    cdef const unsigned char[:, ::1] kp = np.ascontiguousarray(keep, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t *stack = <Py_ssize_t *> malloc(h * w * sizeof(Py_ssize_t))
    if stack == NULL:
        raise MemoryError()
    cdef Py_ssize_t top = 0, i, j, p, ni, nj, di, dj
    try:
        with nogil:
            for i in range(h):
                for j in range(w):
                    if kp[i, j] and m[i, j] > t_hi and out[i, j] == 0:
                        out[i, j] = 255
                        stack[top] = i * w + j
                        top += 1
                        while top > 0:
                            top -= 1
                            p = stack[top]
                            for di in range(-1, 2):
                                for dj in range(-1, 2):
                                    ni = p // w + di
                                    nj = p % w + dj
                                    if ni < 0 or ni >= h or nj < 0 or nj >= w:
                                        continue
                                    if out[ni, nj] == 0 and kp[ni, nj] and m[ni, nj] >= t_lo:
                                        out[ni, nj] = 255
                                        stack[top] = ni * w + nj
                                        top += 1
    finally:
        free(stack)
    return out_arr


def rasterize_evenodd(vertices, Py_ssize_t width, Py_ssize_t height):
    cdef const double[:, ::1] v = np.ascontiguousarray(vertices, dtype=np.float64)
    cdef Py_ssize_t s = v.shape[0]
    out_arr = np.zeros((height, width), dtype=bool)
    cdef cnp.npy_bool[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, a, b
    cdef double px, py, xi, yi, xj, yj
    cdef bint inside
    with nogil:
        for r in range(height):
            py = r + 0.5
            for c in range(width):
                px = c + 0.5
                inside = False
                b = s - 1
                for a in range(s):
                    if v[b, 1] < v[a, 1]:
                        xi = v[b, 0]
                        yi = v[b, 1]
                        xj = v[a, 0]
                        yj = v[a, 1]
                    else:
                        xi = v[a, 0]
                        yi = v[a, 1]
                        xj = v[b, 0]
                        yj = v[b, 1]
                    if ((yi > py) != (yj > py)) and (px < (xj - xi) * (py - yi) / (yj - yi) + xi):
                        inside = not inside
                    b = a
                out[r, c] = inside
    return out_arr
