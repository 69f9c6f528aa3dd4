"""Layer primitives with hand-written backward passes.

Activations are NHWC internally; conv weights keep the ``(out, in, k, k)``
layout. Convolutions are 'same' size with zero padding.
"""
from __future__ import annotations

import numpy as np


def _weight_matrix(weight):
    # (out, in, k, k) -> (k * k * in, out), rows ordered (u, v, channel)
    out_c = weight.shape[0]
    return weight.transpose(2, 3, 1, 0).reshape(-1, out_c)


def conv2d_forward(x, weight, bias, need_cache=True):
    n, h, w, c = x.shape
    k = weight.shape[2]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = np.concatenate(
        [xp[:, u:u + h, v:v + w, :] for u in range(k) for v in range(k)], axis=-1
    ).reshape(n * h * w, k * k * c)
    out = (cols @ _weight_matrix(weight) + bias).reshape(n, h, w, -1)
    return out, ((x.shape, cols) if need_cache else None)


def conv2d_backward(dout, weight, cache):
    (n, h, w, c), cols = cache
    out_c, _, k, _ = weight.shape
    pad = k // 2
    d2 = dout.reshape(n * h * w, out_c)
    dweight = (cols.T @ d2).reshape(k, k, c, out_c).transpose(3, 2, 0, 1)
    dbias = d2.sum(axis=0)
    dcols = (d2 @ _weight_matrix(weight).T).reshape(n, h, w, k * k, c)
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=dout.dtype)
    t = 0
    for u in range(k):
        for v in range(k):
            dxp[:, u:u + h, v:v + w, :] += dcols[:, :, :, t, :]
            t += 1
    return dxp[:, pad:pad + h, pad:pad + w, :], dweight, dbias


def relu_forward(x, need_cache=True):
    return np.maximum(x, 0), ((x > 0) if need_cache else None)


def relu_backward(dout, cache):
    return dout * cache


def maxpool_forward(x, need_cache=True):
    """2x2 max pooling; the gradient goes to the first maximal element."""
    q = (x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2])
    out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
    if not need_cache:
        return out, None
    taken = np.zeros(out.shape, dtype=bool)
    masks = []
    for part in q:
        m = (part == out) & ~taken
        taken |= m
        masks.append(m)
    return out, (x.shape, masks)


def maxpool_backward(dout, cache):
    shape, masks = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[:, 0::2, 0::2] = dout * masks[0]
    dx[:, 0::2, 1::2] = dout * masks[1]
    dx[:, 1::2, 0::2] = dout * masks[2]
    dx[:, 1::2, 1::2] = dout * masks[3]
    return dx


def flatten_forward(x):
    # channel-major order, matching an NCHW flatten
    return x.transpose(0, 3, 1, 2).reshape(x.shape[0], -1), x.shape


def flatten_backward(dout, shape):
    n, h, w, c = shape
    return dout.reshape(n, c, h, w).transpose(0, 2, 3, 1)


def dense_forward(x, weight, bias, need_cache=True):
    return x @ weight.T + bias, (x if need_cache else None)


def dense_backward(dout, weight, cache):
    x = cache
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1
    return float(loss), dlogits / n
