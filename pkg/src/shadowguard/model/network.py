"""Small sequential CNN described by a tuple of layer strings."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import layers as L

REFERENCE_LAYERS = (
    "conv3x3:32",
    "relu",
    "maxpool2",
    "conv3x3:64",
    "relu",
    "maxpool2",
    "flatten",
    "dense:256",
    "relu",
    "dense",
)

_CONV = re.compile(r"conv(\d+)x\1:(\d+)$")
_DENSE = re.compile(r"dense(?::(\d+))?$")


@dataclass(frozen=True)
class CnnSpec:
    """Architecture description.

    ``layers`` entries: ``convKxK:filters``, ``relu``, ``maxpool2``,
    ``flatten``, ``dense:width``; a bare ``dense`` means ``class_count`` units.
    """

    input_channels: int = 4
    class_count: int = 8
    input_size: int = 32
    layers: tuple = REFERENCE_LAYERS

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_channels < 1:
            raise ValueError("input_channels must be positive")
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        self.param_shapes()  # validates the layer strings

    def param_shapes(self) -> dict[str, tuple]:
        shapes: dict[str, tuple] = {}
        c, h, w = self.input_channels, self.input_size, self.input_size
        flat = None
        for i, layer in enumerate(self.layers):
            if m := _CONV.match(layer):
                if flat is not None:
                    raise ValueError("conv layer after flatten")
                k, out = int(m.group(1)), int(m.group(2))
                if k % 2 == 0:
                    raise ValueError(f"conv kernel must be odd: {layer}")
                shapes[f"{i}.weight"] = (out, c, k, k)
                shapes[f"{i}.bias"] = (out,)
                c = out
            elif layer == "relu":
                pass
            elif layer == "maxpool2":
                if flat is not None or h % 2 or w % 2:
                    raise ValueError(f"cannot pool a {h}x{w} map at layer {i}")
                h, w = h // 2, w // 2
            elif layer == "flatten":
                flat = c * h * w
            elif m := _DENSE.match(layer):
                if flat is None:
                    raise ValueError("dense layer before flatten")
                out = int(m.group(1)) if m.group(1) else self.class_count
                shapes[f"{i}.weight"] = (out, flat)
                shapes[f"{i}.bias"] = (out,)
                flat = out
            else:
                raise ValueError(f"unknown layer {layer!r}")
        if flat != self.class_count:
            raise ValueError("the last layer must produce class_count outputs")
        return shapes

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "class_count": self.class_count,
            "input_size": self.input_size,
            "layers": list(self.layers),
        }

    @classmethod
    def from_dict(cls, d) -> CnnSpec:
        return cls(
            input_channels=int(d["input_channels"]),
            class_count=int(d["class_count"]),
            input_size=int(d.get("input_size", 32)),
            layers=tuple(d.get("layers", REFERENCE_LAYERS)),
        )


def init_params(spec: CnnSpec, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            params[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params


def zero_params(spec: CnnSpec, dtype=np.float32) -> dict[str, np.ndarray]:
    return {n: np.zeros(s, dtype=dtype) for n, s in spec.param_shapes().items()}


@dataclass
class Network:
    spec: CnnSpec
    params: dict = field(default_factory=dict)
    dtype: type = np.float32

    def __post_init__(self):
        shapes = self.spec.param_shapes()
        if set(shapes) != set(self.params):
            raise ValueError("parameter names do not match the spec")
        for name, shape in shapes.items():
            if tuple(self.params[name].shape) != shape:
                raise ValueError(f"{name}: shape {self.params[name].shape} != {shape}")
        self.params = {n: np.asarray(p, dtype=self.dtype) for n, p in self.params.items()}

    @classmethod
    def create(cls, spec: CnnSpec, seed: int = 0, dtype=np.float32) -> Network:
        return cls(spec, init_params(spec, seed, dtype), dtype)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        s = self.spec
        if x.ndim != 4 or x.shape[1] != s.input_channels:
            raise ValueError(
                f"expected a batch of shape (N, {s.input_channels}, {s.input_size}, "
                f"{s.input_size}), got {x.shape}"
            )
        if x.shape[2:] != (s.input_size, s.input_size):
            raise ValueError(f"expected {s.input_size}x{s.input_size} inputs, got {x.shape[2:]}")
        return x

    def _forward(self, x, need_cache=True):
        x = x.transpose(0, 2, 3, 1)  # NCHW -> NHWC
        caches = []
        for i, layer in enumerate(self.spec.layers):
            if layer.startswith("conv"):
                x, cache = L.conv2d_forward(
                    x, self.params[f"{i}.weight"], self.params[f"{i}.bias"], need_cache
                )
            elif layer == "relu":
                x, cache = L.relu_forward(x, need_cache)
            elif layer == "maxpool2":
                x, cache = L.maxpool_forward(x, need_cache)
            elif layer == "flatten":
                x, cache = L.flatten_forward(x)
            else:
                x, cache = L.dense_forward(
                    x, self.params[f"{i}.weight"], self.params[f"{i}.bias"], need_cache
                )
            caches.append(cache)
        return x, caches

    def _backward(self, dlogits, caches):
        grads = {}
        d = dlogits
        for i in reversed(range(len(self.spec.layers))):
            layer, cache = self.spec.layers[i], caches[i]
            if layer.startswith("conv"):
                d, grads[f"{i}.weight"], grads[f"{i}.bias"] = L.conv2d_backward(
                    d, self.params[f"{i}.weight"], cache
                )
            elif layer == "relu":
                d = L.relu_backward(d, cache)
            elif layer == "maxpool2":
                d = L.maxpool_backward(d, cache)
            elif layer == "flatten":
                d = L.flatten_backward(d, cache)
            else:
                d, grads[f"{i}.weight"], grads[f"{i}.bias"] = L.dense_backward(
                    d, self.params[f"{i}.weight"], cache
                )
        if d.ndim == 4:
            d = d.transpose(0, 3, 1, 2)  # back to NCHW
        return grads, d

    def logits(self, x) -> np.ndarray:
        return self._forward(self._check_input(x), need_cache=False)[0]

    def forward(self, x) -> np.ndarray:
        """Class probabilities for a ``(N, C, H, W)`` batch."""
        return L.softmax(self.logits(x))

    def predict(self, x) -> np.ndarray:
        return self.logits(x).argmax(axis=1)

    def loss_and_grads(self, x, labels):
        """Mean cross-entropy, parameter gradients and the input gradient."""
        x = self._check_input(x)
        labels = np.asarray(labels, dtype=np.int64)
        logits, caches = self._forward(x)
        loss, dlogits = L.cross_entropy(logits, labels)
        grads, dx = self._backward(dlogits.astype(self.dtype), caches)
        return loss, grads, dx

    def logit_input_gradient(self, x, labels) -> np.ndarray:
        """Gradient of the ``labels`` logit (per sample) with respect to the input."""
        x = self._check_input(x)
        logits, caches = self._forward(x)
        seed = np.zeros_like(logits)
        seed[np.arange(len(x)), np.asarray(labels)] = 1.0
        return self._backward(seed, caches)[1]

    def astype(self, dtype) -> Network:
        return Network(self.spec, {n: p.astype(dtype) for n, p in self.params.items()}, dtype)


def forward(model, batch) -> np.ndarray:
    """Probabilities from a live :class:`Network` or a checkpoint."""
    if not isinstance(model, Network):
        model = model.network()
    return model.forward(batch)
