"""Mini-batch SGD training, first-layer adaptation and gradient checking."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint
from .network import CnnSpec, Network

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 30
    batch_size: int = 64
    momentum: float = 0.9
    seed: int = 0


def train(x, labels, spec: CnnSpec, cfg: TrainConfig = TrainConfig(), init: Checkpoint | None = None,
          on_epoch=None) -> Checkpoint:
    """Minimise cross-entropy with SGD + momentum.

    ``x`` is an ``(N, C, H, W)`` float batch already scaled to [0, 1]. The
    run is deterministic given ``cfg.seed``. ``on_epoch(epoch, net, record)``
    may add entries to the per-epoch record.
    """
    x = np.asarray(x, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    if len(x) != len(labels):
        raise ValueError("x and labels differ in length")
    bad = (labels < 0) | (labels >= spec.class_count)
    if bad.any():
        raise ValueError(f"label {labels[bad][0]} out of range [0, {spec.class_count})")

    rng = np.random.default_rng(cfg.seed)
    if init is None:
        net = Network.create(spec, seed=int(rng.integers(2**31)))
    else:
        if init.spec != spec:
            raise ValueError("initial checkpoint spec differs from the requested spec")
        net = init.network()
    velocity = {n: np.zeros_like(p) for n, p in net.params.items()}
    lr = np.float32(cfg.learning_rate)
    mu = np.float32(cfg.momentum)

    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        total, correct = 0.0, 0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, _ = net.loss_and_grads(x[idx], labels[idx])
            total += loss * len(idx)
            for name, g in grads.items():
                v = velocity[name]
                v *= mu
                v += g
                net.params[name] -= lr * v
        correct = int((net.predict(x) == labels).sum())
        record = {"epoch": epoch + 1, "loss": float(total / len(x)), "train_accuracy": correct / len(x)}
        if on_epoch is not None:
            on_epoch(epoch + 1, net, record)
        history.append(record)
        log.info("epoch %d loss %.4f acc %.3f", epoch + 1, record["loss"], record["train_accuracy"])

    meta = {
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "momentum": cfg.momentum,
        "history": history,
        "final_loss": history[-1]["loss"] if history else None,
    }
    return Checkpoint.from_network(net, meta)


def adapt_first_layer(ckpt: Checkpoint) -> Checkpoint:
    """Turn a 3-channel checkpoint into a 4-channel one.

    The new input slice of the first conv layer is the mean of the three
    existing slices; every other tensor is copied unchanged.
    """
    spec = ckpt.spec
    if spec.input_channels != 3:
        raise ValueError(f"expected a 3-channel checkpoint, got {spec.input_channels} channels")
    first = next((i for i, l in enumerate(spec.layers) if l.startswith("conv")), None)
    if first is None or any(l.startswith("dense") for l in spec.layers[:first]):
        raise ValueError("the first weighted layer must be a convolution")
    name = f"{first}.weight"
    weights = {n: w.copy() for n, w in ckpt.weights.items()}
    w = weights[name]
    weights[name] = np.concatenate([w, w.mean(axis=1, keepdims=True)], axis=1)
    new_spec = CnnSpec(4, spec.class_count, spec.input_size, spec.layers)
    meta = dict(ckpt.metadata)
    meta["adapted_from_channels"] = 3
    return Checkpoint(new_spec, weights, meta)


def numeric_gradient(net: Network, x, labels, name: str, index, h: float = 1e-5) -> float:
    p = net.params[name]
    old = p[index]
    p[index] = old + h
    plus = net.loss_and_grads(x, labels)[0]
    p[index] = old - h
    minus = net.loss_and_grads(x, labels)[0]
    p[index] = old
    return (plus - minus) / (2 * h)


def gradient_check(net: Network, x, labels, n_checks: int = 100, h: float = 1e-5, seed: int = 0,
                   grad_fn=None, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in float64. ``grad_fn(net, x, labels) -> grads`` overrides the
    analytic gradient (used to check that corrupted gradients get caught).
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    net = net.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    grads = grad_fn(net, x, labels) if grad_fn else net.loss_and_grads(x, labels)[1]
    names = sorted(net.params)
    sizes = np.array([net.params[n].size for n in names])
    rng = np.random.default_rng(seed)
    flat = rng.choice(sizes.sum(), size=min(n_checks, int(sizes.sum())), replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for f in flat:
        k = int(np.searchsorted(bounds, f, side="right"))
        name = names[k]
        index = np.unravel_index(int(f - (bounds[k] - sizes[k])), net.params[name].shape)
        a = float(grads[name][index])
        n = numeric_gradient(net, x, labels, name, index, h)
        worst = max(worst, abs(a - n) / max(abs(a), abs(n), floor))
    return worst
