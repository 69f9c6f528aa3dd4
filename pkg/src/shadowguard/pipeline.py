"""Glue between RGB images and a trained network."""
from __future__ import annotations

import numpy as np

from .augment import encode, inference_input
from .model import Checkpoint, Network


def profile_kind_for(channels: int, profile_kind: str | None) -> str | None:
    if channels == 3:
        return None
    if channels == 4:
        if profile_kind is None:
            raise ValueError("a 4-channel model needs a profile kind")
        return profile_kind
    raise ValueError(f"unsupported input channel count {channels}")


class ModelClassifier:
    """RGB images in, class probabilities out.

    For 4-channel networks the profile map is recomputed from every presented
    image before the forward pass.
    """

    def __init__(self, model, profile_kind: str | None = None):
        self.network = model.network() if isinstance(model, Checkpoint) else model
        if not isinstance(self.network, Network):
            raise TypeError("expected a Network or Checkpoint")
        self.profile_kind = profile_kind_for(self.network.spec.input_channels, profile_kind)

    @property
    def channels(self) -> int:
        return self.network.spec.input_channels

    def prepare(self, images) -> np.ndarray:
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[None]
        return encode(np.stack([inference_input(im, self.profile_kind) for im in images]))

    def predict_proba(self, images) -> np.ndarray:
        return self.network.forward(self.prepare(images))

    def predict(self, images) -> np.ndarray:
        return self.predict_proba(images).argmax(axis=1)
