"""White-box epsilon-budget attacks (FGSM, PGD) against the 4-channel pipeline.

Images here are float ``(H, W, C)`` arrays in [0, 1]. Only the RGB planes
are perturbed; a 4th profile plane is recomputed from the perturbed RGB after
every step, since the binary profile has no useful gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .color import epsilon_bound, to_uint8
from .profiles import profile_map

#: shadow strength whose bound sets the default budget
DEFAULT_K = 0.43


@dataclass(frozen=True)
class EpsBudget:
    epsilon: float
    p: float = np.inf

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.p != np.inf:
            raise ValueError("only the l-inf budget is supported")

    @classmethod
    def from_shadow(cls, k: float = DEFAULT_K) -> EpsBudget:
        """Budget equal to the shadow bound at ``k``, in normalised pixel units."""
        return cls(epsilon_bound(k, np.inf) / 255.0)


def as_float_image(img) -> np.ndarray:
    x = np.asarray(img)
    if x.dtype == np.uint8:
        return x.astype(np.float64) / 255.0
    return x.astype(np.float64)


def with_profile(rgb, profile_kind: str | None) -> np.ndarray:
    """Attach the profile of the 8-bit rendering of ``rgb`` (float, [0, 1])."""
    if profile_kind is None:
        return rgb.copy()
    prof = profile_map(to_uint8(rgb * 255.0), profile_kind).astype(np.float64) / 255.0
    return np.concatenate([rgb, prof[..., None]], axis=2)


def rgb_loss_gradient(classifier, x, label: int) -> np.ndarray:
    """Cross-entropy gradient with respect to the RGB planes of ``x``."""
    dx = classifier.network.loss_and_grads(x.transpose(2, 0, 1)[None], [label])[2]
    return dx[0, :3].transpose(1, 2, 0).astype(np.float64)


def fgsm(classifier, img4, label: int, budget: EpsBudget) -> np.ndarray:
    """One signed-gradient step of size epsilon on the RGB planes."""
    x = as_float_image(img4)
    rgb = x[..., :3]
    g = rgb_loss_gradient(classifier, x, label)
    adv = np.clip(rgb + budget.epsilon * np.sign(g), 0.0, 1.0)
    return with_profile(adv, classifier.profile_kind)


def pgd(classifier, img4, label: int, budget: EpsBudget, steps: int = 20,
        step_size: float | None = None, random_start: bool = True, seed: int = 0,
        trace: list | None = None) -> np.ndarray:
    """Projected gradient ascent inside the l-inf ball around the clean RGB.

    ``step_size`` defaults to epsilon / 8. If ``trace`` is a list, every
    iterate (after projection and profile recomputation) is appended to it.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    eps = budget.epsilon
    if step_size is None:
        step_size = eps / 8
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    x0 = as_float_image(img4)
    rgb0 = x0[..., :3]
    lo, hi = rgb0 - eps, rgb0 + eps
    if random_start:
        rng = np.random.default_rng(seed)
        rgb = np.clip(rgb0 + rng.uniform(-eps, eps, rgb0.shape), lo, hi)
        x = with_profile(np.clip(rgb, 0.0, 1.0), classifier.profile_kind)
    else:
        x = x0
    for _ in range(steps):
        g = rgb_loss_gradient(classifier, x, label)
        rgb = x[..., :3] + step_size * np.sign(g)
        rgb = np.clip(np.clip(rgb, lo, hi), 0.0, 1.0)
        x = with_profile(rgb, classifier.profile_kind)
        if trace is not None:
            trace.append(x)
    return x
