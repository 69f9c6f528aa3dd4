"""Shadow application and the black-box PSO search over shadow polygons."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .color import check_rgb, lab_to_rgb, lab_to_rgb_float, rgb_to_lab
from .geometry import Polygon, check_mask, rasterize, vertex_bounds


@dataclass(frozen=True)
class ShadowParams:
    k: float
    polygon: Polygon

    def __post_init__(self):
        if not 0.0 < self.k <= 1.0:
            raise ValueError(f"shadow strength k must lie in (0, 1], got {self.k}")
        if not isinstance(self.polygon, Polygon):
            object.__setattr__(self, "polygon", Polygon(self.polygon))


def shadow_region(shape, polygon, mask) -> np.ndarray:
    h, w = shape[:2]
    mask = check_mask(mask, shape)
    return rasterize(polygon, w, h) & mask


def apply_shadow(img, params: ShadowParams, mask) -> np.ndarray:
    """Scale L by ``k`` inside polygon & mask; every other pixel is copied verbatim."""
    img = check_rgb(img)
    region = shadow_region(img.shape, params.polygon, mask)
    out = img.copy()
    if params.k == 1.0 or not region.any():
        return out
    lab = rgb_to_lab(img[region])
    lab[:, 0] *= params.k
    out[region] = lab_to_rgb(lab)
    return out


def apply_shadow_float(img, params: ShadowParams, mask) -> np.ndarray:
    """Real-valued variant of :func:`apply_shadow` (no final rounding)."""
    img = check_rgb(img)
    region = shadow_region(img.shape, params.polygon, mask)
    out = img.astype(np.float64)
    if params.k == 1.0 or not region.any():
        return out
    lab = rgb_to_lab(img[region])
    lab[:, 0] *= params.k
    out[region] = lab_to_rgb_float(lab)
    return out


class QueryingClassifier:
    """Counts every probability request made to the wrapped classifier.

    The wrapped object needs a ``predict_proba(images)`` method taking a
    ``(N, H, W, 3)`` uint8 batch. Each image in a request counts as one query.
    """

    def __init__(self, classifier):
        self.classifier = classifier
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    def predict_proba(self, images) -> np.ndarray:
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[None]
        probs = np.asarray(self.classifier.predict_proba(images))
        with self._lock:
            self._count += len(images)
        return probs

    def predict_one(self, img) -> np.ndarray:
        return self.predict_proba(np.asarray(img)[None])[0]


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 10
    iterations: int = 50
    inertia: float = 0.73
    cognitive: float = 1.49
    social: float = 1.49
    vertices: int = 3
    seed: int = 0
    #: ``(lo, hi)`` per coordinate; defaults to the image box plus margin
    position_bounds: tuple | None = None
    velocity_fraction: float = 0.25

    def __post_init__(self):
        if self.particles < 1 or self.iterations < 1:
            raise ValueError("particles and iterations must be >= 1")
        if min(self.inertia, self.cognitive, self.social) < 0:
            raise ValueError("PSO coefficients must be non-negative")
        if self.vertices < 3:
            raise ValueError("a shadow polygon needs at least 3 vertices")

    @property
    def max_queries(self) -> int:
        return self.particles * (self.iterations + 1)


@dataclass
class AttackResult:
    success: bool
    best_polygon: Polygon
    queries: int
    final_confidence: float
    predicted_label: int
    true_label: int = -1
    k: float = 1.0
    history: list = field(default_factory=list, repr=False)


def pso_attack(img, label: int, model, k: float, mask, cfg: PsoConfig = PsoConfig()) -> AttackResult:
    """Search shadow polygons that drive the model's confidence in ``label`` down.

    Untargeted. Returns on the first query whose argmax differs from
    ``label``; otherwise spends the full ``particles * (iterations + 1)``
    budget and reports the best polygon found.
    """
    img = check_rgb(img)
    h, w = img.shape[:2]
    mask = check_mask(mask, img.shape)
    if not isinstance(model, QueryingClassifier):
        model = QueryingClassifier(model)
    start = model.query_count

    if cfg.position_bounds is None:
        lo, hi = vertex_bounds(w, h)
    else:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in cfg.position_bounds)
    lo = np.tile(lo, cfg.vertices)
    hi = np.tile(hi, cfg.vertices)
    vmax = cfg.velocity_fraction * (hi - lo)
    rng = np.random.default_rng(cfg.seed)
    dim = 2 * cfg.vertices

    def evaluate(position):
        adv = apply_shadow(img, ShadowParams(k, Polygon(position)), mask)
        probs = model.predict_one(adv)
        return float(probs[label]), int(np.argmax(probs)), float(probs.max())

    def finish(position, success, pred, conf):
        return AttackResult(
            success=success,
            best_polygon=Polygon(position),
            queries=model.query_count - start,
            final_confidence=conf,
            predicted_label=pred,
            true_label=label,
            k=k,
        )

    pos = rng.uniform(lo, hi, size=(cfg.particles, dim))
    vel = rng.uniform(-vmax, vmax, size=(cfg.particles, dim))
    pbest = pos.copy()
    pbest_fit = np.full(cfg.particles, np.inf)
    gbest = pos[0].copy()
    gbest_fit = np.inf
    gbest_pred, gbest_conf = label, 1.0

    for i in range(cfg.particles):
        fit, pred, conf = evaluate(pos[i])
        if pred != label:
            return finish(pos[i], True, pred, conf)
        pbest_fit[i] = fit
        if fit < gbest_fit:
            gbest, gbest_fit, gbest_pred, gbest_conf = pos[i].copy(), fit, pred, conf

    for _ in range(cfg.iterations):
        for i in range(cfg.particles):
            r1 = rng.random(dim)
            r2 = rng.random(dim)
            vel[i] = (
                cfg.inertia * vel[i]
                + cfg.cognitive * r1 * (pbest[i] - pos[i])
                + cfg.social * r2 * (gbest - pos[i])
            )
            np.clip(vel[i], -vmax, vmax, out=vel[i])
            pos[i] = np.clip(pos[i] + vel[i], lo, hi)
            fit, pred, conf = evaluate(pos[i])
            if pred != label:
                return finish(pos[i], True, pred, conf)
            if fit < pbest_fit[i]:
                pbest[i], pbest_fit[i] = pos[i].copy(), fit
            if fit < gbest_fit:
                gbest, gbest_fit, gbest_pred, gbest_conf = pos[i].copy(), fit, pred, conf

    return finish(gbest, False, gbest_pred, gbest_conf)
