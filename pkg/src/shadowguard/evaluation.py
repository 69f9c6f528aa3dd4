"""Testing regime: benign accuracy, per-k shadow robustness, query counts."""
from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .color import mean_l_channel
from .shadow import PsoConfig, QueryingClassifier, pso_attack

log = logging.getLogger(__name__)

#: shadow strengths swept by the testing regime
DEFAULT_KSWEEP = (0.20, 0.25, 0.30, 0.35, 0.40, 0.43, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70)
DARK_THRESHOLD = 120.0


def filter_dark(samples, threshold: float = DARK_THRESHOLD):
    """Drop samples whose mean L (0-255 scale) is ``<= threshold``.

    Returns ``(kept, excluded_count)``.
    """
    kept = [s for s in samples if mean_l_channel(s.image) > threshold]
    return kept, len(samples) - len(kept)


@dataclass
class EvalReport:
    label: str
    ks: list
    robustness: list
    mean_queries: list
    benign_accuracy: float
    trials: int
    excluded: int
    evaluated: int = 0
    attacked: int = 0
    per_trial: list = field(default_factory=list)

    def __post_init__(self):
        if not (len(self.ks) == len(self.robustness) == len(self.mean_queries)):
            raise ValueError("ks, robustness and mean_queries must have equal length")
        for r in list(self.robustness) + [self.benign_accuracy]:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"rate {r} outside [0, 1]")

    def at(self, k: float) -> tuple[float, float]:
        """``(robustness, mean_queries)`` at shadow strength ``k``."""
        for kk, r, q in zip(self.ks, self.robustness, self.mean_queries):
            if abs(kk - k) < 1e-9:
                return r, q
        raise KeyError(k)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> EvalReport:
        return cls(**json.loads(text))


def _sample_seed(trial_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([trial_seed, index]).generate_state(1)[0])


def run_regime(classifier, samples, ksweep=DEFAULT_KSWEEP, trials: int = 5,
               pso_cfg: PsoConfig = PsoConfig(), label: str = "model", base_seed: int = 0,
               trials_per_k: dict | None = None) -> EvalReport:
    """Benign accuracy plus a PSO shadow attack sweep.

    Only samples the classifier gets right on clean input are attacked;
    robustness is ``1 - successes / attacked`` averaged over trials. Trial
    ``t`` uses seed ``base_seed + t``. ``trials_per_k`` overrides the trial
    count for individual k values.
    """
    samples, excluded = filter_dark(samples)
    if not samples:
        raise ValueError("no samples left after the dark-image filter")
    images = np.stack([s.image for s in samples])
    labels = np.array([s.label for s in samples])
    preds = np.asarray(classifier.predict_proba(images)).argmax(axis=1)
    correct = np.flatnonzero(preds == labels)
    benign = float(len(correct) / len(samples))

    robustness, mean_queries, per_trial = [], [], []
    max_trials = trials
    for k in ksweep:
        n_trials = (trials_per_k or {}).get(k, trials)
        max_trials = max(max_trials, n_trials)
        rob_k, queries_k = [], []
        for t in range(n_trials):
            seed = base_seed + t
            successes = 0
            for i in correct:
                model = QueryingClassifier(classifier)
                cfg = replace(pso_cfg, seed=_sample_seed(seed, int(i)))
                res = pso_attack(samples[i].image, int(labels[i]), model, float(k), samples[i].mask, cfg)
                successes += res.success
                queries_k.append(res.queries)
            if len(correct):
                rob = 1.0 - successes / len(correct)
            else:
                warnings.warn("no correctly classified samples to attack; robustness set to 0")
                rob = 0.0
            rob_k.append(rob)
            per_trial.append({"k": float(k), "trial": t, "seed": seed, "robustness": rob,
                              "successes": int(successes), "attacked": int(len(correct))})
            log.info("%s k=%.2f trial %d robustness %.3f", label, k, t, rob)
        robustness.append(float(np.mean(rob_k)))
        mean_queries.append(float(np.mean(queries_k)) if queries_k else 0.0)

    return EvalReport(
        label=label,
        ks=[float(k) for k in ksweep],
        robustness=robustness,
        mean_queries=mean_queries,
        benign_accuracy=benign,
        trials=max_trials,
        excluded=excluded,
        evaluated=len(samples),
        attacked=int(len(correct)),
        per_trial=per_trial,
    )


def saliency(network, img4, label: int) -> np.ndarray:
    """Max-over-channels ``|d logit_label / d input|``, scaled so the peak is 1."""
    x = np.asarray(img4)
    if x.dtype == np.uint8:
        x = x.astype(np.float64) / 255.0
    grad = network.logit_input_gradient(x.transpose(2, 0, 1)[None], [label])[0]
    sal = np.abs(grad).max(axis=0).astype(np.float64)
    peak = sal.max()
    return sal / peak if peak > 0 else np.zeros_like(sal)


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def emit_table(reports, metric: str = "robustness") -> bytes:
    """One row per defense, one column per k."""
    if metric not in ("robustness", "mean_queries"):
        raise ValueError(f"unknown metric {metric!r}")
    reports = list(reports)
    ks = reports[0].ks if reports else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["defense"] + [f"{k:.2f}" for k in ks])
    if ks:
        for r in reports:
            if r.ks != ks:
                raise ValueError("reports use different k sweeps")
            writer.writerow([r.label] + [_fmt(v) for v in getattr(r, metric)])
    return buf.getvalue().encode("utf-8")


def emit_report(report: EvalReport, fmt: str = "csv") -> bytes:
    """Serialise a report: ``csv`` (robustness), ``queries-csv`` or ``json``."""
    if fmt == "csv":
        return emit_table([report], "robustness")
    if fmt == "queries-csv":
        return emit_table([report], "mean_queries")
    if fmt == "json":
        return report.to_json().encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def robustness_svg(reports, width: int = 480, height: int = 320) -> str:
    """Static line chart of robustness against k."""
    reports = list(reports)
    left, right, top, bottom = 50, 120, 20, 40
    pw, ph = width - left - right, height - top - bottom
    ks = sorted({k for r in reports for k in r.ks}) or [0.0, 1.0]
    k0, k1 = ks[0], ks[-1] if ks[-1] > ks[0] else ks[0] + 1.0

    def px(k):
        return left + (k - k0) / (k1 - k0) * pw

    def py(v):
        return top + (1.0 - v) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{left - 6}" y="{py(v) + 4:.1f}" font-size="10" '
                     f'text-anchor="end">{v:.2f}</text>')
    for k in ks:
        parts.append(f'<text x="{px(k):.1f}" y="{top + ph + 14}" font-size="9" '
                     f'text-anchor="middle">{k:.2f}</text>')
    parts.append(f'<text x="{left + pw / 2:.1f}" y="{height - 6}" font-size="11" '
                 f'text-anchor="middle">shadow strength k</text>')
    parts.append(f'<text x="12" y="{top + ph / 2:.1f}" font-size="11" text-anchor="middle" '
                 f'transform="rotate(-90 12 {top + ph / 2:.1f})">robustness</text>')
    for n, r in enumerate(reports):
        color = _COLORS[n % len(_COLORS)]
        pts = " ".join(f"{px(k):.1f},{py(v):.1f}" for k, v in zip(r.ks, r.robustness))
        if pts:
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 14 * n + 10
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 26}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 30}" y="{ly + 4}" font-size="10">{_escape(r.label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
