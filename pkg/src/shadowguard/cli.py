"""Command-line entry point: ``shadowguard <command> [options]``.

Exit status is 0 on success, 1 on invalid input or configuration and 2 when
the shadow bound check finds a violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import AugmentConfig, encode, inference_input, passes_for, quadruplicate, random_polygon
from .color import epsilon_bound, perturbation_norm
from .config import ConfigError, RunConfig, resolve_output_dir
from .data import DatasetError, generate_synthetic, load_dataset, write_dataset, write_png
from .evaluation import emit_report, robustness_svg, run_regime, saliency
from .model import Checkpoint, CheckpointError, CnnSpec, adapt_first_layer, train
from .pipeline import ModelClassifier
from .shadow import ShadowParams, apply_shadow, apply_shadow_float, pso_attack

log = logging.getLogger("shadowguard")

EXIT_OK, EXIT_INVALID, EXIT_BOUND = 0, 1, 2
CHECKPOINT_NAME = "model.sgck"


class BoundViolation(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors count as invalid input (exit 1), not argparse's 2."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _write(path: Path, data) -> None:
    """Atomic write: a failed command never leaves a half-written file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _dataset(cfg: RunConfig):
    root = cfg.dataset_root
    if root is None:
        return generate_synthetic(cfg.synthetic_spec())
    return load_dataset(root, cfg.tree["dataset"]["manifest"])


def _class_count(cfg: RunConfig, train_set, test_set) -> int:
    if cfg.dataset_root is None:
        return cfg.synthetic_spec().class_count
    return max(s.label for s in list(train_set) + list(test_set)) + 1


# -- commands ---------------------------------------------------------------


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    train_set, test_set = _dataset(cfg)
    if not train_set:
        raise DatasetError("training split is empty")
    aug = cfg.augment_config()
    passes = passes_for(aug.adv, aug.transform)
    examples, labels, _ = quadruplicate(
        [s.image for s in train_set], [s.mask for s in train_set], [s.label for s in train_set], aug, passes)
    classes = _class_count(cfg, train_set, test_set)
    spec = CnnSpec(input_channels=aug.channels, class_count=classes)

    init = None
    init_path = cfg.tree["training"]["init_checkpoint"]
    if init_path:
        init = Checkpoint.load(init_path)

    x_test = y_test = None
    if test_set:
        x_test = encode(np.stack([inference_input(s.image, aug.profile_kind) for s in test_set]))
        y_test = np.array([s.label for s in test_set])

    def on_epoch(epoch, net, record):
        if x_test is not None:
            record["test_accuracy"] = float((net.predict(x_test) == y_test).mean())

    ckpt = train(encode(examples), labels, spec, cfg.train_config(), init=init, on_epoch=on_epoch)
    history = ckpt.metadata["history"]
    ckpt.metadata.update(profile_kind=aug.profile_kind, adv=aug.adv, transform=aug.transform)
    benign = history[-1].get("test_accuracy") if history else None
    if benign is None and x_test is not None:
        benign = float((ckpt.network().predict(x_test) == y_test).mean())

    ckpt.save(out / CHECKPOINT_NAME)
    record = {
        "checkpoint": CHECKPOINT_NAME,
        "source_size": len(train_set),
        "dataset_size": int(len(examples)),
        "passes": [list(p) for p in passes],
        "test_size": len(test_set),
        "spec": spec.to_dict(),
        "epochs": history,
        "benign_test_accuracy": benign,
        "config": cfg.tree,
    }
    _write(out / "train_log.json", _json(record))
    print(f"trained {spec.input_channels}-channel model on {len(examples)} examples; "
          f"benign test accuracy {benign if benign is None else round(benign, 4)}")
    return record


def _check_compat(ckpt: Checkpoint, cfg: RunConfig) -> str | None:
    kind = cfg.profile_kind
    channels = ckpt.spec.input_channels
    if channels == 3 and kind is not None:
        raise ConfigError(f"checkpoint takes 3 channels but defense.profile_kind is {kind!r}; use none")
    if channels == 4 and kind is None:
        raise ConfigError("checkpoint takes 4 channels but defense.profile_kind is none")
    if channels not in (3, 4):
        raise ConfigError(f"checkpoint takes {channels} channels; only 3 or 4 are supported")
    trained = ckpt.metadata.get("profile_kind", kind)
    if trained != kind:
        raise ConfigError(f"checkpoint was trained with profile kind {trained!r}, config says {kind!r}")
    return kind


def cmd_attack(cfg: RunConfig, out: Path, checkpoint) -> dict:
    ckpt = Checkpoint.load(checkpoint)
    kind = _check_compat(ckpt, cfg)
    _, test_set = _dataset(cfg)
    if not test_set:
        raise DatasetError("test split is empty")
    ev = cfg.tree["evaluation"]
    label = ev["label"] or (kind or "undefended")
    report = run_regime(
        ModelClassifier(ckpt, kind), test_set, cfg.ksweep, trials=int(ev["trials"]),
        pso_cfg=cfg.pso_config(), label=label, base_seed=int(ev["seed"]),
        trials_per_k=cfg.trials_per_k)
    _write(out / "robustness.csv", emit_report(report, "csv"))
    _write(out / "queries.csv", emit_report(report, "queries-csv"))
    _write(out / "report.json", emit_report(report, "json"))
    _write(out / "robustness.svg", robustness_svg([report]))
    print(emit_report(report, "csv").decode(), end="")
    return json.loads(report.to_json())


def _bound_image(rng, size: int) -> np.ndarray:
    kind = rng.integers(3)
    if kind == 0:
        return rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
    if kind == 1:
        return np.broadcast_to(rng.integers(0, 256, 3, dtype=np.uint8), (size, size, 3)).copy()
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:] = rng.integers(0, 256, 3, dtype=np.uint8)
    img[: size // 2] = rng.integers(0, 256, 3, dtype=np.uint8)
    return img


def cmd_boundcheck(cfg: RunConfig, out: Path) -> dict:
    bc = cfg.tree["boundcheck"]
    n, size = int(bc["triples"]), int(bc["size"])
    ks = [float(k) for k in bc["ksweep"]]
    rng = np.random.default_rng(int(bc["seed"]))
    worst = {"2": 0.0, "inf": 0.0}
    worst_at = {"2": None, "inf": None}
    violations = []
    for i in range(n):
        img = _bound_image(rng, size)
        k = ks[int(rng.integers(len(ks)))]
        poly = random_polygon(rng, size, size, int(rng.integers(3, 7)))
        if rng.random() < 0.5:
            mask = np.ones((size, size), dtype=bool)
        else:
            yy, xx = np.mgrid[:size, :size] + 0.5
            mask = (xx - size / 2) ** 2 + (yy - size / 2) ** 2 <= (size * rng.uniform(0.2, 0.5)) ** 2
        adv = apply_shadow_float(img, ShadowParams(k, poly), mask)
        for name, p in (("2", 2), ("inf", np.inf)):
            bound = epsilon_bound(k, p)
            norm = perturbation_norm(adv, img, p)
            ratio = norm / bound if bound > 0 else (0.0 if norm == 0 else np.inf)
            if ratio > worst[name]:
                worst[name], worst_at[name] = ratio, i
            if norm > bound:
                violations.append({"index": i, "k": k, "p": name, "norm": norm, "bound": bound,
                                   "polygon": poly.to_list()})
    summary = {
        "triples": n,
        "size": size,
        "seed": int(bc["seed"]),
        "max_ratio": worst,
        "max_ratio_index": worst_at,
        "violations": violations,
        "passed": not violations,
    }
    _write(out / "boundcheck.json", _json(summary))
    print(f"boundcheck: {n} triples, max ratio p=2 {worst['2']:.6f}, p=inf {worst['inf']:.6f}, "
          f"{len(violations)} violations")
    for v in violations:
        print(f"  violation #{v['index']}: k={v['k']} p={v['p']} norm={v['norm']:.6f} "
              f"bound={v['bound']:.6f} polygon={v['polygon']}")
    if violations:
        raise BoundViolation(f"{len(violations)} bound violations")
    return summary


def cmd_saliency(cfg: RunConfig, out: Path, checkpoint, sample_id: str, k: float) -> dict:
    ckpt = Checkpoint.load(checkpoint)
    kind = _check_compat(ckpt, cfg)
    train_set, test_set = _dataset(cfg)
    sample = next((s for s in list(test_set) + list(train_set) if s.id == sample_id), None)
    if sample is None:
        raise DatasetError(f"unknown sample id {sample_id!r}")
    clf = ModelClassifier(ckpt, kind)
    seed = int(cfg.tree["evaluation"]["seed"])
    res = pso_attack(sample.image, sample.label, clf, k, sample.mask, cfg.pso_config(seed))
    shadowed = apply_shadow(sample.image, ShadowParams(k, res.best_polygon), sample.mask)
    maps = {}
    for name, img in (("benign", sample.image), ("shadowed", shadowed)):
        sal = saliency(clf.network, inference_input(img, kind), sample.label)
        maps[name] = np.floor(sal * 255.0 + 0.5).astype(np.uint8)
    out.mkdir(parents=True, exist_ok=True)
    write_png(out / "saliency_benign.png", maps["benign"])
    write_png(out / "saliency_shadowed.png", maps["shadowed"])
    write_png(out / "saliency_pair.png", np.concatenate([maps["benign"], maps["shadowed"]], axis=1))
    write_png(out / "shadowed.png", shadowed)
    info = {"sample": sample_id, "label": sample.label, "k": k, "attack_success": res.success,
            "queries": res.queries}
    _write(out / "saliency.json", _json(info))
    print(f"saliency maps for {sample_id} written to {out}")
    return info


def cmd_gen_data(cfg: RunConfig, out: Path) -> dict:
    spec = cfg.synthetic_spec()
    train_set, test_set = generate_synthetic(spec)
    path = write_dataset(out, train_set, test_set)
    print(f"wrote {len(train_set)} train and {len(test_set)} test samples; manifest {path}")
    return {"train": len(train_set), "test": len(test_set), "manifest": str(path)}


def cmd_adapt(checkpoint, target) -> dict:
    adapted = adapt_first_layer(Checkpoint.load(checkpoint))
    adapted.save(target)
    print(f"wrote 4-channel checkpoint {target}")
    return {"checkpoint": str(target)}


# -- argument parsing -------------------------------------------------------


def _common(parser: argparse.ArgumentParser, with_defense: bool = False) -> None:
    parser.add_argument("--config", "-c", help="YAML run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. training.epochs=5 (repeatable)")
    parser.add_argument("--output-dir", "-o", help="output directory (beats the environment and config)")
    parser.add_argument("--seed", type=int, help="top-level seed")
    parser.add_argument("--verbose", "-v", action="store_true")
    if with_defense:
        parser.add_argument("--profile-kind", choices=("none", "adathresh", "edges"))
        parser.add_argument("--adv", action=argparse.BooleanOptionalAction, default=None,
                            help="include shadowed passes in training")
        parser.add_argument("--transform", action=argparse.BooleanOptionalAction, default=None,
                            help="include geometric-transform passes in training")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shadowguard", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier, optionally with the profile defense")
    _common(p, with_defense=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--init-checkpoint", help="start from this checkpoint (e.g. an adapted one)")

    p = sub.add_parser("attack", help="run the shadow attack sweep against a checkpoint")
    _common(p, with_defense=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ksweep", help="comma-separated shadow strengths")
    p.add_argument("--trials", type=int)
    p.add_argument("--label", help="defense label used in the reports")

    p = sub.add_parser("boundcheck", help="check shadow perturbations against the norm bound")
    _common(p)
    p.add_argument("--triples", type=int)

    p = sub.add_parser("saliency", help="write benign and shadowed saliency maps for one sample")
    _common(p, with_defense=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", required=True, help="sample id")
    p.add_argument("--k", type=float, default=0.43, help="shadow strength for the shadowed map")

    p = sub.add_parser("gen-data", help="write the synthetic sign dataset with a manifest")
    _common(p)
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--class-count", type=int)

    p = sub.add_parser("adapt", help="add a 4th input channel to a 3-channel checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", "-v", action="store_true")
    return parser


def _flag_overrides(args) -> list[dict]:
    """Dedicated flags, applied after --set so they take precedence."""
    o: list[dict] = []
    get = lambda name: getattr(args, name, None)  # noqa: E731
    if get("seed") is not None:
        o.append({"seed": args.seed})
    if get("profile_kind") is not None:
        o.append({"defense": {"profile_kind": args.profile_kind}})
    if get("adv") is not None:
        o.append({"defense": {"adv": args.adv}})
    if get("transform") is not None:
        o.append({"defense": {"transform": args.transform}})
    if get("epochs") is not None:
        o.append({"training": {"epochs": args.epochs}})
    if get("init_checkpoint") is not None:
        o.append({"training": {"init_checkpoint": args.init_checkpoint}})
    if get("ksweep") is not None:
        try:
            ks = [float(v) for v in args.ksweep.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --ksweep {args.ksweep!r}") from exc
        o.append({"evaluation": {"ksweep": ks}})
    if get("trials") is not None:
        o.append({"evaluation": {"trials": args.trials}})
    if get("label") is not None:
        o.append({"evaluation": {"label": args.label}})
    if get("triples") is not None:
        o.append({"boundcheck": {"triples": args.triples}})
    if get("samples_per_class") is not None:
        o.append({"dataset": {"synthetic": {"samples_per_class": args.samples_per_class}}})
    if get("class_count") is not None:
        o.append({"dataset": {"synthetic": {"class_count": args.class_count}}})
    return o


def run(argv=None) -> dict:
    """Parse ``argv`` and run the command; raises on failure."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "adapt":
        return cmd_adapt(args.checkpoint, args.out)
    cfg = RunConfig.load(args.config, list(args.overrides) + _flag_overrides(args))
    out = resolve_output_dir(cfg, args.output_dir)
    if args.command == "train":
        return cmd_train(cfg, out)
    if args.command == "attack":
        return cmd_attack(cfg, out, args.checkpoint)
    if args.command == "boundcheck":
        return cmd_boundcheck(cfg, out)
    if args.command == "saliency":
        return cmd_saliency(cfg, out, args.checkpoint, args.sample, args.k)
    return cmd_gen_data(cfg, out)


def main(argv=None) -> int:
    try:
        run(argv)
    except BoundViolation as exc:
        print(f"bound check failed: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (ConfigError, DatasetError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
