import json

import numpy as np
import pytest
import yaml
from PIL import Image

from shadowguard.cli import CHECKPOINT_NAME, EXIT_BOUND, EXIT_INVALID, EXIT_OK, cmd_boundcheck, main
from shadowguard.config import OUTPUT_ENV, ConfigError, RunConfig, parse_override, resolve_output_dir
from shadowguard.model import Checkpoint, CnnSpec, Network
from shadowguard.model.network import zero_params

TINY = {
    "seed": 1,
    "dataset": {"synthetic": {"class_count": 4, "samples_per_class": 30, "seed": 3}},
    "defense": {"profile_kind": "adathresh", "adv": False, "transform": False},
    "training": {"epochs": 15, "batch_size": 16, "learning_rate": 0.01},
    "pso": {"particles": 3, "iterations": 2},
    "evaluation": {"ksweep": [0.43], "trials": 1},
    "boundcheck": {"triples": 50},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("trained")
    cfg = root / "run.yaml"
    cfg.write_text(yaml.safe_dump(TINY))
    assert main(["train", "-c", str(cfg), "-o", str(root / "out")]) == EXIT_OK
    return cfg, root / "out"


def test_config_defaults_and_unknown_keys():
    cfg = RunConfig()
    assert cfg.profile_kind == "adathresh" and cfg.train_config().epochs == 30
    with pytest.raises(ConfigError, match="unknown config key"):
        RunConfig({"trainig": {}})
    with pytest.raises(ConfigError, match="training.epoch"):
        RunConfig({"training": {"epoch": 3}})
    with pytest.raises(ConfigError):
        RunConfig({"defense": {"profile_kind": "otsu"}})
    with pytest.raises(ConfigError):
        RunConfig({"evaluation": {"ksweep": [0.0]}})


def test_overrides_take_precedence(config):
    cfg = RunConfig.load(config, ["training.epochs=3", {"defense": {"adv": True}}])
    assert cfg.train_config().epochs == 3 and cfg.augment_config().adv
    assert parse_override("a.b=[1, 2]") == {"a": {"b": [1, 2]}}
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_output_dir_resolution(monkeypatch):
    cfg = RunConfig({"output_dir": "from-config"})
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert str(resolve_output_dir(cfg)) == "from-config"
    monkeypatch.setenv(OUTPUT_ENV, "from-env")
    assert str(resolve_output_dir(cfg)) == "from-env"
    assert str(resolve_output_dir(cfg, "from-flag")) == "from-flag"


def test_invalid_config_exits_one(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("training: {epochz: 1}\n")
    assert main(["train", "-c", str(bad), "-o", str(tmp_path / "o")]) == EXIT_INVALID
    assert not (tmp_path / "o" / CHECKPOINT_NAME).exists()
    assert main(["train", "--no-such-flag"]) == EXIT_INVALID
    assert main(["train", "-c", str(tmp_path / "missing.yaml")]) == EXIT_INVALID


def test_train_writes_checkpoint_and_log(trained):
    _, out = trained
    log = json.loads((out / "train_log.json").read_text())
    assert (out / CHECKPOINT_NAME).exists()
    assert log["dataset_size"] == log["source_size"] == 96
    assert len(log["epochs"]) == 15 and {"loss", "train_accuracy", "test_accuracy"} <= set(log["epochs"][0])
    assert log["benign_test_accuracy"] >= 0.9
    assert Checkpoint.load(out / CHECKPOINT_NAME).spec.input_channels == 4


def test_train_is_deterministic(trained, tmp_path):
    cfg, out = trained
    assert main(["train", "-c", str(cfg), "-o", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "train_log.json").read_bytes() == (out / "train_log.json").read_bytes()
    assert (tmp_path / CHECKPOINT_NAME).read_bytes() == (out / CHECKPOINT_NAME).read_bytes()


def test_flag_overrides_quadruplicate(config, tmp_path):
    args = ["train", "-c", str(config), "-o", str(tmp_path), "--epochs", "1", "--adv", "--transform"]
    assert main(args) == EXIT_OK
    log = json.loads((tmp_path / "train_log.json").read_text())
    assert log["dataset_size"] == 4 * log["source_size"]
    assert main(args[:-2] + ["--no-adv", "--no-transform"]) == EXIT_OK
    log = json.loads((tmp_path / "train_log.json").read_text())
    assert log["dataset_size"] == log["source_size"]


def test_attack_reports(trained, tmp_path):
    cfg, out = trained
    ck = str(out / CHECKPOINT_NAME)
    for sub in ("a", "b"):
        assert main(["attack", "-c", str(cfg), "--checkpoint", ck, "-o", str(tmp_path / sub)]) == EXIT_OK
    for name in ("robustness.csv", "queries.csv", "report.json", "robustness.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "robustness.csv").read_text().splitlines()[0]
    assert header == "defense,0.43"
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["ks"] == [0.43] and report["trials"] == 1


def test_attack_rejects_channel_mismatch(trained, tmp_path):
    cfg, out = trained
    ck = str(out / CHECKPOINT_NAME)
    assert main(["attack", "-c", str(cfg), "--checkpoint", ck, "--profile-kind", "none",
                 "-o", str(tmp_path)]) == EXIT_INVALID
    assert main(["attack", "-c", str(cfg), "--checkpoint", ck, "--profile-kind", "edges",
                 "-o", str(tmp_path)]) == EXIT_INVALID
    assert main(["attack", "-c", str(cfg), "--checkpoint", str(tmp_path / "nope.sgck"),
                 "-o", str(tmp_path)]) == EXIT_INVALID


def test_boundcheck_passes_and_is_reproducible(config, tmp_path, capsys):
    assert main(["boundcheck", "-c", str(config), "-o", str(tmp_path / "a")]) == EXIT_OK
    assert main(["boundcheck", "-c", str(config), "-o", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "boundcheck.json").read_bytes()
    assert a == (tmp_path / "b" / "boundcheck.json").read_bytes()
    summary = json.loads(a)
    assert summary["passed"] and summary["triples"] == 50
    assert 0 < summary["max_ratio"]["2"] <= 1 and 0 < summary["max_ratio"]["inf"] <= 1


def test_boundcheck_unit_k_has_zero_ratio(tmp_path):
    summary = cmd_boundcheck(RunConfig({"boundcheck": {"triples": 30, "ksweep": [1.0]}}), tmp_path)
    assert summary["max_ratio"] == {"2": 0.0, "inf": 0.0}


def test_boundcheck_violation_exits_two(tmp_path, monkeypatch, capsys):
    import shadowguard.cli as cli
    monkeypatch.setattr(cli, "epsilon_bound", lambda k, p: 0.1 * (1 - k))
    assert main(["boundcheck", "--triples", "20", "-o", str(tmp_path)]) == EXIT_BOUND
    out = capsys.readouterr().out
    assert "violation #" in out


def test_saliency_outputs(trained, tmp_path):
    cfg, out = trained
    ck = str(out / CHECKPOINT_NAME)
    assert main(["saliency", "-c", str(cfg), "--checkpoint", ck, "--sample", "syn-01-0003",
                 "-o", str(tmp_path)]) == EXIT_OK
    for name in ("saliency_benign.png", "saliency_shadowed.png"):
        img = np.asarray(Image.open(tmp_path / name))
        assert img.shape == (32, 32) and img.dtype == np.uint8
    assert np.asarray(Image.open(tmp_path / "saliency_pair.png")).shape == (32, 64)
    assert main(["saliency", "-c", str(cfg), "--checkpoint", ck, "--sample", "nope",
                 "-o", str(tmp_path)]) == EXIT_INVALID


def _write_ckpt(path, params_fn, spec):
    Checkpoint(spec, params_fn(spec), {"profile_kind": "adathresh"}).save(path)


def test_saliency_zero_checkpoint_is_black(config, tmp_path):
    spec = CnnSpec(input_channels=4, class_count=4)
    _write_ckpt(tmp_path / "zero.sgck", lambda s: zero_params(s), spec)
    assert main(["saliency", "-c", str(config), "--checkpoint", str(tmp_path / "zero.sgck"),
                 "--sample", "syn-00-0001", "-o", str(tmp_path / "o")]) == EXIT_OK
    assert not np.asarray(Image.open(tmp_path / "o" / "saliency_pair.png")).any()


def test_saliency_linear_checkpoint_closed_form(config, tmp_path):
    spec = CnnSpec(input_channels=4, class_count=4, layers=("flatten", "dense"))
    net = Network.create(spec, seed=2)
    Checkpoint.from_network(net, {"profile_kind": "adathresh"}).save(tmp_path / "lin.sgck")
    assert main(["saliency", "-c", str(config), "--checkpoint", str(tmp_path / "lin.sgck"),
                 "--sample", "syn-02-0000", "-o", str(tmp_path / "o")]) == EXIT_OK
    w = np.abs(net.params["1.weight"][2].reshape(4, 32, 32).astype(np.float64)).max(axis=0)
    expected = np.floor(w / w.max() * 255 + 0.5)
    got = np.asarray(Image.open(tmp_path / "o" / "saliency_benign.png")).astype(float)
    assert np.abs(got - expected).max() <= 1


def test_gen_data_and_manifest_training(config, tmp_path):
    data_dir = tmp_path / "data"
    assert main(["gen-data", "-c", str(config), "-o", str(data_dir), "--samples-per-class", "5"]) == EXIT_OK
    assert (data_dir / "manifest.csv").exists()
    manifest_cfg = tmp_path / "m.yaml"
    manifest_cfg.write_text(yaml.safe_dump({"dataset": {"root": "data"}, "training": {"epochs": 1},
                                            "defense": {"profile_kind": "none", "adv": False,
                                                        "transform": False}}))
    assert main(["train", "-c", str(manifest_cfg), "-o", str(tmp_path / "o")]) == EXIT_OK
    log = json.loads((tmp_path / "o" / "train_log.json").read_text())
    assert log["source_size"] == 16 and log["spec"]["class_count"] == 4


def test_adapt_command(tmp_path):
    spec = CnnSpec(input_channels=3, class_count=4)
    Checkpoint.from_network(Network.create(spec)).save(tmp_path / "rgb.sgck")
    assert main(["adapt", "--checkpoint", str(tmp_path / "rgb.sgck"), "--out", str(tmp_path / "x.sgck")]) == EXIT_OK
    assert Checkpoint.load(tmp_path / "x.sgck").spec.input_channels == 4
    assert main(["adapt", "--checkpoint", str(tmp_path / "x.sgck"), "--out", str(tmp_path / "y.sgck")]) == EXIT_INVALID


def test_train_from_adapted_checkpoint(config, tmp_path):
    spec = CnnSpec(input_channels=3, class_count=4)
    Checkpoint.from_network(Network.create(spec)).save(tmp_path / "rgb.sgck")
    assert main(["adapt", "--checkpoint", str(tmp_path / "rgb.sgck"), "--out", str(tmp_path / "x.sgck")]) == EXIT_OK
    assert main(["train", "-c", str(config), "--init-checkpoint", str(tmp_path / "x.sgck"), "--epochs", "1",
                 "-o", str(tmp_path / "o")]) == EXIT_OK


def test_env_var_sets_output(config, tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env-out"))
    assert main(["boundcheck", "-c", str(config)]) == EXIT_OK
    assert (tmp_path / "env-out" / "boundcheck.json").exists()
