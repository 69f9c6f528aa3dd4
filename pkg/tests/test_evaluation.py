import json
import warnings

import numpy as np
import pytest

from shadowguard.data import Sample
from shadowguard.evaluation import (
    DEFAULT_KSWEEP,
    EvalReport,
    emit_report,
    emit_table,
    filter_dark,
    robustness_svg,
    run_regime,
    saliency,
)
from shadowguard.color import mean_l_channel
from shadowguard.model import CnnSpec, Network
from shadowguard.model.network import zero_params
from shadowguard.shadow import PsoConfig
from toys import ConstantClassifier

PSO = PsoConfig(particles=3, iterations=2)


def sample(value, label=0, sid="s", size=8):
    img = np.full((size, size, 3), value, np.uint8)
    return Sample(img, label, np.ones((size, size), bool), sid)


def bright_set(labels):
    rng = np.random.default_rng(0)
    return [Sample(rng.integers(150, 256, (8, 8, 3)).astype(np.uint8), int(lab), np.ones((8, 8), bool), f"s{i}")
            for i, lab in enumerate(labels)]


def test_default_sweep():
    assert DEFAULT_KSWEEP == (0.20, 0.25, 0.30, 0.35, 0.40, 0.43, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70)
    assert all(0 < k <= 1 for k in DEFAULT_KSWEEP)


def test_filter_dark_examples():
    kept, excluded = filter_dark([sample(0, sid="black"), sample(255, sid="white")])
    assert [s.id for s in kept] == ["white"] and excluded == 1


def test_filter_dark_boundary_is_excluded():
    s = sample(120)
    level = mean_l_channel(s.image)
    assert filter_dark([s], threshold=level) == ([], 1)
    assert len(filter_dark([s], threshold=np.nextafter(level, 0))[0]) == 1


def test_always_wrong_model_gives_zero():
    samples = bright_set([1, 1, 1])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = run_regime(ConstantClassifier([1.0, 0.0]), samples, [0.43], trials=2, pso_cfg=PSO)
    assert rep.benign_accuracy == 0.0
    assert rep.robustness == [0.0]
    assert any("no correctly classified" in str(w.message) for w in caught)


def test_constant_classifier_cannot_be_flipped():
    samples = bright_set([0, 0, 1, 1])
    rep = run_regime(ConstantClassifier([0.9, 0.1]), samples, [0.3, 0.7], trials=2, pso_cfg=PSO)
    assert rep.benign_accuracy == 0.5
    assert rep.robustness == [1.0, 1.0]
    assert rep.mean_queries == [PSO.max_queries] * 2
    assert rep.attacked == 2 and rep.trials == 2


def test_dark_samples_are_excluded_from_the_regime():
    samples = bright_set([0, 0]) + [sample(10, sid="dark")]
    rep = run_regime(ConstantClassifier([0.9, 0.1]), samples, [0.5], trials=1, pso_cfg=PSO)
    assert rep.excluded == 1 and rep.evaluated == 2


def test_regime_is_reproducible_and_bounded():
    spec = CnnSpec(input_channels=3, class_count=2, input_size=8,
                   layers=("conv3x3:2", "relu", "flatten", "dense"))
    from shadowguard.pipeline import ModelClassifier
    clf = ModelClassifier(Network.create(spec, seed=1))
    samples = bright_set([0, 1, 0, 1, 0, 1])
    a = run_regime(clf, samples, [0.2, 0.6], trials=2, pso_cfg=PSO, base_seed=3)
    b = run_regime(clf, samples, [0.2, 0.6], trials=2, pso_cfg=PSO, base_seed=3)
    assert a.to_json() == b.to_json()
    assert all(0 <= r <= 1 for r in a.robustness)
    if a.attacked:
        assert all(q >= 1 for q in a.mean_queries)
    assert [t["seed"] for t in a.per_trial] == [3, 4, 3, 4]


def test_trials_per_k_override():
    samples = bright_set([0, 0])
    rep = run_regime(ConstantClassifier([0.9, 0.1]), samples, [0.3, 0.43], trials=1, pso_cfg=PSO,
                     trials_per_k={0.43: 3})
    assert [t["k"] for t in rep.per_trial].count(0.43) == 3
    assert rep.trials == 3


def test_empty_test_set_rejected():
    with pytest.raises(ValueError):
        run_regime(ConstantClassifier([1.0, 0.0]), [sample(0)], [0.5], pso_cfg=PSO)


def make_report(ks, label="adathresh"):
    return EvalReport(label=label, ks=list(ks), robustness=[0.5] * len(ks), mean_queries=[100.0] * len(ks),
                      benign_accuracy=0.9, trials=1, excluded=0)


def test_report_validation():
    with pytest.raises(ValueError):
        EvalReport("x", [0.2], [1.5], [1.0], 0.5, 1, 0)
    with pytest.raises(ValueError):
        EvalReport("x", [0.2, 0.3], [0.5], [1.0], 0.5, 1, 0)


def test_empty_sweep_is_header_only():
    assert emit_report(make_report([])) == b"defense\n"


def test_full_sweep_has_twelve_columns():
    text = emit_report(make_report(DEFAULT_KSWEEP)).decode()
    header, row = text.strip().split("\n")
    assert len(header.split(",")) == 13 and header.split(",")[6] == "0.43"
    assert row.split(",")[0] == "adathresh" and len(row.split(",")) == 13


def test_queries_table_and_multi_row():
    a, b = make_report([0.43], "undefended"), make_report([0.43], "edges")
    assert emit_table([a, b], "mean_queries") == b"defense,0.43\nundefended,100.0000\nedges,100.0000\n"
    with pytest.raises(ValueError):
        emit_table([a, make_report([0.5])])


def test_json_round_trip_is_byte_identical():
    rep = make_report([0.2, 0.43])
    rep.per_trial.append({"k": 0.2, "trial": 0, "seed": 0, "robustness": 0.5, "successes": 1, "attacked": 2})
    blob = emit_report(rep, "json")
    again = EvalReport.from_json(blob.decode())
    assert emit_report(again, "json") == blob
    assert json.loads(blob)["ks"] == [0.2, 0.43]


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        emit_report(make_report([0.2]), "xml")


def test_svg_is_deterministic():
    reps = [make_report([0.2, 0.43, 0.7], "undefended"), make_report([0.2, 0.43, 0.7], "a<b")]
    svg = robustness_svg(reps)
    assert svg == robustness_svg(reps)
    assert svg.startswith("<svg") and svg.count("<polyline") == 2 and "a&lt;b" in svg


def test_saliency_zero_model():
    spec = CnnSpec(input_channels=4, class_count=3, input_size=8, layers=("conv3x3:2", "relu", "flatten", "dense"))
    net = Network(spec, zero_params(spec), np.float32)
    sal = saliency(net, np.zeros((8, 8, 4), np.uint8), 1)
    assert sal.shape == (8, 8) and not sal.any()


def test_saliency_range(rng):
    spec = CnnSpec(input_channels=4, class_count=3, input_size=8, layers=("conv3x3:2", "relu", "flatten", "dense"))
    sal = saliency(Network.create(spec, seed=4), rng.integers(0, 256, (8, 8, 4)).astype(np.uint8), 2)
    assert sal.min() >= 0 and sal.max() == pytest.approx(1.0)


def test_saliency_linear_closed_form(rng):
    spec = CnnSpec(input_channels=4, class_count=3, input_size=6, layers=("flatten", "dense"))
    net = Network.create(spec, seed=7, dtype=np.float64)
    w = net.params["1.weight"][2].reshape(4, 6, 6)
    expected = np.abs(w).max(axis=0)
    expected /= expected.max()
    sal = saliency(net, rng.integers(0, 256, (6, 6, 4)).astype(np.uint8), 2)
    np.testing.assert_allclose(sal, expected, atol=1e-12)
