import math

import numpy as np
import pytest

import lei

TINY = {
    "cohort": {
        "generator": {
            "preset": "planted",
            "n_samples": 120,
            "time_point_count": 3,
            "target_proportions": [[0.5, 0.5, 0.0], [0.4, 0.45, 0.15], [0.35, 0.4, 0.25]],
        }
    },
    "predictors": [
        {"algorithm": "knn", "k": 5},
        {"algorithm": "multinomial_logistic", "epochs": 30, "learning_rate": 0.5},
        {"algorithm": "random_forest", "trees": 5, "max_depth": 4},
    ],
    "stacker": {"hidden_sizes": [8], "mlp_hidden": 8, "epochs": 10, "learning_rate": 0.01},
    "experiment": {"repeats": 2, "outer_folds": 3, "inner_folds": 3, "seed": 4},
    "interpret": {"inner_folds": 3, "permutation_repeats": 2, "top_k": 3},
}


def test_default_preset_shape():
    c = lei.generate("default")
    assert len(c) == 749
    assert c.total_features == 337
    assert len(c.modalities) == 8
    assert c.labels().shape == (749, 5)
    x = c.features(c.modalities[0])
    assert x.shape == (749, 4, 9)
    assert np.isnan(x).any()


def test_generate_is_deterministic(tmp_path):
    a = lei.generate("planted", n_samples=50)
    b = lei.generate("planted", n_samples=50)
    assert a == b
    lei.export_cohort(a, tmp_path / "c.csv", tmp_path / "s.json")
    assert lei.load_cohort(tmp_path / "c.csv", tmp_path / "s.json") == a


def test_validation_errors_name_the_field():
    with pytest.raises(lei.ValidationError, match="target_proportions"):
        lei.generate("planted", target_proportions=[[1.0, 0.0, 0.0]])
    with pytest.raises(ValueError, match="stacker.epoch: unknown field"):
        lei.resolve_config({**TINY, "stacker": {"epoch": 1}})


def test_metrics_and_losses():
    assert lei.macro_f_measure([0, 1, 2], [0, 1, 2], 3) == 1.0
    assert lei.macro_f_measure([0, 0, 0, 0, 0, 0], [0, 0, 1, 1, 2, 2], 3) == pytest.approx(0.5 / 3)
    w = lei.class_weights(np.array([[0], [0], [0], [1], [1], [2]], dtype=np.int32), 3)
    assert w[0] == pytest.approx([2 / 3, 1.0, 2.0])
    uniform = [np.full((2, 3), 1 / 3)] * 4
    labels = np.zeros((2, 4), dtype=np.int32)
    assert lei.loss("cce", uniform, labels) == pytest.approx(4 * math.log(3), abs=1e-12)


def test_run_and_compare():
    r = lei.run(TINY)
    assert list(r["methods"]) == ["config4"]
    assert r["time_points"] == ["t1", "t2"]
    m = r["methods"]["config4"]
    assert m["macro_f"].shape == (2, 2)
    assert r["audit"]["inner_violations"] == 0
    assert r["audit"]["outer_violations"] == 0

    c = lei.compare(TINY, [1, 2, 3, 4, "early_fusion_mlp"])
    assert len(c["methods"]) == 5
    np.testing.assert_array_equal(c["methods"]["config4"]["macro_f"], m["macro_f"])
    assert c["audit"]["time_dependent_models"] == 2 * 3 * 3
    assert c["audit"]["time_distributed_models"] == 3 * 3


def test_thread_count_does_not_change_results():
    saved = lei.threads()
    try:
        lei.set_threads(1)
        a = lei.run(TINY)
        lei.set_threads(4)
        b = lei.run(TINY)
    finally:
        lei.set_threads(saved)
    np.testing.assert_array_equal(a["methods"]["config4"]["macro_f"], b["methods"]["config4"]["macro_f"])


def test_interpret():
    t = lei.interpret(TINY)
    assert [r["time_point"] for r in t["times"]] == ["t0", "t1"]
    for r in t["times"]:
        assert r["features"][0]["feature"] == "signal_000"
        assert r["modalities"][0]["modality"] == "signal"


def test_unknown_configuration():
    with pytest.raises(lei.ValidationError):
        lei.run(TINY, configuration=5)
