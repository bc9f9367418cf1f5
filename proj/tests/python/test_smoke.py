import math

import numpy as np
import pytest

import svae_noise as sn


def test_reweight_examples():
    assert sn.minmax_rescale([2, 4, 6]) == [0, 0.5, 1]
    gap = sn.loss_gap([0, 0.5, 1], [0, 1, 0.2])
    assert gap == [0, 0, 0.8]
    assert sn.importance_weights(gap, 0.5) == [1, 1, 0.5]
    w = sn.batch_weights([1.0, 2.0, 9.0], [5.0, 3.0, 0.0], 0.4)
    assert w["max_gap"] == 1.0
    assert min(w["weight"]) == pytest.approx(0.6, abs=1e-15)
    assert sn.alpha_at(0, 100) == 1.0
    assert sn.alpha_at(100, 100) == pytest.approx(0.01, abs=1e-12)
    with pytest.raises(ValueError):
        sn.importance_weights([0.1], 1.5)


def test_loss_values():
    assert sn.kl_gaussian(np.zeros((1, 2)), np.zeros((1, 2)))[0] == 0.0
    assert sn.kl_gaussian([[1.0, 0.0]], [[0.0, 0.0]])[0] == 0.5
    assert sn.kl_gaussian([[1.0, 0.0]], [[0.0, 0.0]], sn.KlSign.literal)[0] == -0.5
    assert sn.bce_multilabel([[0.0]], [[1.0]])[0] == pytest.approx(math.log(2), abs=1e-15)
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 4)) * 3
    targets = (rng.random((5, 4)) > 0.5).astype(float)
    np.testing.assert_allclose(sn.focal_multilabel(logits, targets, 0.0), sn.bce_multilabel(logits, targets), atol=1e-12)
    ce = sn.ce_pixelwise(np.zeros((1, 2, 4)), [0, 3])
    assert ce[0] == pytest.approx(math.log(4), abs=1e-15)
    assert sn.mse_features(np.ones((2, 4)), np.zeros((2, 4))).tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        sn.bce_multilabel([[0.0, 1.0]], [[1.0]])


def test_config_round_trip():
    c = sn.Config(sn.Task.segmentation)
    assert c.samples == 500
    c.noise_ratio = 0.4
    c.set("latent_dim", "8")
    text = c.to_text()
    back = sn.parse_config(text)
    assert back == c
    assert back.get("latent_dim") == "8"
    assert sn.parse_config("epochs = 3\n", {"task": "segmentation"}).epochs == 3
    with pytest.raises(ValueError):
        sn.parse_config("bogus = 1\n")


def test_run_audit_and_summary(tmp_path):
    c = sn.Config()
    c.samples = 200
    c.epochs = 4
    c.noise_ratio = 0.3
    c.audit = True
    row = sn.run_experiment(c, tmp_path / "run")
    assert row.status == "ok"
    assert 0.0 <= row.metric <= 1.0
    again = sn.run_experiment(c, tmp_path / "run")
    assert row.same_result(again)
    audit = sn.audit_run(tmp_path / "run", 2)
    assert audit["flagged"] == 31
    assert len(audit["ranking"]) == 104
    assert audit["precision"] is not None
    summary = sn.summarize([row, again])
    assert len(summary) == 1 and summary[0]["std"] == 0.0


def test_sweep_and_splits(tmp_path):
    c = sn.Config()
    c.samples = 120
    c.epochs = 1
    rows = sn.run_sweep(c, [sn.Task.multilabel], [sn.Method.cel_baseline, sn.Method.svae_reweight], [0.0, 0.2], [1], 1, tmp_path)
    assert [r.method for r in rows] == ["cel-baseline"] * 2 + ["svae-reweight"] * 2
    assert len(sn.read_rows(tmp_path / "results.tsv")) == 4
    splits = sn.prepare_splits(c)
    assert splits["train"]["inputs"].shape == (62, 20)
    assert not any(splits["validation"]["noisy"])
