import json
import math

import numpy as np
import pytest

import deffa


def test_version():
    assert deffa.__version__ == "0.1.0"


def test_metrics_hand_values():
    r = deffa.segmentation_metrics(tp=5, tn=90, fp=3, fn=2)
    assert r["acc"] == pytest.approx(0.95)
    assert r["dsc"] == pytest.approx(10 / 15)
    assert r["iou"] == pytest.approx(0.5)
    expected_mcc = (5 * 90 - 3 * 2) / math.sqrt(8 * 7 * 93 * 92)
    assert r["mcc"] == pytest.approx(expected_mcc)


def test_confusion_and_auc():
    rng = np.random.default_rng(0)
    prob = rng.random((16, 16))
    gt = (rng.random((16, 16)) < 0.3).astype(np.uint8)
    fov = np.ones((16, 16), dtype=np.uint8)
    c = deffa.confusion(prob, gt, fov)
    pred = prob >= 0.5
    assert c["tp"] == int(np.sum(pred & (gt == 1)))
    assert c["tn"] == int(np.sum(~pred & (gt == 0)))
    assert deffa.roc_auc(gt.astype(float), gt, fov) == 1.0


def test_invariant_input_is_normalized():
    rng = np.random.default_rng(1)
    image = rng.random((24, 24, 3))
    out = deffa.invariant_input(image, window_size=5)
    assert out.shape == (24, 24)
    assert out.min() == 0.0
    assert out.max() == pytest.approx(1.0)
    other = deffa.invariant_input(image, window_size=5, alpha_enh=4.0)
    assert np.max(np.abs(out - other)) < 1e-6


def test_csa_identity_stats():
    image = np.random.default_rng(2).random((8, 8, 3))
    out = deffa.csa_transform(image, [0, 0, 0], [1, 1, 1], 0.6)
    assert np.allclose(out, image, atol=1e-12)


def test_jaccard():
    a = np.zeros((4, 4), dtype=np.uint8)
    b = np.zeros((4, 4), dtype=np.uint8)
    a[0, 0] = a[0, 1] = 1
    b[0, 1] = b[0, 2] = 1
    assert deffa.jaccard_distance(a, b) == pytest.approx(2 / 3)


def test_payload_in_range():
    assert 2.0e6 <= deffa.default_payload_bytes() <= 4.0e6


def test_run_reports_usage_errors():
    assert deffa.run(["foo"]) == 1
    assert deffa.run(["prep"]) == 1


def test_train_and_load_model(tmp_path):
    cv2 = pytest.importorskip("cv2")
    data = tmp_path / "toy"
    rng = np.random.default_rng(3)
    for sub in ("images", "masks"):
        (data / sub).mkdir(parents=True)
    for i in range(2):
        cv2.imwrite(str(data / "images" / f"s{i}.png"), (rng.random((16, 16, 3)) * 255).astype(np.uint8))
        cv2.imwrite(str(data / "masks" / f"s{i}.png"), ((rng.random((16, 16)) < 0.3) * 255).astype(np.uint8))
    out = tmp_path / "model"
    assert deffa.run(["train", "-q", "--data", str(data), "--out", str(out), "--size", "16x16", "--epochs", "1"]) == 0
    model = deffa.Model(str(out / "model.ckpt"))
    assert json.loads(model.manifest)["trained_on"] == "toy"
    prob = model.predict(rng.random((16, 16, 3)))
    assert prob.shape == (16, 16)
    assert np.all((prob > 0) & (prob < 1))
