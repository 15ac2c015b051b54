import numpy as np
import pytest

import metric_oracle
from lmfmult.data import EMOTIONS
from lmfmult.errors import LengthMismatch
from lmfmult.metrics import MetricsReport, binary_f1, emotion_metrics, sentiment_metrics


def random_sentiment_draw(rng):
    n = int(rng.integers(2, 40))
    kind = rng.integers(3)
    if kind == 0:
        preds = rng.uniform(-4, 4, n)
    elif kind == 1:  # half-integers exercise rounding ties
        preds = rng.integers(-8, 9, n) / 2.0
    else:
        preds = np.round(rng.normal(0, 2, n), 1)
    labels = rng.integers(-6, 7, n) / 2.0
    return preds, labels


def compare_sentiment(preds, labels):
    got = sentiment_metrics(preds, labels)
    ref = metric_oracle.sentiment(preds.tolist(), labels.tolist())
    n = len(preds)
    assert got["acc7"] == ref["acc7_hits"] / n
    assert got["acc2_support"] == ref["acc2_support"]
    if ref["acc2_support"]:
        assert got["acc2"] == ref["acc2_hits"] / ref["acc2_support"]
    assert abs(got["f1"] - ref["f1"]) <= 1e-12
    assert abs(got["mae"] - ref["mae"]) <= 1e-12
    assert abs(got["corr"] - ref["corr"]) <= 1e-12


def compare_emotions(logits, labels):
    got = emotion_metrics(logits, labels)
    ref = metric_oracle.emotions(logits.tolist(), labels.astype(int).tolist())
    for i, emo in enumerate(EMOTIONS):
        assert got[emo]["acc"] == ref[i]["hits"] / len(labels)
        assert abs(got[emo]["f1"] - ref[i]["f1"]) <= 1e-12


class TestSentiment:
    def test_identity(self):
        y = np.array([-3.0, -1.0, 0.0, 2.0])
        m = sentiment_metrics(y, y)
        assert m["acc7"] == 1.0 and m["mae"] == 0.0 and m["corr"] == pytest.approx(1.0)

    def test_hand_computed(self):
        m = sentiment_metrics([1.2, -0.5, 0.3], [2.0, -1.0, -2.0])
        assert m["acc2"] == pytest.approx(2 / 3)
        assert m["mae"] == pytest.approx((0.8 + 0.5 + 2.3) / 3)
        assert m["f1"] == pytest.approx(2 / 3)  # tp=1, fp=1, fn=0

    def test_zero_label_excluded(self):
        m = sentiment_metrics([1.0, -1.0, 5.0], [1.0, -1.0, 0.0])
        assert m["acc2"] == 1.0 and m["acc2_support"] == 2

    def test_clamp(self):
        assert sentiment_metrics([5.0, -9.0], [3.0, -3.0])["acc7"] == 1.0

    def test_degenerate_corr(self):
        m = sentiment_metrics([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        assert m["corr"] == 0.0 and m["corr_degenerate"]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            sentiment_metrics([1.0, 2.0], [1.0])

    def test_against_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            compare_sentiment(*random_sentiment_draw(rng))


class TestEmotions:
    def test_perfect(self):
        labels = np.array([[1, 0, 1, 0], [0, 1, 0, 1]], float)
        logits = np.stack([np.stack([1 - labels[:, i], labels[:, i]], -1) for i in range(4)], 1).reshape(2, 8)
        for v in emotion_metrics(logits, labels).values():
            assert v == {"acc": 1.0, "f1": 1.0}

    def test_all_negative_predictions(self):
        logits = np.tile([1.0, 0.0], (3, 4))
        for v in emotion_metrics(logits, np.ones((3, 4))).values():
            assert v == {"acc": 0.0, "f1": 0.0}

    def test_mixed_hand_checked(self):
        # happy: pred [1,1,0,0] vs truth [1,0,1,0] -> acc 0.5, tp=1 fp=1 fn=1 -> f1 0.5
        pred_happy = [1, 1, 0, 0]
        truth = np.zeros((4, 4))
        truth[:, 0] = [1, 0, 1, 0]
        logits = np.zeros((4, 8))
        logits[:, 1] = np.array(pred_happy, float)
        m = emotion_metrics(logits, truth)
        assert m["happy"] == {"acc": 0.5, "f1": 0.5}
        assert m["sad"] == {"acc": 1.0, "f1": 0.0}

    def test_shape_errors(self):
        with pytest.raises(LengthMismatch):
            emotion_metrics(np.zeros((3, 6)), np.zeros((3, 4)))
        with pytest.raises(LengthMismatch):
            emotion_metrics(np.zeros((3, 8)), np.zeros((2, 4)))

    def test_against_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            compare_emotions(np.round(rng.normal(size=(n, 8)), 1), rng.integers(0, 2, (n, 4)).astype(float))


def test_binary_f1_no_positives():
    assert binary_f1([0, 0], [0, 0]) == 0.0


def test_report_dict():
    d = MetricsReport("sentiment", loss=0.5).to_dict()
    assert d["schema_version"] == 1 and d["loss"] == 0.5
