import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wcgen import data_io
from wcgen.estimator import WCDClassifier


def blobs(seed=1, n=150, classes=3, dims=6):
    ds = data_io.synthetic_dataset(
        seed=seed, n=n, classes=classes, dims=dims, separation=5.0
    )
    return ds.inputs, ds.labels


class TestSklearnProtocol:
    def test_get_set_params_round_trip(self):
        clf = WCDClassifier(alpha=0.05, hidden_layer_sizes=(8,))
        params = clf.get_params()
        assert params["alpha"] == 0.05
        cloned = clone(clf)
        assert cloned.get_params() == params

    def test_not_fitted_raises(self):
        with pytest.raises(NotFittedError):
            WCDClassifier().predict(np.zeros((1, 4)))

    def test_fit_returns_self(self):
        x, y = blobs()
        clf = WCDClassifier(hidden_layer_sizes=(8,), epochs=2)
        assert clf.fit(x, y) is clf


class TestFitPredict:
    def test_learns_separable_blobs(self):
        x, y = blobs()
        clf = WCDClassifier(hidden_layer_sizes=(16,), epochs=25, random_state=0)
        clf.fit(x, y)
        assert clf.score(x, y) > 0.9
        assert sorted(clf.classes_) == [0, 1, 2]

    def test_string_labels_round_trip(self):
        x, y_int = blobs(classes=2)
        y = np.array(["neg", "pos"])[y_int]
        clf = WCDClassifier(hidden_layer_sizes=(8,), epochs=10).fit(x, y)
        preds = clf.predict(x)
        assert set(preds) <= {"neg", "pos"}
        assert (preds == y).mean() > 0.9

    def test_predict_proba_rows_sum_to_one(self):
        x, y = blobs()
        clf = WCDClassifier(hidden_layer_sizes=(8,), epochs=3).fit(x, y)
        proba = clf.predict_proba(x[:10])
        assert proba.shape == (10, 3)
        assert np.allclose(proba.sum(axis=1), 1.0)
        assert np.array_equal(clf.classes_[proba.argmax(axis=1)], clf.predict(x[:10]))

    def test_deterministic_with_random_state(self):
        x, y = blobs()
        a = WCDClassifier(epochs=3, random_state=7).fit(x, y)
        b = WCDClassifier(epochs=3, random_state=7).fit(x, y)
        assert np.array_equal(a.decision_function(x), b.decision_function(x))

    def test_feature_count_checked(self):
        x, y = blobs()
        clf = WCDClassifier(epochs=2).fit(x, y)
        with pytest.raises(ValueError, match="features"):
            clf.predict(np.zeros((2, x.shape[1] + 1)))

    def test_single_class_rejected(self):
        x, _ = blobs()
        with pytest.raises(ValueError):
            WCDClassifier(epochs=1).fit(x, np.zeros(len(x)))


class TestPenaltyEffect:
    def test_alpha_lowers_weight_correlation(self):
        x, y = blobs()
        base = WCDClassifier(epochs=15, alpha=0.0, random_state=3).fit(x, y)
        reg = WCDClassifier(epochs=15, alpha=0.01, random_state=3).fit(x, y)
        assert reg.weight_correlation_ < base.weight_correlation_

    def test_complexity_measures_available(self):
        x, y = blobs()
        clf = WCDClassifier(hidden_layer_sizes=(8,), epochs=3).fit(x, y)
        report = clf.complexity_measures()
        assert report.nop == 6 * 8 + 8 + 8 * 3 + 3
        assert 0.0 <= report.wc <= 1.0
        assert report.pbc >= report.pb
