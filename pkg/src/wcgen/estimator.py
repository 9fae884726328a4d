"""scikit-learn compatible front end for the correlation-regularised net."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from . import measures, nn, train
from .data_io import checkpoint_from_params


class WCDClassifier(BaseEstimator, ClassifierMixin):
    """Fully-connected softmax classifier trained with the WC penalty.

    Setting ``alpha > 0`` adds the weight-correlation descent term to every
    hidden and output weight matrix, pushing neuron weight vectors apart
    during training.
    """

    def __init__(self, hidden_layer_sizes=(64, 32), alpha=0.0,
                 learning_rate=0.01, momentum=0.9, epochs=50, batch_size=32,
                 sigma_init=0.1, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.sigma_init = sigma_init
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        X = np.asarray(X, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X.shape[1]
        sizes = [self.n_features_in_, *self.hidden_layer_sizes, len(self.classes_)]
        specs = []
        for i in range(len(sizes) - 1):
            specs.append(nn.dense(sizes[i], sizes[i + 1]))
            if i < len(sizes) - 2:
                specs.append(nn.relu())
        self.network_ = nn.init_network(
            specs, (self.n_features_in_,), seed=self.random_state,
            sigma_init=self.sigma_init,
        )
        cfg = train.TrainConfig(
            learning_rate=self.learning_rate, momentum=self.momentum,
            epochs=self.epochs, batch_size=self.batch_size,
            alpha=self.alpha, seed=self.random_state,
        )
        self.report_ = train.train(self.network_, (X, encoded), None, cfg)
        self.weight_correlation_ = train.mean_wc(self.network_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("fit the classifier before predicting")

    def decision_function(self, X):
        self._check_fitted()
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return nn.predict_logits(self.network_, np.asarray(X, dtype=np.float64))

    def predict_proba(self, X):
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, X):
        logits = self.decision_function(X)
        return self.classes_[logits.argmax(axis=1)]

    def complexity_measures(self, config=measures.MeasureConfig()):
        """Measure battery on the fitted network's (theta0, thetaF) pair."""
        self._check_fitted()
        return measures.compute_measures(checkpoint_from_params(self.network_), config)
