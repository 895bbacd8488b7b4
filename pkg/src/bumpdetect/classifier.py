from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import tensornet as tn
from .transform import SHAPES, network_input
from .validation import check_labels


def encoding_for_shape(shape):
    for name, shp in SHAPES.items():
        if tuple(shape) == shp:
            return name
    raise ValueError(f"input shape {tuple(shape)} matches no known encoding")


class BumpNetClassifier(ClassifierMixin, BaseEstimator):
    """Neural bump classifier on encoded spectra.

    Parameters
    ----------
    network : str or NetworkSpec
        Preset name (``"FC2-400"``, ``"CNN4-REF"``, ...) or a spec.
    lr, decay, step_epochs, epochs, batch_size, seed, validation_fraction
        Training settings, see :class:`bumpdetect.tensornet.TrainConfig`.
    threshold : float
        ``predict`` returns class 1 when ``P(bump) >= threshold``.
    warm_start_model : Model, optional
        Copy this model's layers (all but the final Dense + Softmax head)
        before training.
    freeze_prefix : bool
        With a warm start, keep the copied layers fixed.
    """

    def __init__(self, network="FC2-400", lr=0.01, decay=0.1, step_epochs=None,
                 epochs=10, batch_size=32, seed=0, validation_fraction=0.0,
                 threshold=0.5, warm_start_model=None, freeze_prefix=False):
        self.network = network
        self.lr = lr
        self.decay = decay
        self.step_epochs = step_epochs
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.validation_fraction = validation_fraction
        self.threshold = threshold
        self.warm_start_model = warm_start_model
        self.freeze_prefix = freeze_prefix

    def _spec(self, n_features):
        if isinstance(self.network, tn.NetworkSpec):
            return self.network
        return tn.preset(self.network, input_dim=n_features)

    def _config(self):
        return tn.TrainConfig(lr=self.lr, decay=self.decay, step_epochs=self.step_epochs,
                              batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
                              validation_fraction=self.validation_fraction)

    def fit(self, X, y, X_val=None, y_val=None):
        X = np.asarray(X, dtype=np.float64)
        y = check_labels(y, len(X))
        spec = self._spec(X.shape[1] if X.ndim == 2 else 4761)
        encoding = encoding_for_shape(spec.input_shape)
        xin = network_input(encoding, X)
        vin = None if X_val is None else network_input(encoding, X_val)
        cfg = self._config()
        if self.warm_start_model is not None:
            source = self.warm_start_model
            head = spec.layers[-2:]
            self.model_, self.history_ = tn.fine_tune(
                source, head, xin, y, cfg, keep=len(source.spec.layers) - 2,
                freeze=self.freeze_prefix, x_val=vin, y_val=y_val)
        else:
            self.model_, self.history_ = tn.train(tn.init(spec, self.seed), xin, y,
                                                  vin, y_val, cfg)
        self.model_.meta["encoding"] = encoding
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(np.prod(spec.input_shape))
        return self

    @classmethod
    def from_model(cls, model: tn.Model, threshold=0.5):
        clf = cls(network=model.spec, threshold=threshold)
        clf.model_ = model
        clf.history_ = []
        clf.classes_ = np.array([0, 1])
        clf.n_features_in_ = int(np.prod(model.spec.input_shape))
        return clf

    @property
    def encoding(self):
        check_is_fitted(self, "model_")
        return self.model_.meta.get("encoding") or encoding_for_shape(self.model_.spec.input_shape)

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        x = network_input(self.encoding, X)
        return np.concatenate([tn.forward(self.model_, x[i:i + 64])
                               for i in range(0, len(x), 64)])

    def decision_function(self, X):
        """``P(bump)`` per sample."""
        return self.predict_proba(X)[:, 1]

    def predict(self, X):
        return (self.decision_function(X) >= self.threshold).astype(np.int64)
