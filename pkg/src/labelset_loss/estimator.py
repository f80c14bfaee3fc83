"""scikit-learn compatible wrapper around :func:`labelset_loss.trainer.train`."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .labelspace import LabelSetMap
from .losses import LossSpec
from .phantom import Phantom
from .trainer import Model, TrainConfig, softmax, train


def check_volumes(X, y=None) -> list[tuple[np.ndarray, LabelSetMap, str]]:
    """Normalize training input to ``(features, annotation, case_id)`` triples.

    ``X`` is either a sequence of :class:`Phantom` (``y`` must be None) or a
    sequence of ``(N, F)`` feature arrays paired with label-set maps in ``y``.
    """
    if y is None:
        out = []
        for vol in X:
            if not isinstance(vol, Phantom):
                raise TypeError("without y, X must hold Phantom volumes")
            out.append((check_array(vol.features), vol.partial, vol.case_id))
        return out
    if len(X) != len(y):
        raise ValueError(f"got {len(X)} feature volumes but {len(y)} annotations")
    out = []
    for i, (x, g) in enumerate(zip(X, y)):
        x = check_array(x)
        if not isinstance(g, LabelSetMap):
            raise TypeError("y must hold LabelSetMap annotations")
        if x.shape[0] != g.n:
            raise ValueError(f"volume {i}: {x.shape[0]} feature rows for {g.n} voxels")
        out.append((x, g, str(i)))
    return out


class LabelSetSegmenter(ClassifierMixin, BaseEstimator):
    """Voxel-wise linear-softmax segmenter trained under a label-set loss.

    ``fit`` takes whole volumes (each a batch element); ``predict_proba`` and
    ``predict`` work on one ``(N, F)`` feature matrix or a :class:`Phantom`.
    """

    def __init__(self, loss: str = "LeafDice", alpha: int = 2, epsilon: float = 1e-5,
                 learning_rate: float = 1e-3, batch_size: int = 3,
                 max_epochs: int = 500, early_stop_patience: Optional[int] = 50,
                 split_fraction: float = 0.9, random_state: int = 0):
        self.loss = loss
        self.alpha = alpha
        self.epsilon = epsilon
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.split_fraction = split_fraction
        self.random_state = random_state

    def _loss_spec(self) -> LossSpec:
        return LossSpec(self.loss, alpha=self.alpha, epsilon=self.epsilon)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           max_epochs=self.max_epochs,
                           early_stop_patience=self.early_stop_patience,
                           split_fraction=self.split_fraction, seed=self.random_state)

    def fit(self, X: Sequence, y: Optional[Sequence[LabelSetMap]] = None):
        volumes = check_volumes(X, y)
        self.model_, self.log_ = train(volumes, self._loss_spec(), self._train_config())
        self.n_features_in_ = self.model_.num_features
        self.classes_ = np.arange(self.model_.num_labels)
        return self

    def _features(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        x = X.features if isinstance(X, Phantom) else X
        x = check_array(x)
        if x.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {x.shape[1]} features, the model expects {self.n_features_in_}")
        return x

    def decision_function(self, X) -> np.ndarray:
        x = self._features(X)
        return x @ self.model_.weights.T + self.model_.bias

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    @property
    def model(self) -> Model:
        check_is_fitted(self, "model_")
        return self.model_
