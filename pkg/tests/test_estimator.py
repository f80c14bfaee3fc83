import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from labelset_loss import LabelSetSegmenter
from labelset_loss.phantom import PhantomConfig, generate


@pytest.fixture(scope="module")
def volumes():
    return [generate(PhantomConfig((8, 8, 8), 3, 0.1, seed=s), 0 if s < 2 else 0b110)
            for s in range(5)]


def test_params_round_trip():
    est = LabelSetSegmenter(loss="ConvertedDice", alpha=1, max_epochs=3)
    params = est.get_params()
    assert params["loss"] == "ConvertedDice" and params["alpha"] == 1
    twin = clone(est)
    assert twin.get_params() == params
    assert est.set_params(learning_rate=0.1).learning_rate == 0.1


def test_fit_predict(volumes):
    est = LabelSetSegmenter(learning_rate=0.05, max_epochs=40).fit(volumes)
    assert est.n_features_in_ == 5
    assert list(est.classes_) == [0, 1, 2]
    proba = est.predict_proba(volumes[0])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    pred = est.predict(volumes[0].features)
    assert pred.shape == (512,)
    assert np.mean(pred == volumes[0].true_labels) > 0.8
    assert est.model is est.model_


def test_fit_with_arrays(volumes):
    X = [v.features for v in volumes]
    y = [v.partial for v in volumes]
    a = LabelSetSegmenter(max_epochs=3).fit(X, y)
    b = LabelSetSegmenter(max_epochs=3).fit(volumes)
    np.testing.assert_array_equal(a.model_.weights, b.model_.weights)


def test_input_validation(volumes):
    with pytest.raises(NotFittedError):
        LabelSetSegmenter().predict(volumes[0])
    est = LabelSetSegmenter(max_epochs=1).fit(volumes)
    with pytest.raises(ValueError):
        est.predict(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        LabelSetSegmenter().fit([volumes[0].features], [volumes[0].partial, volumes[1].partial])
    with pytest.raises(TypeError):
        LabelSetSegmenter().fit([volumes[0].features])
    with pytest.raises(ValueError):
        LabelSetSegmenter().fit([np.full((512, 5), np.nan)] * 2, [volumes[0].partial] * 2)
