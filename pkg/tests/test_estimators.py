import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vecot.estimators import TransportInterpolator, W1Distance
from vecot.exceptions import BadGamma, BadTimeGrid, MarginalMismatch
from vecot.graph import complete_graph, layered_product, path_graph
from vecot.validation import check_gamma, check_mass, check_n_t, check_times, frame_times


def test_interpolator_fit_transform(k2):
    est = TransportInterpolator(k2, n_t=64).fit([0.9, 0.1], [0.1, 0.9])
    assert est.distance_ == pytest.approx(2 * np.arcsin(0.8), rel=0.02)
    out = est.transform([0.0, 0.5, 1.0])
    np.testing.assert_allclose(out[0], [0.9, 0.1])
    np.testing.assert_allclose(out[1], [0.5, 0.5], atol=1e-6)
    np.testing.assert_allclose(out[2], [0.1, 0.9])


def test_interpolator_vector_shape():
    L = layered_product(path_graph(3), complete_graph(2), 2)
    mu = np.array([[0.3, 0.1, 0.1], [0.2, 0.2, 0.1]])
    out = TransportInterpolator(L, gamma=0.5, n_t=8).fit_transform(mu, mu[:, ::-1], [0.5])
    assert out.shape == (1, 2, 3)


def test_params_and_clone(k2):
    est = TransportInterpolator(k2, variant="asymmetric", n_t=16)
    params = est.get_params()
    assert params["variant"] == "asymmetric" and params["n_t"] == 16
    assert clone(est).set_params(n_t=8).n_t == 8


def test_not_fitted(k2):
    with pytest.raises(NotFittedError):
        TransportInterpolator(k2).transform([0.5])


def test_input_validation(k2):
    with pytest.raises(MarginalMismatch):
        TransportInterpolator(k2).fit([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(BadTimeGrid):
        TransportInterpolator(k2, n_t=1).fit([0.5, 0.5], [0.5, 0.5])


def test_w1_estimator():
    est = W1Distance(path_graph(3), costs=[1.0, 1.0]).fit([1, 0, 0], [0, 0, 1])
    assert est.distance_ == pytest.approx(2.0)
    f = est.potentials_
    assert est.transform(np.eye(3)).tolist() == pytest.approx(f.tolist())
    vec = W1Distance(path_graph(2), mutation=complete_graph(2), gamma=0.5).fit([[1, 0], [0, 0]], [[0, 0], [1, 0]])
    assert vec.distance_ == pytest.approx(0.5, abs=1e-9)


def test_validation_helpers():
    assert check_mass([0.25, 0.75], 2).shape == (2,)
    assert check_mass(np.full(6, 1 / 6), 3, channels=2).shape == (2, 3)
    with pytest.raises(BadGamma):
        check_gamma("x")
    with pytest.raises(BadGamma):
        check_gamma(-1)
    assert check_n_t(4.0) == 4
    with pytest.raises(ValueError):
        check_times([0.5, 1.5])
    np.testing.assert_allclose(frame_times(9), np.arange(1, 10) / 10)
