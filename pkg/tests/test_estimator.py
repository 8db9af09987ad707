import numpy as np
import pytest
from sklearn.base import clone

from mf2summ.errors import ContractError
from mf2summ.estimator import VideoSummarizer, check_feature_pair


def _samples(rng, n=2, t=40, d_v=8, d_a=4):
    X, y = [], []
    for _ in range(n):
        visual = rng.normal(size=(t, d_v))
        audio = rng.normal(size=(t, d_a))
        scores = np.clip(rng.normal(0.1, 0.02, size=(2, t)), 0, 1)
        start = int(rng.integers(2, t - 6))
        visual[start : start + 4] += 3.0
        audio[start : start + 4] += 3.0
        scores[:, start : start + 4] = 0.9
        X.append((visual, audio))
        y.append(scores)
    return X, y


def test_check_feature_pair_validations():
    with pytest.raises(ContractError):
        check_feature_pair(np.zeros((3, 2)))
    with pytest.raises(ContractError):
        check_feature_pair((np.zeros(3), np.zeros((3, 2))))
    with pytest.raises(ContractError):
        check_feature_pair((np.zeros((3, 2)), np.zeros((4, 2))))
    with pytest.raises(ContractError):
        check_feature_pair((np.full((3, 2), np.nan), np.zeros((3, 2))))


def test_get_set_params_and_clone():
    est = VideoSummarizer(d_model=16, epochs=5)
    params = est.get_params()
    assert params["d_model"] == 16
    est2 = clone(est)
    assert est2.get_params() == params
    est.set_params(epochs=7)
    assert est.epochs == 7


def test_fit_predict_masks():
    rng = np.random.default_rng(0)
    X, y = _samples(rng)
    est = VideoSummarizer(d_model=8, n_heads=2, head_hidden=8, epochs=3, lr=1e-3, seed=1)
    est.fit(X, y)
    masks = est.predict(X)
    assert len(masks) == len(X)
    for (visual, _), mask in zip(X, masks):
        t = visual.shape[0]
        assert mask.dtype == bool and mask.shape == (t,)
        assert mask.sum() <= int(np.floor(0.15 * t))


def test_predict_before_fit():
    with pytest.raises(ContractError):
        VideoSummarizer().predict([(np.zeros((4, 2)), np.zeros((4, 2)))])


def test_score_returns_mean_max_f():
    rng = np.random.default_rng(2)
    X, y = _samples(rng, n=1)
    est = VideoSummarizer(d_model=8, n_heads=2, head_hidden=8, epochs=2, lr=1e-3, seed=0)
    est.fit(X, y)
    score = est.score(X, y)
    assert 0.0 <= score <= 1.0


def test_fit_deterministic():
    rng = np.random.default_rng(3)
    X, y = _samples(rng, n=1)
    a = VideoSummarizer(d_model=8, n_heads=2, head_hidden=8, epochs=2, lr=1e-3, seed=5).fit(X, y)
    b = VideoSummarizer(d_model=8, n_heads=2, head_hidden=8, epochs=2, lr=1e-3, seed=5).fit(X, y)
    for name in a.params_:
        assert a.params_[name].data.tobytes() == b.params_[name].data.tobytes()
