import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lobkit import baseline as bl, forecast_eval as fe
from lobkit.errors import EmptyClass, NonFiniteLoss, ShapeMismatch


def separable(n=300, d=6, seed=0):
    """Three well separated Gaussian blobs."""
    rng = np.random.default_rng(seed)
    y = np.repeat([-1, 0, 1], n // 3)
    centers = rng.normal(size=(3, d)) * 4
    return centers[y + 1] + rng.normal(scale=0.5, size=(len(y), d)), y


@given(arrays(np.float64, (4, 3), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_shift_invariance(z, c):
    np.testing.assert_allclose(bl.softmax(z + c), bl.softmax(z), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(bl.softmax(z).sum(axis=1), 1.0)


def test_zero_epochs_predict_uniform():
    x, y = separable()
    model = bl.train(x, y, epochs=0)
    assert np.all(bl.predict(model, x) == 1 / 3)
    assert bl.predict(bl.LinearModel.zeros(6), x[0]).tolist() == [1 / 3] * 3


def test_probabilities_sum_to_one():
    x, y = separable()
    model = bl.train(x, y, epochs=2)
    p = bl.predict(model, np.random.default_rng(1).normal(size=(50, 6)) * 10)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(40, 12))
    y = rng.integers(0, 3, 40)
    w = rng.normal(scale=0.3, size=(3, 12))
    b = rng.normal(scale=0.3, size=3)
    _, gw, gb = bl.loss_and_grad(w, b, x, y, l2=0.01)
    h = 1e-6
    for _ in range(20):
        i, j = rng.integers(0, 3), rng.integers(0, 12)
        wp, wm = w.copy(), w.copy()
        wp[i, j] += h
        wm[i, j] -= h
        fd = (bl.loss_and_grad(wp, b, x, y, 0.01)[0] - bl.loss_and_grad(wm, b, x, y, 0.01)[0]) / (2 * h)
        assert abs(fd - gw[i, j]) <= 1e-4 * max(abs(fd), 1e-8)
    for i in range(3):
        bp, bm = b.copy(), b.copy()
        bp[i] += h
        bm[i] -= h
        fd = (bl.loss_and_grad(w, bp, x, y, 0.01)[0] - bl.loss_and_grad(w, bm, x, y, 0.01)[0]) / (2 * h)
        assert abs(fd - gb[i]) <= 1e-4 * max(abs(fd), 1e-8)


def test_separable_training_accuracy():
    x, y = separable()
    model = bl.train(x, y, epochs=30, lr=0.1)
    acc = np.mean(fe.hard_predictions(bl.predict(model, x)) == y)
    assert acc >= 0.95


def test_epoch_losses_do_not_increase():
    x, y = separable(seed=3)
    losses = bl.train(x, y, epochs=15, lr=0.05).meta["epoch_losses"]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_fixed_seed_is_bit_identical():
    x, y = separable()
    a = bl.train(x, y, epochs=3, seed=5)
    b = bl.train(x, y, epochs=3, seed=5)
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias.tobytes() == b.bias.tobytes()
    c = bl.train(x, y, epochs=3, seed=6)
    assert a.weights.tobytes() != c.weights.tobytes()


def test_training_errors():
    x, y = separable()
    with pytest.raises(EmptyClass):
        bl.train(x[y != 0], y[y != 0])
    bad = x.copy()
    bad[0, 0] = np.inf
    with pytest.raises(NonFiniteLoss), np.errstate(invalid="ignore"):
        bl.train(bad, y, epochs=1)


def test_checkpoint_round_trip(tmp_path):
    x, y = separable()
    model = bl.train(x, y, epochs=2, seed=1, l2=0.001)
    model.save(tmp_path / "m.bin")
    back = bl.LinearModel.load(tmp_path / "m.bin")
    assert back.weights.tobytes() == model.weights.tobytes()
    assert back.bias.tobytes() == model.bias.tobytes()
    assert back.meta == model.meta


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        bl.predict(bl.LinearModel.zeros(6), np.zeros((2, 5)))


def test_windows_are_flattened():
    model = bl.LinearModel.zeros(100 * 40)
    assert bl.predict(model, np.zeros((7, 100, 40))).shape == (7, 3)
    assert bl.predict(model, np.zeros((100, 40))).shape == (3,)


def test_prediction_file_is_lossless(tmp_path):
    x, y = separable()
    probs = bl.predict(bl.train(x, y, epochs=2), x)
    fe.write_predictions(tmp_path / "p.csv", np.arange(len(x)), probs)
    _, back = fe.read_predictions(tmp_path / "p.csv")
    assert back.tobytes() == probs.tobytes()
