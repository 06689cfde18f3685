import json

import numpy as np
import pytest

from hallforce.errors import DomainError
from hallforce.inverse import gru as G


def random_problem(rng, width=3, hidden=4, layers=2, T=5, B=2):
    p = G.init_params(width, hidden, layers, rng)
    for k in p:
        p[k] = p[k] + rng.normal(0, 0.3, p[k].shape)
    x = rng.normal(size=(T, B, width))
    y = rng.normal(size=(T, B, 2))
    h0 = rng.normal(size=(layers, B, hidden)) * 0.5
    return p, x, y, h0


@pytest.mark.parametrize("layers, width", [(1, 3), (2, 3), (2, 2)])
def test_gradient_check(rng, layers, width):
    p, x, y, h0 = random_problem(rng, width=width, layers=layers)
    assert G.gradient_check(p, layers, x, y, h0) < 1e-4


def test_gradient_check_zero_state(rng):
    p, x, y, _ = random_problem(rng)
    assert G.gradient_check(p, 2, x, y, None) < 1e-4


def test_nll_minimum():
    y = np.zeros((3, 1, 2))
    out = np.zeros((3, 1, 4))
    assert G.nll(out, y) == pytest.approx(0.5 * np.log(2 * np.pi))
    wider = out.copy()
    wider[..., 2:] = 0.5
    assert G.nll(wider, y) > G.nll(out, y)


def test_state_carry_matches_full_sequence(rng):
    p, x, _, _ = random_problem(rng, T=8, B=1)
    full, hT, _ = G.forward_normalized(p, 2, x)
    a, h, _ = G.forward_normalized(p, 2, x[:3])
    b, h2, _ = G.forward_normalized(p, 2, x[3:], h)
    assert np.allclose(np.concatenate([a, b]), full)
    assert np.allclose(h2, hT)


def toy_record(n=4000, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / 100
    f = np.stack([100 * np.sin(t), 80 * np.cos(0.7 * t)], axis=1)
    r = np.stack([f[:, 0] * 0.5, f[:, 1] * 0.4, 50 + 0.01 * f[:, 0]], axis=1) + rng.normal(0, 0.1, (n, 3))
    return r, f


def test_training_reduces_loss_and_is_deterministic():
    r, f = toy_record()
    cfg = G.GRUConfig(hidden=8, window=50, epochs=6, batch=8, seed=1)
    a = G.gru_train_arrays(r, f, cfg)
    b = G.gru_train_arrays(r, f, cfg)
    assert a.history[-1] < a.history[0]
    assert a.history == b.history
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    mu, sigma, _ = G.gru_forward(a, r[:200])
    assert mu.shape == (200, 2) and np.all(sigma > 0)


def test_streaming_equals_sequence():
    r, f = toy_record(600)
    m = G.gru_train_arrays(r, f, G.GRUConfig(hidden=4, window=20, epochs=1, batch=4))
    mu, _, _ = G.gru_forward(m, r[:50])
    state = None
    for i in range(50):
        step, _, state = G.gru_forward(m, r[i:i + 1], state)
        assert np.allclose(step[0], mu[i])


def test_two_axis_model_uses_bx_bz():
    r, f = toy_record(600)
    m = G.gru_train_arrays(r, f, G.GRUConfig(hidden=4, window=20, epochs=1, batch=4, input_axes=2))
    assert m.input_axes == (0, 2)
    a, _, _ = G.gru_forward(m, r[:10])
    b, _, _ = G.gru_forward(m, r[:10, [0, 2]])
    assert np.allclose(a, b)
    with pytest.raises(DomainError):
        G.gru_forward(m, r[:10, :1])


def test_serialization_round_trip():
    r, f = toy_record(600)
    m = G.gru_train_arrays(r, f, G.GRUConfig(hidden=4, window=20, epochs=1, batch=4))
    back = G.GRUModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert np.array_equal(G.gru_forward(back, r[:30])[0], G.gru_forward(m, r[:30])[0])
    with pytest.raises(DomainError):
        G.GRUModel.from_dict({**m.to_dict(), "format": "x"})
    bad = m.to_dict()
    bad["params"]["bo"] = [float("nan")] * 4
    with pytest.raises(DomainError):
        G.GRUModel.from_dict(bad)


@pytest.mark.parametrize("kw", [dict(input_axes=1), dict(hidden=0), dict(epochs=-1), dict(learning_rate=0.0)])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        G.GRUConfig(**kw)


def test_training_input_validation():
    r, f = toy_record(600)
    with pytest.raises(DomainError):
        G.gru_train_arrays(r[:50], f[:50], G.GRUConfig(window=100))
    with pytest.raises(DomainError):
        G.gru_train_arrays(r, f[:-1])
    with pytest.raises(DomainError):
        G.gru_train_arrays(r, np.tile([1.0, 2.0], (600, 1)))
